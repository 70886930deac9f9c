"""Deterministic random streams.

Every stochastic routine in the package draws from a counter-based Philox
generator keyed by (seed, stream, substream).  Distinct stream ids decouple
the consumers: adding a draw in one place never shifts the values seen by
another, so experiment outputs stay reproducible under code evolution.
"""

from __future__ import annotations

import numpy as np

# stream ids; keep stable forever
STREAM_INIT = 1  # parameter initialisation, substream = layer index
STREAM_SHUFFLE = 2  # minibatch order, substream = epoch
STREAM_DATA = 3  # synthetic dataset generation
STREAM_MATCH = 4  # stochastic matching internals (minibatch picks etc.)
STREAM_FIXTURE = 5  # test fixtures and demo scripts

_MASK32 = (1 << 32) - 1
_MASK64 = (1 << 64) - 1


def stream(seed: int, stream_id: int, sub: int = 0) -> np.random.Generator:
    """Return an independent generator for (seed, stream_id, sub)."""
    key = np.array(
        [
            np.uint64(int(seed) & _MASK64),
            np.uint64(((int(stream_id) & _MASK32) << 32) | (int(sub) & _MASK32)),
        ],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
