"""Circular convolution as structured matrices, and its frequency-domain SVD.

A kernel K indexed (p, q, c, d) — spatial row, spatial col, output channel,
input channel — acting by circular (wrap-around) convolution on m-channel
n x n images corresponds to a dense mn^2 x mn^2 matrix M whose (c, d) block
is doubly circulant. The 2-D DFT diagonalizes every such block with one
shared unitary, so M's singular values split into n^2 independent m x m
complex problems, and channel-permutation matching can be scored per
frequency. Dense construction is guarded to small sizes; everything here is
validated against the dense path in the test suite.

vec layout: channel-major, vec(X)[d*n^2 + r*n + i] = X[d, r, i].
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .linalg import svd_complex
from .perm import as_perm

_DENSE_GUARD = 4096

_KERNEL_MAGIC = b"NNCK"
_KERNEL_VERSION = 1


@dataclass
class ConvKernel:
    """k has shape (n, n, m, m) = (spatial row, spatial col, out channel,
    in channel). Kernels smaller than n x n must be zero-padded by the
    caller before construction."""

    k: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        self.k = np.ascontiguousarray(np.asarray(self.k, dtype=np.float64))
        if self.k.shape != (self.n, self.n, self.m, self.m):
            raise ValueError(
                f"kernel shape {self.k.shape} does not match "
                f"(n, n, m, m) = ({self.n}, {self.n}, {self.m}, {self.m})"
            )
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if not np.all(np.isfinite(self.k)):
            raise ValueError("kernel contains non-finite entries")


@dataclass
class ConvMatrix:
    m_dense: np.ndarray
    n: int
    m: int

    def block(self, c: int, d: int) -> np.ndarray:
        """The (c, d) channel block, an n^2 x n^2 doubly circulant matrix."""
        nn = self.n * self.n
        return self.m_dense[c * nn : (c + 1) * nn, d * nn : (d + 1) * nn]


@dataclass
class SpectralBlocks:
    """g[c, d, w]: the w-th diagonal entry of the DFT-conjugated (c, d)
    block. Frequencies are indexed w = a*n + b for the 2-D frequency
    pair (a, b)."""

    g: np.ndarray
    n: int
    m: int


def _guard(n: int, m: int) -> None:
    if m * n * n > _DENSE_GUARD:
        raise ValueError(
            f"dense path needs m*n^2 <= {_DENSE_GUARD}, got {m * n * n}"
        )


def build_conv_matrix(kernel: ConvKernel) -> ConvMatrix:
    """Dense matrix of the circular convolution:

        Y[c, r, i] = sum_{d,p,q} K[p, q, c, d] X[d, (r+p)%n, (i+q)%n]

    so M[c*n^2 + r*n + i, d*n^2 + r'*n + i'] = K[(r'-r)%n, (i'-i)%n, c, d].
    """
    n, m = kernel.n, kernel.m
    _guard(n, m)
    nn = n * n
    out = np.zeros((m * nn, m * nn))
    rows = np.arange(n)
    # wrapped difference table: diff[r, r'] = (r' - r) % n
    diff = (rows[None, :] - rows[:, None]) % n
    for c in range(m):
        for d in range(m):
            kc = kernel.k[:, :, c, d]
            # block[r*n + i, r'*n + i'] = kc[(r'-r)%n, (i'-i)%n]
            block = kc[diff[:, :, None, None], diff[None, None, :, :]]
            block = block.transpose(0, 2, 1, 3).reshape(nn, nn)
            out[c * nn : (c + 1) * nn, d * nn : (d + 1) * nn] = block
    return ConvMatrix(m_dense=out, n=n, m=m)


def spectral_blocks(kernel: ConvKernel) -> SpectralBlocks:
    """Frequency response of each channel pair: for w = a*n + b,

        g[c, d, w] = sum_{p,q} K[p, q, c, d] e^{+2 pi i (a p + b q) / n}

    which is the w-th diagonal entry of Q B_{c,d} Q^* for the unitary
    Q = (F kron F)/n built from the DFT matrix F. Computed as the naive
    O(n^4) sum per channel pair; the imaginary parts are exact, not
    truncated.
    """
    n, m = kernel.n, kernel.m
    g = np.zeros((m, m, n * n), dtype=np.complex128)
    # e[a, p] = exp(+2 pi i a p / n)
    idx = np.arange(n)
    e = np.exp(2j * np.pi * np.outer(idx, idx) / n)
    for c in range(m):
        for d in range(m):
            kc = kernel.k[:, :, c, d]
            for a in range(n):
                for b in range(n):
                    g[c, d, a * n + b] = np.sum(kc * np.outer(e[a], e[b]))
    return SpectralBlocks(g=g, n=n, m=m)


def conv_singular_values(kernel: ConvKernel) -> np.ndarray:
    """All mn^2 singular values of the convolution matrix, found as the
    union over frequencies of the singular values of the m x m blocks."""
    blocks = spectral_blocks(kernel)
    n, m = kernel.n, kernel.m
    out = np.empty(m * n * n)
    for w in range(n * n):
        out[w * m : (w + 1) * m] = svd_complex(blocks.g[:, :, w]).s
    return np.sort(out)[::-1].copy()


def kernel_permute(kernel: ConvKernel, p_out, p_in) -> ConvKernel:
    """Relabel output channels by p_out and input channels by p_in. The
    dense matrix of the result is (P_out kron I) M (P_in kron I)^T."""
    p_out = as_perm(p_out, kernel.m, "p_out")
    p_in = as_perm(p_in, kernel.m, "p_in")
    k = kernel.k[:, :, p_out, :][:, :, :, p_in]
    return ConvKernel(k=np.ascontiguousarray(k), n=kernel.n, m=kernel.m)


def conv_alignment_objective(ka: ConvKernel, kb: ConvKernel,
                             p_out, p_in) -> float:
    """Channel-matching score in the frequency domain.

    Per frequency w, with SVDs G^a_w = U S V^H and G^b_w likewise, sums
    Re[ s^a_i s^b_j conj(u^a_i . P_out u^b_j)(v^a_i . P_in v^b_j) ] over all
    pairs, then over w. Equals the Frobenius inner product of the dense
    matrix of ka with the channel-permuted dense matrix of kb, so

        ||M_a - perm(M_b)||^2 = ||M_a||^2 + ||M_b||^2 - 2 * objective.

    The imaginary residue must vanish by conjugate symmetry; a residue
    above 1e-6 raises rather than being silently dropped.
    """
    if ka.n != kb.n or ka.m != kb.m:
        raise ValueError(
            f"kernel size mismatch: ({ka.n}, {ka.m}) vs ({kb.n}, {kb.m})"
        )
    p_out = as_perm(p_out, ka.m, "p_out")
    p_in = as_perm(p_in, ka.m, "p_in")
    ga = spectral_blocks(ka).g
    gb = spectral_blocks(kb).g
    total = 0.0 + 0.0j
    for w in range(ka.n * ka.n):
        ra = svd_complex(ga[:, :, w])
        rb = svd_complex(gb[:, :, w])
        ub = rb.u[p_out, :]
        vb = rb.v[p_in, :]
        alpha = ra.u.conj().T @ ub
        beta = ra.v.conj().T @ vb
        total += np.sum(np.outer(ra.s, rb.s) * np.conj(alpha) * beta)
    if abs(total.imag) > 1e-6:
        raise ArithmeticError(
            f"alignment objective has imaginary residue {total.imag:.3e}; "
            "conjugate symmetry is broken"
        )
    return float(total.real)


# -- kernel file format -------------------------------------------------------
#
# Same framing as the model checkpoint format: 4-byte magic, big-endian
# uint32 version, little-endian uint32 manifest length, JSON manifest with
# n and m, then the kernel entries as little-endian float32 in (p, q, c, d)
# C order.


def save_kernel(kernel: ConvKernel, path, notes: str = "") -> None:
    manifest = {
        "version": _KERNEL_VERSION,
        "n": kernel.n,
        "m": kernel.m,
        "notes": notes,
    }
    blob = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_KERNEL_MAGIC)
        fh.write(struct.pack(">I", _KERNEL_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(kernel.k, dtype="<f4").tobytes())


def load_kernel(path) -> ConvKernel:
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8 or head[:4] != _KERNEL_MAGIC:
            raise FormatError(f"{path}: not a kernel file (bad magic)")
        version = struct.unpack(">I", head[4:8])[0]
        if version != _KERNEL_VERSION:
            raise FormatError(f"{path}: unsupported kernel version {version}")
        raw = fh.read(4)
        if len(raw) < 4:
            raise FormatError(f"{path}: truncated manifest header")
        (mlen,) = struct.unpack("<I", raw)
        blob = fh.read(mlen)
        if len(blob) < mlen:
            raise FormatError(f"{path}: truncated manifest")
        try:
            manifest = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: manifest is not valid JSON: {exc}") from exc
        for key in ("n", "m"):
            if key not in manifest:
                raise FormatError(f"{path}: manifest missing key {key!r}")
        n, m = int(manifest["n"]), int(manifest["m"])
        count = n * n * m * m
        raw = fh.read(count * 4)
        if len(raw) < count * 4:
            raise FormatError(f"{path}: truncated kernel payload")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after kernel payload")
    k = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n, n, m, m)
    return ConvKernel(k=k, n=n, m=m)


def random_kernel(n: int, m: int, seed: int, scale: float = 1.0) -> ConvKernel:
    """Gaussian test kernel from a named stream."""
    from .rng import STREAM_FIXTURE, stream

    gen = stream(seed, STREAM_FIXTURE, 0)
    return ConvKernel(k=scale * gen.standard_normal((n, n, m, m)), n=n, m=m)
