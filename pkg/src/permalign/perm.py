"""Hidden-unit permutations of MLPs.

A permutation is stored as one index vector per hidden layer. The vector p
encodes the matrix P with (P x)[i] = x[p[i]]; applying it to a model as

    W'_l = P_l W_l P_{l-1}^T      b'_l = P_l b_l

(with identity at the input and output boundaries) relabels hidden units
without changing the function the network computes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ModelParams, check_model
from .rng import stream


def as_perm(vec, n: int, name: str = "perm") -> np.ndarray:
    """Validate an index vector as a permutation of range(n)."""
    p = np.asarray(vec, dtype=np.int64).ravel()
    if p.shape[0] != n:
        raise ValueError(f"{name} has length {p.shape[0]}, expected {n}")
    if not np.array_equal(np.sort(p), np.arange(n)):
        raise ValueError(f"{name} is not a permutation of range({n})")
    return p


@dataclass
class Permutation:
    """per_layer[l] permutes hidden layer l+1 of a model (the layer fed by
    weight matrix l). A model with k weight matrices has k-1 entries."""

    per_layer: list

    def __post_init__(self):
        self.per_layer = [
            as_perm(p, len(np.asarray(p).ravel()), f"per_layer[{i}]")
            for i, p in enumerate(self.per_layer)
        ]

    @property
    def widths(self) -> list:
        return [p.shape[0] for p in self.per_layer]

    def copy(self) -> "Permutation":
        return Permutation(per_layer=[p.copy() for p in self.per_layer])


def identity_perm(widths) -> Permutation:
    return Permutation(per_layer=[np.arange(int(w), dtype=np.int64) for w in widths])


def random_perm(widths, seed: int, sub: int = 0) -> Permutation:
    from .rng import STREAM_FIXTURE

    gen = stream(seed, STREAM_FIXTURE, sub)
    return Permutation(
        per_layer=[gen.permutation(int(w)).astype(np.int64) for w in widths]
    )


def is_identity(pi: Permutation) -> bool:
    return all(np.array_equal(p, np.arange(p.shape[0])) for p in pi.per_layer)


def invert(pi: Permutation) -> Permutation:
    return Permutation(per_layer=[np.argsort(p) for p in pi.per_layer])


def compose(pi: Permutation, rho: Permutation) -> Permutation:
    """Permutation whose matrix is P @ R per layer (apply rho, then pi).
    Index form: out[i] = rho[pi[i]]."""
    if pi.widths != rho.widths:
        raise ValueError(f"width mismatch: {pi.widths} vs {rho.widths}")
    return Permutation(
        per_layer=[r[p] for p, r in zip(pi.per_layer, rho.per_layer)]
    )


def perm_matrix(p: np.ndarray) -> np.ndarray:
    """Dense matrix of an index vector: P[i, p[i]] = 1."""
    p = as_perm(p, np.asarray(p).size)
    m = np.zeros((p.shape[0], p.shape[0]))
    m[np.arange(p.shape[0]), p] = 1.0
    return m


def apply_perm(pi: Permutation, model: ModelParams) -> ModelParams:
    """Relabel hidden units of `model` by `pi`; function-preserving."""
    check_model(model)
    hidden = model.layer_dims[1:-1]
    if len(pi.per_layer) != len(hidden):
        raise ValueError(
            f"permutation has {len(pi.per_layer)} layers, model has {len(hidden)}"
        )
    for l, (p, w) in enumerate(zip(pi.per_layer, hidden)):
        if p.shape[0] != w:
            raise ValueError(
                f"per_layer[{l}] length {p.shape[0]} does not match width {w}"
            )
    out = model.copy()
    n = model.n_layers
    for l in range(n):
        if l < n - 1:
            p_out = pi.per_layer[l]
            out.weights[l] = out.weights[l][p_out, :]
            out.biases[l] = out.biases[l][p_out]
        if l > 0:
            p_in = pi.per_layer[l - 1]
            out.weights[l] = out.weights[l][:, p_in]
    return ModelParams(
        weights=[np.ascontiguousarray(w) for w in out.weights],
        biases=[np.ascontiguousarray(b) for b in out.biases],
    )


def perm_to_json(pi: Permutation) -> dict:
    return {"per_layer": [p.tolist() for p in pi.per_layer]}


def perm_from_json(doc: dict) -> Permutation:
    if not isinstance(doc, dict) or "per_layer" not in doc:
        raise ValueError("permutation document must have a per_layer key")
    layers = doc["per_layer"]
    if not isinstance(layers, list):
        raise ValueError("per_layer must be a list of index vectors")
    return Permutation(per_layer=[np.asarray(p, dtype=np.int64) for p in layers])
