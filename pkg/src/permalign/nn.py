"""Multilayer perceptrons as plain numpy arrays.

A model is a list of (weight, bias) pairs; hidden layers use ReLU, the output
layer is affine. Everything operates on float64 arrays and is deterministic
given the seed. Gradients and Hessian-vector products are hand-derived
backprop / forward-over-reverse recursions, so no autodiff framework is
involved anywhere.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, FormatError
from .rng import STREAM_INIT, STREAM_SHUFFLE, stream

_CHECKPOINT_MAGIC = b"NNPK"
_CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    """Weights and biases of an MLP. weights[l] has shape (d_out, d_in),
    biases[l] has shape (d_out,). Layer l maps layer_dims[l] -> layer_dims[l+1].
    """

    weights: list
    biases: list

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def layer_dims(self) -> list:
        dims = [self.weights[0].shape[1]]
        for w in self.weights:
            dims.append(w.shape[0])
        return dims

    def copy(self) -> "ModelParams":
        return ModelParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def check_model(m: ModelParams, name: str = "model") -> None:
    """Validate shapes chain correctly and all entries are finite."""
    if not m.weights or len(m.weights) != len(m.biases):
        raise ValueError(f"{name}: weights/biases length mismatch or empty")
    for l, (w, b) in enumerate(zip(m.weights, m.biases)):
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ValueError(
                f"{name}: layer {l} shapes {w.shape} / {b.shape} inconsistent"
            )
        if l > 0 and w.shape[1] != m.weights[l - 1].shape[0]:
            raise ValueError(
                f"{name}: layer {l} input dim {w.shape[1]} does not match "
                f"previous output dim {m.weights[l - 1].shape[0]}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError(f"{name}: layer {l} contains non-finite entries")


@dataclass
class ActivationTrace:
    """Per-layer activations for a batch: zs[0] is the input, zs[l] for
    0 < l < n_layers are hidden post-ReLU activations, zs[-1] the logits.
    Each entry has shape (batch, width)."""

    zs: list


@dataclass
class EvalSet:
    """A batch of examples plus the loss to score them with.

    loss_kind is "cross_entropy" (labels required) or "mse". For mse,
    targets provides the regression target matrix; when absent, one-hot
    vectors built from labels are used.
    """

    inputs: np.ndarray
    labels: np.ndarray = None
    loss_kind: str = "cross_entropy"
    targets: np.ndarray = None

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(np.asarray(self.inputs, dtype=np.float64))
        if self.inputs.ndim != 2:
            raise ValueError(f"inputs must be 2-D, got shape {self.inputs.shape}")
        if self.inputs.shape[0] == 0:
            raise ValueError("eval set must contain at least one sample")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
            if self.labels.shape[0] != self.inputs.shape[0]:
                raise ValueError("labels length does not match inputs")
        if self.targets is not None:
            self.targets = np.ascontiguousarray(
                np.asarray(self.targets, dtype=np.float64)
            )
            if self.targets.shape[0] != self.inputs.shape[0]:
                raise ValueError("targets length does not match inputs")
        if self.loss_kind not in ("cross_entropy", "mse"):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        if self.loss_kind == "cross_entropy" and self.labels is None:
            raise ValueError("cross_entropy requires labels")
        if self.loss_kind == "mse" and self.targets is None and self.labels is None:
            raise ValueError("mse requires targets or labels")


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 512
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def init_model(layer_dims, seed: int) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases,
    one independent stream per layer."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"layer_dims must list >= 2 positive sizes, got {dims}")
    weights, biases = [], []
    for l in range(len(dims) - 1):
        gen = stream(seed, STREAM_INIT, l)
        bound = 1.0 / np.sqrt(dims[l])
        weights.append(gen.uniform(-bound, bound, size=(dims[l + 1], dims[l])))
        biases.append(gen.uniform(-bound, bound, size=dims[l + 1]))
    return ModelParams(weights=weights, biases=biases)


def forward(model: ModelParams, x: np.ndarray) -> ActivationTrace:
    """Run the network on a batch, keeping every layer's activations."""
    z = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if z.ndim == 1:
        z = z[None, :]
    zs = [z]
    last = model.n_layers - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = z @ w.T + b
        z = a if l == last else np.maximum(a, 0.0)
        zs.append(z)
    return ActivationTrace(zs=zs)


def _targets_of(eval_set: EvalSet, width: int) -> np.ndarray:
    if eval_set.targets is not None:
        return eval_set.targets
    t = np.zeros((eval_set.inputs.shape[0], width))
    t[np.arange(t.shape[0]), eval_set.labels] = 1.0
    return t


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def loss_value(model: ModelParams, eval_set: EvalSet) -> float:
    """Mean loss over the batch (no gradient)."""
    logits = forward(model, eval_set.inputs).zs[-1]
    return _loss_from_logits(logits, eval_set)


def _loss_from_logits(logits: np.ndarray, eval_set: EvalSet) -> float:
    n = logits.shape[0]
    if eval_set.loss_kind == "cross_entropy":
        m = np.max(logits, axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.sum(np.exp(logits - m), axis=1))
        return float(np.mean(lse - logits[np.arange(n), eval_set.labels]))
    diff = logits - _targets_of(eval_set, logits.shape[1])
    return float(0.5 * np.sum(diff * diff) / n)


def evaluate(model: ModelParams, eval_set: EvalSet):
    """Return (mean loss, accuracy). Accuracy is nan when labels are absent."""
    logits = forward(model, eval_set.inputs).zs[-1]
    loss = _loss_from_logits(logits, eval_set)
    if eval_set.labels is None:
        return loss, float("nan")
    acc = float(np.mean(np.argmax(logits, axis=1) == eval_set.labels))
    return loss, acc


def loss_and_grad(model: ModelParams, eval_set: EvalSet):
    """Mean loss and its gradient (as a ModelParams of the same shape)."""
    trace = forward(model, eval_set.inputs)
    zs = trace.zs
    logits = zs[-1]
    n = logits.shape[0]
    loss = _loss_from_logits(logits, eval_set)
    if eval_set.loss_kind == "cross_entropy":
        p = _softmax(logits)
        y = np.zeros_like(p)
        y[np.arange(n), eval_set.labels] = 1.0
        delta = (p - y) / n
    else:
        delta = (logits - _targets_of(eval_set, logits.shape[1])) / n
    gw = [None] * model.n_layers
    gb = [None] * model.n_layers
    for l in range(model.n_layers - 1, -1, -1):
        gw[l] = delta.T @ zs[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ model.weights[l]) * (zs[l] > 0.0)
    return loss, ModelParams(weights=gw, biases=gb)


def hvp(model: ModelParams, eval_set: EvalSet, vec: ModelParams) -> ModelParams:
    """Hessian-vector product of the batch loss at `model` with `vec`,
    by forward-over-reverse propagation. Exact up to roundoff; cost is a
    small constant multiple of one gradient."""
    zs = forward(model, eval_set.inputs).zs
    logits = zs[-1]
    n = logits.shape[0]
    last = model.n_layers - 1
    # forward sweep of directional derivatives
    rz = np.zeros_like(zs[0])
    rzs = [rz]
    for l in range(model.n_layers):
        ra = zs[l] @ vec.weights[l].T + rz @ model.weights[l].T + vec.biases[l]
        if l == last:
            rz = ra
        else:
            rz = ra * (zs[l + 1] > 0.0)
        rzs.append(rz)
    ra_last = rzs[-1]
    if eval_set.loss_kind == "cross_entropy":
        p = _softmax(logits)
        y = np.zeros_like(p)
        y[np.arange(n), eval_set.labels] = 1.0
        delta = (p - y) / n
        inner = np.sum(p * ra_last, axis=1, keepdims=True)
        rdelta = (p * ra_last - p * inner) / n
    else:
        delta = (logits - _targets_of(eval_set, logits.shape[1])) / n
        rdelta = ra_last / n
    hw = [None] * model.n_layers
    hb = [None] * model.n_layers
    for l in range(model.n_layers - 1, -1, -1):
        hw[l] = rdelta.T @ zs[l] + delta.T @ rzs[l]
        hb[l] = rdelta.sum(axis=0)
        if l > 0:
            mask = zs[l] > 0.0
            rdelta = (rdelta @ model.weights[l] + delta @ vec.weights[l]) * mask
            delta = (delta @ model.weights[l]) * mask
    return ModelParams(weights=hw, biases=hb)


# -- parameter-space arithmetic ----------------------------------------------


def params_combine(a: ModelParams, b: ModelParams, ca: float, cb: float) -> ModelParams:
    """ca * a + cb * b, elementwise over all layers."""
    return ModelParams(
        weights=[ca * wa + cb * wb for wa, wb in zip(a.weights, b.weights)],
        biases=[ca * ba + cb * bb for ba, bb in zip(a.biases, b.biases)],
    )


def params_dot(a: ModelParams, b: ModelParams) -> float:
    out = 0.0
    for wa, wb in zip(a.weights, b.weights):
        out += float(np.sum(wa * wb))
    for ba, bb in zip(a.biases, b.biases):
        out += float(np.sum(ba * bb))
    return out


def params_norm(a: ModelParams) -> float:
    return float(np.sqrt(params_dot(a, a)))


def to_vector(model: ModelParams) -> np.ndarray:
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def from_vector(layer_dims, vec: np.ndarray) -> ModelParams:
    dims = [int(d) for d in layer_dims]
    weights, biases, pos = [], [], 0
    for l in range(len(dims) - 1):
        nw = dims[l + 1] * dims[l]
        weights.append(vec[pos : pos + nw].reshape(dims[l + 1], dims[l]).copy())
        pos += nw
        biases.append(vec[pos : pos + dims[l + 1]].copy())
        pos += dims[l + 1]
    if pos != vec.size:
        raise ValueError(f"vector length {vec.size} does not match dims {dims}")
    return ModelParams(weights=weights, biases=biases)


# -- training ----------------------------------------------------------------


def train(layer_dims, config: TrainConfig, inputs, labels=None, *,
          loss_kind: str = "cross_entropy", targets=None, record=None) -> ModelParams:
    """Minibatch training from a fresh init seeded by config.seed.

    Shuffling draws an independent stream per epoch, so run length does not
    perturb earlier epochs. Final parameters are snapped to the float32 grid
    so a saved checkpoint round-trips bit-exactly.

    If `record` is a list, one dict per epoch with the mean training loss is
    appended. Raises DivergenceError when a non-finite loss shows up.
    """
    data = EvalSet(inputs=inputs, labels=labels, loss_kind=loss_kind, targets=targets)
    model = init_model(layer_dims, config.seed)
    n = data.inputs.shape[0]
    bs = min(config.batch_size, n)
    mw = [np.zeros_like(w) for w in model.weights]
    vw = [np.zeros_like(w) for w in model.weights]
    mb = [np.zeros_like(b) for b in model.biases]
    vb = [np.zeros_like(b) for b in model.biases]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    for epoch in range(config.epochs):
        order = stream(config.seed, STREAM_SHUFFLE, epoch).permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            batch = EvalSet(
                inputs=data.inputs[idx],
                labels=None if data.labels is None else data.labels[idx],
                loss_kind=data.loss_kind,
                targets=None if data.targets is None else data.targets[idx],
            )
            loss, grad = loss_and_grad(model, batch)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"training diverged at epoch {epoch}: loss={loss}"
                )
            total += loss * idx.size
            if config.weight_decay != 0.0:
                for l in range(model.n_layers):
                    grad.weights[l] += config.weight_decay * model.weights[l]
                    grad.biases[l] += config.weight_decay * model.biases[l]
            if config.optimizer == "sgd":
                for l in range(model.n_layers):
                    model.weights[l] -= config.learning_rate * grad.weights[l]
                    model.biases[l] -= config.learning_rate * grad.biases[l]
            else:
                step += 1
                c1 = 1.0 - b1 ** step
                c2 = 1.0 - b2 ** step
                for l in range(model.n_layers):
                    mw[l] = b1 * mw[l] + (1 - b1) * grad.weights[l]
                    vw[l] = b2 * vw[l] + (1 - b2) * grad.weights[l] ** 2
                    model.weights[l] -= config.learning_rate * (mw[l] / c1) / (
                        np.sqrt(vw[l] / c2) + eps
                    )
                    mb[l] = b1 * mb[l] + (1 - b1) * grad.biases[l]
                    vb[l] = b2 * vb[l] + (1 - b2) * grad.biases[l] ** 2
                    model.biases[l] -= config.learning_rate * (mb[l] / c1) / (
                        np.sqrt(vb[l] / c2) + eps
                    )
        if record is not None:
            record.append({"epoch": epoch, "loss": total / n})
    for l in range(model.n_layers):
        model.weights[l] = model.weights[l].astype(np.float32).astype(np.float64)
        model.biases[l] = model.biases[l].astype(np.float32).astype(np.float64)
    return model


# -- checkpoint format -------------------------------------------------------
#
# Layout (all integers little-endian unless noted):
#   bytes 0..3   magic "NNPK"
#   bytes 4..7   format version, big-endian uint32 (currently 1)
#   bytes 8..11  manifest length M, uint32
#   M bytes      UTF-8 JSON manifest: version, activation, layer_dims,
#                seed, notes
#   payload      per layer: weight matrix row-major float32, then bias float32


def save_checkpoint(model: ModelParams, path, seed=None, notes: str = "") -> None:
    check_model(model, "checkpoint model")
    manifest = {
        "version": _CHECKPOINT_VERSION,
        "activation": "relu",
        "layer_dims": model.layer_dims,
        "seed": seed,
        "notes": notes,
    }
    blob = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack(">I", _CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def read_manifest(path) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8 or head[:4] != _CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not a model checkpoint (bad magic)")
        version = struct.unpack(">I", head[4:8])[0]
        if version != _CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
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
    for key in ("version", "activation", "layer_dims"):
        if key not in manifest:
            raise FormatError(f"{path}: manifest missing key {key!r}")
    if manifest["activation"] != "relu":
        raise FormatError(
            f"{path}: unsupported activation {manifest['activation']!r}"
        )
    return manifest


def load_checkpoint(path) -> ModelParams:
    manifest = read_manifest(path)
    dims = [int(d) for d in manifest["layer_dims"]]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise FormatError(f"{path}: bad layer_dims {dims}")
    with open(path, "rb") as fh:
        fh.seek(8)
        (mlen,) = struct.unpack("<I", fh.read(4))
        fh.seek(12 + mlen)
        weights, biases = [], []
        for l in range(len(dims) - 1):
            nw = dims[l + 1] * dims[l] * 4
            raw = fh.read(nw)
            if len(raw) < nw:
                raise FormatError(f"{path}: truncated weights for layer {l}")
            weights.append(
                np.frombuffer(raw, dtype="<f4")
                .reshape(dims[l + 1], dims[l])
                .astype(np.float64)
            )
            raw = fh.read(dims[l + 1] * 4)
            if len(raw) < dims[l + 1] * 4:
                raise FormatError(f"{path}: truncated bias for layer {l}")
            biases.append(np.frombuffer(raw, dtype="<f4").astype(np.float64))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after last layer")
    model = ModelParams(weights=weights, biases=biases)
    check_model(model, str(path))
    return model
