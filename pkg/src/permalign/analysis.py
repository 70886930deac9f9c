"""Measurements on pairs and triples of models.

Barriers along the linear interpolation path, their second-order Taylor
estimates, singular-vector alignment metrics (R and its thresholded variant),
per-layer spectra, input alignment with right singular vectors, the
output-difference bound for a single layer, 2-D loss landscapes, and the
three-model merging experiment.

Convention throughout: interpolate(a, b, lam) = lam*a + (1-lam)*b, so lam=1
is the first model. Where a permutation matters, the second model is expected
to be already permuted by the caller (pass apply_perm(pi, b)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import svd
from .matching import MatchConfig, MatchReport, l2_distance, match
from .nn import (EvalSet, ModelParams, check_model, evaluate, forward,
                 from_vector, hvp, loss_and_grad, params_combine, params_dot,
                 params_norm, to_vector)
from .perm import Permutation, apply_perm, identity_perm


def _check_pair(a: ModelParams, b: ModelParams) -> None:
    check_model(a, "model a")
    check_model(b, "model b")
    if a.layer_dims != b.layer_dims:
        raise ValueError(f"architecture mismatch: {a.layer_dims} vs {b.layer_dims}")


def interpolate(a: ModelParams, b: ModelParams, lam: float) -> ModelParams:
    """lam * a + (1 - lam) * b, coordinatewise."""
    _check_pair(a, b)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    return params_combine(a, b, lam, 1.0 - lam)


# -- barriers -----------------------------------------------------------------


@dataclass
class BarrierReport:
    lambdas: np.ndarray
    losses: np.ndarray
    accuracies: np.ndarray
    barrier: float
    argmax_lambda: float
    beta: float
    split_name: str
    # headline values at the midpoint, evaluated exactly even off-grid
    midpoint_barrier: float = 0.0
    midpoint_loss: float = 0.0
    midpoint_accuracy: float = 0.0
    # accuracy variant, sign flipped so positive means degradation
    accuracy_barrier: float = 0.0
    midpoint_accuracy_barrier: float = 0.0

    def to_json(self) -> dict:
        return {
            "split_name": self.split_name,
            "lambdas": [float(x) for x in self.lambdas],
            "losses": [float(x) for x in self.losses],
            "accuracies": [float(x) for x in self.accuracies],
            "barrier": self.barrier,
            "argmax_lambda": self.argmax_lambda,
            "beta": self.beta,
            "midpoint_barrier": self.midpoint_barrier,
            "midpoint_loss": self.midpoint_loss,
            "midpoint_accuracy": self.midpoint_accuracy,
            "accuracy_barrier": self.accuracy_barrier,
            "midpoint_accuracy_barrier": self.midpoint_accuracy_barrier,
        }


def barrier(a: ModelParams, b: ModelParams, eval_set: EvalSet,
            grid_size: int = 25, split_name: str = "eval") -> BarrierReport:
    """Loss barrier along the interpolation path on a uniform lambda grid.

    barrier = max over the grid of loss(path(lam)) - the chord
    lam*loss(a) + (1-lam)*loss(b); zero at the endpoints by construction,
    and negative values are meaningful (the merged model beats the chord).
    The midpoint lam = 1/2 is always evaluated exactly, on or off grid.
    """
    _check_pair(a, b)
    if grid_size < 3:
        raise ValueError(f"grid_size must be >= 3, got {grid_size}")
    if eval_set.inputs.shape[0] == 0:
        raise ValueError("empty eval set")
    lambdas = np.linspace(0.0, 1.0, grid_size)
    losses = np.empty(grid_size)
    accs = np.empty(grid_size)
    for i, lam in enumerate(lambdas):
        losses[i], accs[i] = evaluate(interpolate(a, b, float(lam)), eval_set)
    chord_loss = lambdas * losses[-1] + (1.0 - lambdas) * losses[0]
    chord_acc = lambdas * accs[-1] + (1.0 - lambdas) * accs[0]
    gaps = losses - chord_loss
    k = int(np.argmax(gaps))
    mid_loss, mid_acc = evaluate(interpolate(a, b, 0.5), eval_set)
    acc_gaps = chord_acc - accs
    return BarrierReport(
        lambdas=lambdas,
        losses=losses,
        accuracies=accs,
        barrier=float(gaps[k]),
        argmax_lambda=float(lambdas[k]),
        beta=l2_distance(a, b),
        split_name=split_name,
        midpoint_barrier=float(mid_loss - 0.5 * (losses[0] + losses[-1])),
        midpoint_loss=float(mid_loss),
        midpoint_accuracy=float(mid_acc),
        accuracy_barrier=float(np.max(acc_gaps)) if np.all(np.isfinite(acc_gaps))
        else float("nan"),
        midpoint_accuracy_barrier=float(0.5 * (accs[0] + accs[-1]) - mid_acc),
    )


@dataclass
class TaylorEstimate:
    estimate: float
    per_lambda_terms: list  # (gradient_term, hessian_term) per grid lambda
    mu_norm_check: float
    lambdas: np.ndarray = None
    values: np.ndarray = None
    midpoint_estimate: float = 0.0
    beta: float = 0.0

    def to_json(self) -> dict:
        return {
            "estimate": self.estimate,
            "midpoint_estimate": self.midpoint_estimate,
            "beta": self.beta,
            "mu_norm_check": self.mu_norm_check,
            "lambdas": [float(x) for x in self.lambdas],
            "values": [float(x) for x in self.values],
            "per_lambda_terms": [
                [float(g), float(h)] for g, h in self.per_lambda_terms
            ],
        }


def taylor_barrier(a: ModelParams, b: ModelParams, eval_set: EvalSet,
                   grid_size: int = 25) -> TaylorEstimate:
    """Second-order estimate of the barrier from data at the endpoints only.

    With beta = ||a - b||, mu = (b - a)/beta, the estimated gap at ratio lam
    is   lam(1-lam) * [ beta mu.(grad_a - grad_b)
                        + beta^2/2 * ((1-lam) mu.H_a.mu + lam mu.H_b.mu) ].
    Costs two gradient and two Hessian-vector calls total; the cubic
    remainder is dropped. Reports the grid max and the lam = 1/2 value.
    """
    _check_pair(a, b)
    if grid_size < 3:
        raise ValueError(f"grid_size must be >= 3, got {grid_size}")
    beta = l2_distance(a, b)
    lambdas = np.linspace(0.0, 1.0, grid_size)
    if beta == 0.0:
        zeros = np.zeros(grid_size)
        return TaylorEstimate(
            estimate=0.0,
            per_lambda_terms=[(0.0, 0.0)] * grid_size,
            mu_norm_check=1.0,
            lambdas=lambdas,
            values=zeros,
            midpoint_estimate=0.0,
            beta=0.0,
        )
    mu = params_combine(b, a, 1.0 / beta, -1.0 / beta)
    _, grad_a = loss_and_grad(a, eval_set)
    _, grad_b = loss_and_grad(b, eval_set)
    g_scalar = beta * (params_dot(mu, grad_a) - params_dot(mu, grad_b))
    ha = params_dot(mu, hvp(a, eval_set, mu))
    hb = params_dot(mu, hvp(b, eval_set, mu))

    def bracket(lam):
        g = lam * (1.0 - lam) * g_scalar
        h = lam * (1.0 - lam) * 0.5 * beta * beta * ((1.0 - lam) * ha + lam * hb)
        return g, h

    terms = [bracket(float(lam)) for lam in lambdas]
    values = np.array([g + h for g, h in terms])
    gm, hm = bracket(0.5)
    return TaylorEstimate(
        estimate=float(np.max(values)),
        per_lambda_terms=terms,
        mu_norm_check=params_norm(mu),
        lambdas=lambdas,
        values=values,
        midpoint_estimate=float(gm + hm),
        beta=beta,
    )


# -- singular-vector alignment ------------------------------------------------


def _model_svds(model: ModelParams) -> list:
    return [svd(w) for w in model.weights]


def _boundary_perms(pi: Permutation, n_layers: int):
    """Output/input index vectors per weight matrix, identity at the ends."""
    outs, ins = [], []
    for l in range(n_layers):
        outs.append(pi.per_layer[l] if l < n_layers - 1 else None)
        ins.append(pi.per_layer[l - 1] if l > 0 else None)
    return outs, ins


@dataclass
class AlignmentReport:
    gamma: float
    r_value: float
    per_layer_numerators: list
    denominator: float
    counts: list  # (retained_a, retained_b) per layer

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma,
            "r_value": self.r_value,
            "per_layer_numerators": [float(x) for x in self.per_layer_numerators],
            "denominator": self.denominator,
            "counts": [[int(x), int(y)] for x, y in self.counts],
        }


def compute_R(a: ModelParams, b: ModelParams, pi: Permutation, gamma: float,
              svds_a: list = None, svds_b: list = None) -> AlignmentReport:
    """Alignment of singular vectors across the permutation.

    Numerator per layer: sum over singular index pairs (i, j), both retained
    under the gamma threshold, of (u_i^a . P_out u_j^b)(v_i^a . P_in v_j^b);
    thresholds are gamma times each model's global max singular value.
    Denominator: sum over layers of min(retained_a, retained_b). gamma = 0
    keeps everything. |R| <= 1 always.
    """
    _check_pair(a, b)
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    sa = _model_svds(a) if svds_a is None else svds_a
    sb = _model_svds(b) if svds_b is None else svds_b
    smax_a = max(float(r.s[0]) for r in sa)
    smax_b = max(float(r.s[0]) for r in sb)
    outs, ins = _boundary_perms(pi, a.n_layers)
    numerators, counts = [], []
    denom = 0.0
    for l in range(a.n_layers):
        ra, rb = sa[l], sb[l]
        mask_a = ra.s >= gamma * smax_a
        mask_b = rb.s >= gamma * smax_b
        na, nb = int(mask_a.sum()), int(mask_b.sum())
        counts.append((na, nb))
        denom += min(na, nb)
        ub = rb.u if outs[l] is None else rb.u[outs[l], :]
        vb = rb.v if ins[l] is None else rb.v[ins[l], :]
        m = ra.u.T @ ub
        n = ra.v.T @ vb
        contrib = (m * n) * np.outer(mask_a, mask_b)
        numerators.append(float(contrib.sum()))
    return AlignmentReport(
        gamma=gamma,
        r_value=float(sum(numerators) / denom),
        per_layer_numerators=numerators,
        denominator=denom,
        counts=counts,
    )


def alignment_objective(a: ModelParams, b: ModelParams, pi: Permutation,
                        svds_a: list = None, svds_b: list = None) -> float:
    """Weights-only bilinear alignment score: sum over layers and singular
    pairs of s_i^a s_j^b (u_i^a . P_out u_j^b)(v_i^a . P_in v_j^b).

    Satisfies  ||Wa - pi(Wb)||^2 = ||Wa||^2 + ||Wb||^2 - 2 * objective
    (weight matrices only; biases are excluded here, unlike the matching
    cost), so maximizing it minimizes the weight distance.
    """
    _check_pair(a, b)
    sa = _model_svds(a) if svds_a is None else svds_a
    sb = _model_svds(b) if svds_b is None else svds_b
    outs, ins = _boundary_perms(pi, a.n_layers)
    total = 0.0
    for l in range(a.n_layers):
        ra, rb = sa[l], sb[l]
        ub = rb.u if outs[l] is None else rb.u[outs[l], :]
        vb = rb.v if ins[l] is None else rb.v[ins[l], :]
        m = ra.u.T @ ub
        n = ra.v.T @ vb
        total += float(np.sum(np.outer(ra.s, rb.s) * m * n))
    return total


def spectrum(model: ModelParams) -> list:
    """Descending singular values of each weight matrix."""
    check_model(model)
    return [svd(w).s for w in model.weights]


def input_alignment(model: ModelParams, data: EvalSet) -> list:
    """Per layer, the mean squared projection of that layer's input onto
    each right singular vector: E[(v_{l,i} . z_{l-1})^2]."""
    check_model(model)
    if data.inputs.shape[0] == 0:
        raise ValueError("empty data")
    zs = forward(model, data.inputs).zs
    out = []
    for l, w in enumerate(model.weights):
        v = svd(w).v
        proj = zs[l] @ v
        out.append(np.mean(proj * proj, axis=0))
    return out


# -- single-layer output difference bound ------------------------------------


@dataclass
class OutputDiffReport:
    lhs: float
    rhs: float
    lipschitz_c: float
    term_a: float  # sum_i (s_i^a)^2 E[(v_i^a . z)^2]
    term_b: float  # same for the second matrix
    term_cross: float  # sum_ij s_i^a s_j^b (u_i^a . u_j^b) E[(v_i^a.z)(v_j^b.z)]

    def to_json(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "lipschitz_c": self.lipschitz_c,
            "term_a": self.term_a,
            "term_b": self.term_b,
            "term_cross": self.term_cross,
        }


def output_diff_bound(wa, wb, samples, c: float = 1.0) -> OutputDiffReport:
    """Bound the mean output difference of one ReLU layer by the spectral
    cross-terms of the two weight matrices.

    lhs = mean_z ||relu(Wa z) - relu(Wb z)||
    rhs = c * sqrt(term_a + term_b - 2 * term_cross)

    with all expectations taken over the same samples (rows of `samples`).
    The inequality holds samplewise: the Lipschitz step and Jensen's
    inequality are valid for empirical means too.
    """
    wa = np.asarray(wa, dtype=np.float64)
    wb = np.asarray(wb, dtype=np.float64)
    if wa.shape != wb.shape:
        raise ValueError(f"shape mismatch: {wa.shape} vs {wb.shape}")
    if not c > 0:
        raise ValueError("lipschitz constant must be positive")
    z = np.asarray(samples, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    ra, rb = svd(wa), svd(wb)
    out_a = np.maximum(z @ wa.T, 0.0)
    out_b = np.maximum(z @ wb.T, 0.0)
    lhs = float(np.mean(np.sqrt(np.sum((out_a - out_b) ** 2, axis=1))))
    pa = z @ ra.v  # (n, k): v_i^a . z per sample
    pb = z @ rb.v
    term_a = float(np.sum(ra.s**2 * np.mean(pa * pa, axis=0)))
    term_b = float(np.sum(rb.s**2 * np.mean(pb * pb, axis=0)))
    cross_e = pa.T @ pb / z.shape[0]
    term_cross = float(np.sum(np.outer(ra.s, rb.s) * (ra.u.T @ rb.u) * cross_e))
    rhs = c * float(np.sqrt(max(term_a + term_b - 2.0 * term_cross, 0.0)))
    return OutputDiffReport(
        lhs=lhs, rhs=rhs, lipschitz_c=c,
        term_a=term_a, term_b=term_b, term_cross=term_cross,
    )


# -- 2-D landscapes -----------------------------------------------------------


@dataclass
class LandscapeGrid:
    origin: np.ndarray  # parameter vector of the first model
    e1: np.ndarray  # orthonormal in-plane directions
    e2: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    losses: np.ndarray  # shape (len(ys), len(xs))
    accuracies: np.ndarray
    anchors: np.ndarray  # (3, 2) plane coordinates of the three models
    anchor_losses: np.ndarray
    anchor_accuracies: np.ndarray

    def to_json(self) -> dict:
        # direction vectors are omitted: they are model-sized
        return {
            "xs": [float(x) for x in self.xs],
            "ys": [float(y) for y in self.ys],
            "losses": [[float(v) for v in row] for row in self.losses],
            "accuracies": [[float(v) for v in row] for row in self.accuracies],
            "anchors": [[float(x), float(y)] for x, y in self.anchors],
            "anchor_losses": [float(x) for x in self.anchor_losses],
            "anchor_accuracies": [float(x) for x in self.anchor_accuracies],
        }


_MARGIN = 0.2


def landscape(a: ModelParams, b: ModelParams, c: ModelParams,
              eval_set: EvalSet, resolution: int = 25) -> LandscapeGrid:
    """Loss/accuracy over the plane through three models.

    Plane basis: e1 along b - a, e2 the Gram-Schmidt complement of c - a.
    The grid covers the anchors' bounding box with a 20% margin per side.
    Anchor rows are evaluated through the same reconstruction path as grid
    cells, so they reproduce the models' own losses up to roundoff.
    """
    _check_pair(a, b)
    _check_pair(a, c)
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    dims = a.layer_dims
    va = to_vector(a)
    d1 = to_vector(b) - va
    n1 = float(np.linalg.norm(d1))
    if n1 == 0.0:
        raise ValueError("models a and b coincide; plane is degenerate")
    e1 = d1 / n1
    d2 = to_vector(c) - va
    x_c = float(e1 @ d2)
    u2 = d2 - x_c * e1
    n2 = float(np.linalg.norm(u2))
    if n2 <= 1e-12 * max(1.0, float(np.linalg.norm(d2))):
        raise ValueError("the three models are collinear; plane is degenerate")
    e2 = u2 / n2
    anchors = np.array([[0.0, 0.0], [n1, 0.0], [x_c, n2]])
    lo = anchors.min(axis=0)
    hi = anchors.max(axis=0)
    span = hi - lo
    lo = lo - _MARGIN * span
    hi = hi + _MARGIN * span
    xs = np.linspace(lo[0], hi[0], resolution)
    ys = np.linspace(lo[1], hi[1], resolution)

    def eval_at(x, y):
        theta = from_vector(dims, va + x * e1 + y * e2)
        return evaluate(theta, eval_set)

    losses = np.empty((resolution, resolution))
    accs = np.empty((resolution, resolution))
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            losses[iy, ix], accs[iy, ix] = eval_at(float(x), float(y))
    anchor_losses = np.empty(3)
    anchor_accs = np.empty(3)
    for i, (x, y) in enumerate(anchors):
        anchor_losses[i], anchor_accs[i] = eval_at(float(x), float(y))
    return LandscapeGrid(
        origin=va, e1=e1, e2=e2, xs=xs, ys=ys,
        losses=losses, accuracies=accs, anchors=anchors,
        anchor_losses=anchor_losses, anchor_accuracies=anchor_accs,
    )


# -- three-model experiment ---------------------------------------------------


@dataclass
class ThreeModelReport:
    method: str
    match_b: MatchReport
    match_c: MatchReport
    barriers: dict  # keys ab, ac, bc -> BarrierReport
    r_values: dict  # keys (pair, gamma) as "ab@0.3" -> AlignmentReport
    grid: LandscapeGrid

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "match_b": self.match_b.to_json(),
            "match_c": self.match_c.to_json(),
            "barriers": {k: v.to_json() for k, v in self.barriers.items()},
            "r_values": {k: v.to_json() for k, v in self.r_values.items()},
            "landscape": self.grid.to_json(),
        }


def three_model_experiment(a: ModelParams, b: ModelParams, c: ModelParams,
                           method: str, data: EvalSet,
                           match_cfg: MatchConfig = None,
                           barrier_grid: int = 25,
                           landscape_resolution: int = 25,
                           gammas=(0.0, 0.3)) -> ThreeModelReport:
    """Align b and c to a with one method, then measure every pair.

    The bc pair is the indirect one: both models were matched to a, never
    to each other, so its barrier shows how compatible the two alignments
    are with each other.
    """
    _check_pair(a, b)
    _check_pair(a, c)
    if method not in ("wm", "ste"):
        raise ValueError(f"method must be wm or ste, got {method!r}")
    if match_cfg is None:
        match_cfg = MatchConfig(
            method="wm_coord" if method == "wm" else "ste",
            outer_iters=10 if method == "wm" else 5,
            inner_iters=100,
        )
    rep_b = match(a, b, match_cfg, data)
    rep_c = match(a, c, match_cfg, data)
    b2 = apply_perm(rep_b.pi, b)
    c2 = apply_perm(rep_c.pi, c)
    pairs = {"ab": (a, b2), "ac": (a, c2), "bc": (b2, c2)}
    barriers = {
        k: barrier(x, y, data, grid_size=barrier_grid, split_name=k)
        for k, (x, y) in pairs.items()
    }
    svds = {
        id(a): _model_svds(a), id(b2): _model_svds(b2), id(c2): _model_svds(c2)
    }
    ident = identity_perm(a.layer_dims[1:-1])
    r_values = {}
    for k, (x, y) in pairs.items():
        for g in gammas:
            r_values[f"{k}@{g}"] = compute_R(
                x, y, ident, g, svds_a=svds[id(x)], svds_b=svds[id(y)]
            )
    grid = landscape(a, b2, c2, data, resolution=landscape_resolution)
    return ThreeModelReport(
        method=method, match_b=rep_b, match_c=rep_c,
        barriers=barriers, r_values=r_values, grid=grid,
    )
