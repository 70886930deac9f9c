"""Permutation search between two trained networks of the same shape.

Four methods, all returning a MatchReport:

  wm_coord     coordinate descent on the weight-space L2 distance, one
               linear assignment per hidden layer per pass
  wm_sinkhorn  gradient descent on the same distance through an entropic
               (Sinkhorn) relaxation of the permutations
  am           per-layer assignment on activation cross-correlations
  ste          direct search on the merged model's loss: the permutations
               are relaxed through Sinkhorn as in wm_sinkhorn, but the
               objective is the midpoint loss on minibatches

Direction convention: the returned permutation is applied to the second
model, so apply_perm(report.pi, b) is the aligned copy of b.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .linalg import hard_project, linear_sum_assignment
from .nn import (EvalSet, ModelParams, check_model, forward, loss_and_grad,
                 loss_value, params_combine, params_norm)
from .perm import Permutation, apply_perm, identity_perm
from .rng import STREAM_MATCH, stream

# full (row+col) normalization rounds inside the differentiable relaxation
_SINKHORN_ROUNDS = 15


@dataclass
class MatchConfig:
    method: str = "wm_coord"
    tau: float = 1.0
    outer_iters: int = 10
    inner_iters: int = 100
    learning_rate: float = 1.0
    seed: int = 0
    accept_only_improving: bool = True

    def __post_init__(self):
        if self.method not in ("wm_coord", "wm_sinkhorn", "am", "ste"):
            raise ValueError(f"unknown matching method {self.method!r}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ValueError("iteration counts must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class MatchReport:
    pi: Permutation
    objective_trace: list
    l2_before: float
    l2_after: float
    reduction_rate: float
    method: str = ""
    fallback: bool = False
    midpoint_loss: float = None
    wall_time: float = 0.0

    def to_json(self) -> dict:
        from .perm import perm_to_json

        return {
            "method": self.method,
            "pi": perm_to_json(self.pi),
            "objective_trace": [float(x) for x in self.objective_trace],
            "l2_before": self.l2_before,
            "l2_after": self.l2_after,
            "reduction_rate": self.reduction_rate,
            "fallback": self.fallback,
            "midpoint_loss": self.midpoint_loss,
            "wall_time": self.wall_time,
        }


def l2_distance(a: ModelParams, b: ModelParams) -> float:
    """Euclidean distance between full parameter vectors, biases included."""
    return params_norm(params_combine(a, b, 1.0, -1.0))


def _check_pair(a: ModelParams, b: ModelParams) -> None:
    check_model(a, "model a")
    check_model(b, "model b")
    if a.layer_dims != b.layer_dims:
        raise ValueError(
            f"architecture mismatch: {a.layer_dims} vs {b.layer_dims}"
        )


def _finish(pi, trace, a, b, method, cfg=None, fallback=False, midpoint=None,
            t0=0.0) -> MatchReport:
    before = l2_distance(a, b)
    after = l2_distance(a, apply_perm(pi, b))
    rate = 0.0 if before == 0.0 else (before - after) / before
    return MatchReport(
        pi=pi,
        objective_trace=trace,
        l2_before=before,
        l2_after=after,
        reduction_rate=rate,
        method=method,
        fallback=fallback,
        midpoint_loss=midpoint,
        wall_time=time.perf_counter() - t0,
    )


# -- weight matching, coordinate descent -------------------------------------


def _wm_layer_cost(a: ModelParams, b: ModelParams, pi: Permutation, k: int):
    """Assignment payoff matrix C for hidden layer k: entry C[j, i] is the
    inner product of row i of [W_k^a | b_k^a] with row j of the incoming-
    permuted [W_k^b | b_k^b], plus the outgoing-weight column term. Choosing
    p maximizing sum_i C[p[i], i] maximizes tr(P C)."""
    n_hidden = len(pi.per_layer)
    wb = b.weights[k]
    if k > 0:
        wb = wb[:, pi.per_layer[k - 1]]
    c = wb @ a.weights[k].T + np.outer(b.biases[k], a.biases[k])
    wb_next = b.weights[k + 1]
    if k + 1 < n_hidden:
        wb_next = wb_next[pi.per_layer[k + 1], :]
    c += wb_next.T @ a.weights[k + 1]
    return c


# passes per start before declaring non-convergence; descent over a finite
# lattice converges in far fewer
_MAX_PASSES = 64
_RESTART_SUB = 1 << 20


def wm_coordinate(a: ModelParams, b: ModelParams, cfg: MatchConfig) -> MatchReport:
    """Coordinate descent on ||theta_a - pi(theta_b)||^2 over multiple
    seeded starts.

    Each start runs passes over the hidden layers in a fresh seeded random
    order, replacing a layer's permutation only when the assignment payoff
    strictly improves, until a full pass changes nothing. Coordinate
    descent from a single start can stall in a basin determined by how the
    models' units happen to be ordered, so the first start is the identity
    and the remaining cfg.outer_iters - 1 starts are random permutations;
    the best converged point wins. The trace records the best squared
    distance seen after each pass and is non-increasing.
    """
    _check_pair(a, b)
    t0 = time.perf_counter()
    hidden = a.layer_dims[1:-1]
    best = identity_perm(hidden)
    best_val = l2_distance(a, apply_perm(best, b)) ** 2
    trace = [best_val]
    sweep = 0
    for start in range(cfg.outer_iters):
        if start == 0:
            pi = identity_perm(hidden)
        else:
            gen = stream(cfg.seed, STREAM_MATCH, _RESTART_SUB + start)
            pi = Permutation(per_layer=[gen.permutation(w) for w in hidden])
        for _ in range(_MAX_PASSES):
            order = stream(cfg.seed, STREAM_MATCH, sweep).permutation(len(hidden))
            sweep += 1
            changed = False
            for k in order:
                c = _wm_layer_cost(a, b, pi, int(k))
                old = float(c[pi.per_layer[k], np.arange(c.shape[0])].sum())
                asn = linear_sum_assignment(c.T, maximize=True)
                if asn.cost > old + 1e-12 * (1.0 + abs(old)):
                    pi.per_layer[k] = asn.perm
                    changed = True
            val = l2_distance(a, apply_perm(pi, b)) ** 2
            if val < best_val - 1e-12 * (1.0 + best_val):
                best_val = val
                best = Permutation(
                    per_layer=[p.copy() for p in pi.per_layer]
                )
            trace.append(best_val)
            if not changed:
                break
        if best_val <= 1e-20:
            break
    return _finish(best, trace, a, b, "wm_coord", cfg, t0=t0)


# -- differentiable sinkhorn relaxation --------------------------------------


def _logsumexp(y, axis):
    m = np.max(y, axis=axis, keepdims=True)
    return m + np.log(np.sum(np.exp(y - m), axis=axis, keepdims=True))


def _sinkhorn_forward(x, tau):
    """Log-domain Sinkhorn; returns the transport plan and the per-half-step
    outputs needed for the backward pass."""
    y = x / tau
    steps = []
    for _ in range(_SINKHORN_ROUNDS):
        y = y - _logsumexp(y, axis=1)
        steps.append((1, y))
        y = y - _logsumexp(y, axis=0)
        steps.append((0, y))
    return np.exp(y), steps


def _sinkhorn_backward(dbar, plan, steps, tau):
    """Vector-Jacobian product through the stored normalization half-steps.
    Each half-step y' = y - LSE(y) has vjp  ybar <- ybar - exp(y') * sum(ybar)
    along the normalized axis, needing only the step's output."""
    ybar = dbar * plan
    for axis, y in reversed(steps):
        ybar = ybar - np.exp(y) * np.sum(ybar, axis=axis, keepdims=True)
    return ybar / tau


class _Adam:
    def __init__(self, shapes, lr):
        self.lr = lr
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + eps)


def _relaxed_l2_objective(a, b, plans):
    """Squared L2 distance with doubly stochastic matrices in place of the
    permutations, plus its gradient w.r.t. each plan."""
    n = a.n_layers
    resid_w, resid_b = [], []
    for l in range(n):
        wb = b.weights[l]
        bb = b.biases[l]
        if l < n - 1:
            wb = plans[l] @ wb
            bb = plans[l] @ bb
        if l > 0:
            wb = wb @ plans[l - 1].T
        resid_w.append(a.weights[l] - wb)
        resid_b.append(a.biases[l] - bb)
    obj = sum(float(np.sum(r * r)) for r in resid_w)
    obj += sum(float(np.sum(r * r)) for r in resid_b)
    grads = []
    for l in range(n - 1):
        wb_in = b.weights[l]
        if l > 0:
            wb_in = wb_in @ plans[l - 1].T
        g = -2.0 * resid_w[l] @ wb_in.T
        g -= 2.0 * np.outer(resid_b[l], b.biases[l])
        wb_out = b.weights[l + 1]
        if l + 1 < n - 1:
            wb_out = plans[l + 1] @ wb_out
        g -= 2.0 * resid_w[l + 1].T @ wb_out
        grads.append(g)
    return obj, grads


def _project_plans(scores, tau):
    plans, steps = [], []
    for x in scores:
        p, st = _sinkhorn_forward(x, tau)
        plans.append(p)
        steps.append(st)
    return plans, steps


def _soft_permuted(b, plans):
    """Copy of b with doubly stochastic plans in place of hard permutations."""
    n = b.n_layers
    ws, bs = [], []
    for l in range(n):
        w = b.weights[l]
        v = b.biases[l]
        if l < n - 1:
            w = plans[l] @ w
            v = plans[l] @ v
        if l > 0:
            w = w @ plans[l - 1].T
        ws.append(w)
        bs.append(v)
    return ModelParams(weights=ws, biases=bs)


def _midpoint_loss_grad(a, b, plans, batch):
    """Midpoint loss L((theta_a + D(theta_b)) / 2) for relaxed plans D and
    its gradient w.r.t. each plan (chain rule through the merge)."""
    n = a.n_layers
    mid = params_combine(a, _soft_permuted(b, plans), 0.5, 0.5)
    loss, grad = loss_and_grad(mid, batch)
    dplans = []
    for l in range(n - 1):
        gw = 0.5 * grad.weights[l]
        gb = 0.5 * grad.biases[l]
        wb_in = b.weights[l]
        if l > 0:
            wb_in = wb_in @ plans[l - 1].T
        d = gw @ wb_in.T + np.outer(gb, b.biases[l])
        gw_next = 0.5 * grad.weights[l + 1]
        wb_next = b.weights[l + 1]
        if l + 1 < n - 1:
            wb_next = plans[l + 1] @ wb_next
        d += gw_next.T @ wb_next
        dplans.append(d)
    return loss, dplans


def wm_sinkhorn(a: ModelParams, b: ModelParams, cfg: MatchConfig) -> MatchReport:
    """Sinkhorn-relaxed weight matching: all layers optimized jointly.

    Score matrices are driven by Adam on the relaxed squared distance; the
    temperature anneals by 0.7 per outer iteration so the plans sharpen
    toward permutations before the final hard projection. With
    accept_only_improving, a projection that fails to beat the identity
    falls back to the identity (flagged in the report).
    """
    _check_pair(a, b)
    t0 = time.perf_counter()
    hidden = a.layer_dims[1:-1]
    scores = [np.zeros((w, w)) for w in hidden]
    opt = _Adam([s.shape for s in scores], cfg.learning_rate)
    trace = []
    tau = cfg.tau
    for outer in range(cfg.outer_iters):
        for inner in range(cfg.inner_iters):
            plans, steps = _project_plans(scores, tau)
            obj, dplans = _relaxed_l2_objective(a, b, plans)
            if not np.isfinite(obj):
                raise DivergenceError(
                    f"wm_sinkhorn diverged at iteration "
                    f"{outer * cfg.inner_iters + inner}: objective={obj}"
                )
            trace.append(obj)
            grads = [
                _sinkhorn_backward(d, p, st, tau)
                for d, p, st in zip(dplans, plans, steps)
            ]
            opt.step(scores, grads)
        tau *= 0.7
    pi = Permutation(
        per_layer=[hard_project(_sinkhorn_forward(x, tau)[0]).perm for x in scores]
    )
    fallback = False
    if cfg.accept_only_improving:
        if l2_distance(a, apply_perm(pi, b)) > l2_distance(a, b):
            pi = identity_perm(hidden)
            fallback = True
    return _finish(pi, trace, a, b, "wm_sinkhorn", cfg, fallback=fallback, t0=t0)


# -- activation matching ------------------------------------------------------


def activation_matching(a: ModelParams, b: ModelParams, data: EvalSet) -> MatchReport:
    """Match units by the cross-correlation of their activations on shared
    data. Each hidden layer is an independent assignment, which is globally
    optimal for this objective."""
    _check_pair(a, b)
    if data.inputs.shape[0] == 0:
        raise ValueError("activation matching needs nonempty data")
    t0 = time.perf_counter()
    za = forward(a, data.inputs).zs
    zb = forward(b, data.inputs).zs
    n_hidden = a.n_layers - 1
    per_layer, total = [], 0.0
    batch = data.inputs.shape[0]
    for k in range(n_hidden):
        corr = za[k + 1].T @ zb[k + 1] / batch
        asn = linear_sum_assignment(corr, maximize=True)
        per_layer.append(asn.perm)
        total += asn.cost
    return _finish(Permutation(per_layer=per_layer), [total], a, b, "am", t0=t0)


# -- straight-through estimator ----------------------------------------------


def ste_matching(a: ModelParams, b: ModelParams, data: EvalSet,
                 cfg: MatchConfig) -> MatchReport:
    """Search for the permutation minimizing the loss of the averaged model
    (theta_a + pi(theta_b)) / 2.

    The permutations are relaxed to doubly stochastic plans exactly as in
    wm_sinkhorn, but the objective is the loss of the merged model built
    from those plans; the gradient flows through the merge and the Sinkhorn
    iterations back to the score matrices. Minibatches of up to 512
    examples are drawn fresh per step from a seeded stream. After the final
    hard projection the fallback rule compares midpoint losses on the full
    data, so the result never merges worse than the identity permutation
    does.
    """
    _check_pair(a, b)
    n_data = data.inputs.shape[0]
    if n_data == 0:
        raise ValueError("ste matching needs nonempty data")
    t0 = time.perf_counter()
    hidden = a.layer_dims[1:-1]
    scores = [np.zeros((w, w)) for w in hidden]
    opt = _Adam([s.shape for s in scores], cfg.learning_rate)
    bs = min(512, n_data)
    trace = []
    tau = cfg.tau
    step_idx = 0
    for outer in range(cfg.outer_iters):
        for inner in range(cfg.inner_iters):
            gen = stream(cfg.seed, STREAM_MATCH, step_idx)
            idx = gen.choice(n_data, size=bs, replace=False)
            batch = EvalSet(
                inputs=data.inputs[idx],
                labels=None if data.labels is None else data.labels[idx],
                loss_kind=data.loss_kind,
                targets=None if data.targets is None else data.targets[idx],
            )
            plans, steps = _project_plans(scores, tau)
            loss, dplans = _midpoint_loss_grad(a, b, plans, batch)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"ste diverged at iteration {step_idx}: loss={loss}"
                )
            trace.append(loss)
            grads = [
                _sinkhorn_backward(d, p, st, tau)
                for d, p, st in zip(dplans, plans, steps)
            ]
            opt.step(scores, grads)
            step_idx += 1
        tau *= 0.7
    plans, _ = _project_plans(scores, tau)
    pi = Permutation(per_layer=[hard_project(p).perm for p in plans])
    mid_loss = loss_value(params_combine(a, apply_perm(pi, b), 0.5, 0.5), data)
    fallback = False
    if cfg.accept_only_improving:
        ident = identity_perm(hidden)
        ident_loss = loss_value(params_combine(a, b, 0.5, 0.5), data)
        if mid_loss > ident_loss:
            pi, mid_loss, fallback = ident, ident_loss, True
    return _finish(pi, trace, a, b, "ste", cfg, fallback=fallback,
                   midpoint=mid_loss, t0=t0)


def match(a: ModelParams, b: ModelParams, cfg: MatchConfig,
          data: EvalSet = None) -> MatchReport:
    """Dispatch on cfg.method; am and ste require data."""
    if cfg.method == "wm_coord":
        return wm_coordinate(a, b, cfg)
    if cfg.method == "wm_sinkhorn":
        return wm_sinkhorn(a, b, cfg)
    if data is None:
        raise ValueError(f"method {cfg.method!r} requires data")
    if cfg.method == "am":
        return activation_matching(a, b, data)
    return ste_matching(a, b, data, cfg)
