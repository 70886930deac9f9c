"""Top-level acceptance gate.

One test per shipping criterion; each prints a single
"ACCEPTANCE <name>: PASS|FAIL (detail)" line past the capture so the
verdicts are visible in any pytest run. The two heavyweight criteria
(paper-scale reproduction, three-model ordering) only run with
PERMALIGN_SCALE=full and a PERMALIGN_DATA_DIR holding the MNIST IDX files;
their trained checkpoints are cached between runs.
"""

import hashlib
import itertools
import json
import os

import numpy as np
import pytest

from permalign import analysis, convspec, data, matching, nn, perm
from permalign.matching import MatchConfig
from permalign.rng import STREAM_FIXTURE, stream

from conftest import (DATA_DIR, cache_dir, full_scale, needs_mnist,
                      random_model)


@pytest.fixture
def accept(capsys):
    def emit(name, ok, detail=""):
        tail = f" ({detail})" if detail else ""
        with capsys.disabled():
            print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}{tail}")
        assert ok, f"{name}{tail}"

    return emit


# -- fast criteria ------------------------------------------------------------


def test_permutation_invariance(accept):
    shapes = ([6, 8, 8, 3], [4, 10, 5], [5, 7, 7, 7, 2], [3, 16, 2])
    worst = 0.0
    for trial in range(100):
        dims = shapes[trial % len(shapes)]
        model = random_model(dims, seed=10_000 + trial)
        pi = perm.random_perm(dims[1:-1], seed=20_000 + trial)
        x = stream(30_000 + trial, STREAM_FIXTURE).standard_normal((16, dims[0]))
        base = nn.forward(model, x).zs[-1]
        permuted = nn.forward(perm.apply_perm(pi, model), x).zs[-1]
        worst = max(worst, float(np.max(np.abs(base - permuted))))
    accept(
        "permutation-invariance", worst < 1e-5,
        f"100 triples, max output deviation {worst:.2e}",
    )


def test_planted_permutation_recovery(accept):
    dims = [6, 8, 8, 3]
    worst_l2 = 0.0
    am_exact = True
    for seed in range(20):
        a = random_model(dims, seed=seed)
        planted = perm.random_perm([8, 8], seed=seed + 5000)
        b = perm.apply_perm(planted, a)
        rep = matching.wm_coordinate(a, b, MatchConfig(seed=seed))
        worst_l2 = max(worst_l2, rep.l2_after)
        x = stream(seed + 7000, STREAM_FIXTURE).standard_normal((64, dims[0]))
        shared = nn.EvalSet(inputs=x, labels=np.zeros(64, dtype=np.int64))
        am = matching.activation_matching(a, b, shared)
        want = perm.invert(planted)
        am_exact = am_exact and all(
            np.array_equal(p, q)
            for p, q in zip(am.pi.per_layer, want.per_layer)
        )
    ok = worst_l2 < 1e-6 and am_exact
    accept(
        "planted-recovery", ok,
        f"20 seeds, wm_coordinate max l2_after {worst_l2:.2e}, "
        f"activation matching exact: {am_exact}",
    )


def test_inner_product_identity(accept):
    worst = 0.0
    for trial in range(50):
        dims = [4, 6, 6, 3] if trial % 2 == 0 else [3, 5, 4, 4, 2]
        a = random_model(dims, seed=40_000 + trial)
        b = random_model(dims, seed=41_000 + trial)
        pi = perm.random_perm(dims[1:-1], seed=trial)
        bp = perm.apply_perm(pi, b)
        dist_sq = sum(
            float(np.sum((wa - wb) ** 2))
            for wa, wb in zip(a.weights, bp.weights)
        )
        norms = sum(
            float(np.sum(w**2)) for m in (a, b) for w in m.weights
        )
        obj = analysis.alignment_objective(a, b, pi)
        rel = abs(dist_sq - (norms - 2 * obj)) / max(abs(dist_sq), 1e-12)
        worst = max(worst, rel)
    accept(
        "inner-product-identity", worst < 1e-8,
        f"50 triples, max relative error {worst:.2e}",
    )


def _oracle_R(a, b, pi, gamma):
    svds_a = [np.linalg.svd(w) for w in a.weights]
    svds_b = [np.linalg.svd(w) for w in b.weights]
    smax_a = max(s[1][0] for s in svds_a)
    smax_b = max(s[1][0] for s in svds_b)
    n_mats = len(a.weights)
    num, den = 0.0, 0
    for l in range(n_mats):
        ua, sa, vha = svds_a[l]
        ub, sb, vhb = svds_b[l]
        p_out = pi.per_layer[l] if l < n_mats - 1 else None
        p_in = pi.per_layer[l - 1] if l > 0 else None
        keep_a = [i for i in range(len(sa)) if sa[i] >= gamma * smax_a]
        keep_b = [j for j in range(len(sb)) if sb[j] >= gamma * smax_b]
        den += min(len(keep_a), len(keep_b))
        for i in keep_a:
            for j in keep_b:
                uj = ub[:, j] if p_out is None else ub[p_out, j]
                vj = vhb[j, :] if p_in is None else vhb[j, p_in]
                num += float(ua[:, i] @ uj) * float(vha[i, :] @ vj)
    return num / den


def test_r_metric_bounds(accept):
    gammas = (0.0, 0.1, 0.3, 0.5)
    shapes = ([4, 6, 6, 3], [3, 5, 4], [5, 8, 2], [4, 8, 8, 8, 3])
    worst_abs = 0.0
    for trial in range(200):
        dims = shapes[trial % len(shapes)]
        a = random_model(dims, seed=50_000 + trial)
        b = random_model(dims, seed=51_000 + trial)
        pi = perm.random_perm(dims[1:-1], seed=trial)
        sa = [analysis.svd(w) for w in a.weights]
        sb = [analysis.svd(w) for w in b.weights]
        for g in gammas:
            rep = analysis.compute_R(a, b, pi, g, svds_a=sa, svds_b=sb)
            worst_abs = max(worst_abs, abs(rep.r_value))
    ident_model = random_model([4, 6, 6, 3], seed=52_000)
    ident = analysis.compute_R(
        ident_model, ident_model, perm.identity_perm([6, 6]), 0.0
    ).r_value
    worst_oracle = 0.0
    for seed in range(5):
        a = random_model([3, 3, 3], seed=53_000 + seed)
        b = random_model([3, 3, 3], seed=54_000 + seed)
        pi = perm.random_perm([3], seed=seed)
        for g in (0.0, 0.3):
            diff = abs(
                analysis.compute_R(a, b, pi, g).r_value
                - _oracle_R(a, b, pi, g)
            )
            worst_oracle = max(worst_oracle, diff)
    ok = (
        worst_abs <= 1.0 + 1e-9
        and abs(ident - 1.0) < 1e-12
        and worst_oracle < 1e-10
    )
    accept(
        "r-metric-bounds", ok,
        f"200 trials x 4 gammas, max |R| {worst_abs:.6f}; identity R "
        f"{ident:.12f}; oracle max diff {worst_oracle:.2e}",
    )


def _quadratic_eval(dim):
    eye = np.eye(dim) * np.sqrt(dim)
    return nn.EvalSet(
        inputs=np.vstack([eye, -eye]),
        loss_kind="mse",
        targets=np.zeros((2 * dim, dim)),
    )


def _quadratic_model(dim, seed):
    gen = stream(seed, STREAM_FIXTURE)
    return nn.ModelParams(
        weights=[gen.standard_normal((dim, dim))],
        biases=[gen.standard_normal(dim)],
    )


def test_barrier_properties(accept, trained_pair):
    a_t, b_t, ds = trained_pair
    self_rep = analysis.barrier(
        a_t, a_t, ds.test, grid_size=11
    )
    qa = _quadratic_model(5, seed=60_001)
    qb = _quadratic_model(5, seed=60_002)
    quad = analysis.barrier(qa, qb, _quadratic_eval(5), grid_size=25)
    g25 = analysis.barrier(a_t, b_t, ds.test, grid_size=25).barrier
    g101 = analysis.barrier(a_t, b_t, ds.test, grid_size=101).barrier
    ok = (
        abs(self_rep.barrier) < 1e-12
        and quad.barrier == 0.0
        and abs(g25 - g101) < 0.01
    )
    accept(
        "barrier-properties", ok,
        f"self {self_rep.barrier:.2e}; convex quadratic {quad.barrier}; "
        f"grid 25 vs 101 gap {abs(g25 - g101):.5f}",
    )


def test_taylor_estimator(accept):
    qa = _quadratic_model(5, seed=61_001)
    qb = _quadratic_model(5, seed=61_002)
    ev = _quadratic_eval(5)
    rep = analysis.taylor_barrier(qa, qb, ev, grid_size=25)
    la, lb = nn.loss_value(qa, ev), nn.loss_value(qb, ev)
    worst_taylor = 0.0
    for lam, est in zip(rep.lambdas, rep.values):
        lm = nn.loss_value(analysis.interpolate(qa, qb, float(lam)), ev)
        worst_taylor = max(
            worst_taylor, abs(est - (lm - (lam * la + (1 - lam) * lb)))
        )
    worst_hvp = 0.0
    h = 1e-4
    gen = stream(62_000, STREAM_FIXTURE)
    for trial in range(50):
        dims = [3, int(gen.integers(2, 5)), int(gen.integers(2, 5)), 3]
        model = random_model(dims, seed=63_000 + trial)
        x = stream(64_000 + trial, STREAM_FIXTURE).standard_normal((10, 3))
        ev_t = nn.EvalSet(
            inputs=x,
            labels=stream(65_000 + trial, STREAM_FIXTURE).integers(0, 3, 10),
        )
        v = random_model(dims, seed=66_000 + trial)
        hv = nn.to_vector(nn.hvp(model, ev_t, v))
        theta, vv = nn.to_vector(model), nn.to_vector(v)
        _, gp = nn.loss_and_grad(nn.from_vector(dims, theta + h * vv), ev_t)
        _, gm = nn.loss_and_grad(nn.from_vector(dims, theta - h * vv), ev_t)
        fd = (nn.to_vector(gp) - nn.to_vector(gm)) / (2 * h)
        rel = np.linalg.norm(hv - fd) / max(np.linalg.norm(fd), 1e-8)
        worst_hvp = max(worst_hvp, float(rel))
    ok = worst_taylor < 1e-6 and worst_hvp < 1e-3
    accept(
        "taylor-estimator", ok,
        f"constant-Hessian max error {worst_taylor:.2e}; "
        f"HVP vs FD max rel {worst_hvp:.2e} over 50",
    )


_WA = np.array([
    [-0.398, -0.003, 0.210],
    [1.059, 0.303, 0.521],
    [0.609, -0.785, -0.235],
])
_WB = np.array([
    [-0.255, -0.319, -0.559],
    [1.031, -0.155, 0.484],
    [0.742, -0.114, -0.604],
])


def test_worked_example(accept):
    sv = analysis.svd(_WA)
    s_ok = np.allclose(sv.s, [1.317, 0.959, 0.277], atol=0.002)
    dist = float(np.linalg.norm(_WA - _WB))
    dist_ok = abs(dist - 1.236) < 0.01
    v1 = sv.v[:, 0].copy()
    if v1[0] < 0:
        v1 = -v1
    bound_ok = True
    worst_ratio = 0.0
    for k in (1.0, -1.0, 2.5, -2.5, 10.0, -10.0):
        z = k * v1
        diff = float(np.linalg.norm(
            np.maximum(_WA @ z, 0.0) - np.maximum(_WB @ z, 0.0)
        ))
        ratio = diff / (abs(k) * dist)
        worst_ratio = max(worst_ratio, ratio)
        bound_ok = bound_ok and diff < 0.02 * abs(k) * dist
    ok = s_ok and dist_ok and bound_ok
    accept(
        "worked-example", ok,
        f"singular values {np.round(sv.s, 3).tolist()}; distance {dist:.4f}; "
        f"max relu output ratio {worst_ratio:.4f} of the distance "
        f"(bound 0.02)",
    )


def test_conv_spectral_equivalences(accept):
    worst_norm = 0.0
    for n, m, seed in ((3, 2, 1), (4, 3, 2)):
        ka = convspec.random_kernel(n, m, seed=70_000 + seed)
        kb = convspec.random_kernel(n, m, seed=71_000 + seed)
        lhs = float(np.sum(
            (convspec.build_conv_matrix(ka).m_dense
             - convspec.build_conv_matrix(kb).m_dense) ** 2
        ))
        rhs = n * n * float(np.sum((ka.k - kb.k) ** 2))
        worst_norm = max(worst_norm, abs(lhs - rhs) / rhs)
    worst_multiset = 0.0
    for n, m in ((2, 1), (4, 2), (4, 3), (8, 2)):
        kernel = convspec.random_kernel(n, m, seed=72_000 + 10 * n + m)
        spectral = convspec.conv_singular_values(kernel)
        dense = np.linalg.svd(
            convspec.build_conv_matrix(kernel).m_dense, compute_uv=False
        )
        worst_multiset = max(
            worst_multiset, float(np.max(np.abs(spectral - dense)))
        )
    worst_obj = 0.0
    for n, m in ((3, 2), (3, 3), (3, 4)):
        ka = convspec.random_kernel(n, m, seed=73_000 + m)
        kb = convspec.random_kernel(n, m, seed=74_000 + m)
        ma = convspec.build_conv_matrix(ka).m_dense
        for p_out in itertools.permutations(range(m)):
            for p_in in itertools.permutations(range(m)):
                obj = convspec.conv_alignment_objective(
                    ka, kb, np.array(p_out), np.array(p_in)
                )
                mb = convspec.build_conv_matrix(
                    convspec.kernel_permute(kb, np.array(p_out), np.array(p_in))
                ).m_dense
                direct = float(np.sum(ma * mb))
                worst_obj = max(
                    worst_obj, abs(obj - direct) / max(abs(direct), 1e-12)
                )
    ok = worst_norm < 1e-10 and worst_multiset < 1e-6 and worst_obj < 1e-8
    accept(
        "conv-spectral", ok,
        f"norm lemma rel {worst_norm:.2e}; multiset max {worst_multiset:.2e}; "
        f"exhaustive objective rel {worst_obj:.2e} (m up to 4)",
    )


# -- full-scale criteria ------------------------------------------------------


def _cached_train(tag, dims, tc, train_set):
    key = hashlib.sha256(json.dumps([
        tag, dims, tc.optimizer, tc.learning_rate, tc.weight_decay,
        tc.batch_size, tc.epochs, tc.seed,
    ]).encode()).hexdigest()[:16]
    path = os.path.join(cache_dir(), f"{tag}-{key}.nnpk")
    if os.path.exists(path):
        return nn.load_checkpoint(path)
    model = nn.train(dims, tc, train_set.inputs, train_set.labels)
    nn.save_checkpoint(model, path, seed=tc.seed, notes=tag)
    return model


def _subset(eval_set, n):
    return nn.EvalSet(
        inputs=eval_set.inputs[:n], labels=eval_set.labels[:n]
    )


@full_scale
@needs_mnist
def test_paper_scale_mnist(accept):
    ds = data.load_mnist(DATA_DIR)
    dims = [784, 512, 512, 512, 10]
    am_data = _subset(ds.train, 20_000)
    rows = []
    for trial in range(5):
        tc_a = nn.TrainConfig(epochs=100, batch_size=512, seed=trial)
        tc_b = nn.TrainConfig(epochs=100, batch_size=512, seed=trial + 101)
        a = _cached_train("mnist512", dims, tc_a, ds.train)
        b = _cached_train("mnist512", dims, tc_b, ds.train)

        wm = matching.wm_coordinate(a, b, MatchConfig(seed=trial))
        b_wm = perm.apply_perm(wm.pi, b)
        bar = analysis.barrier(a, b_wm, ds.test, grid_size=25)
        tay = analysis.taylor_barrier(a, b_wm, ds.test, grid_size=25)

        am = matching.activation_matching(a, b, am_data)

        ste_cfg = MatchConfig(
            method="ste", tau=1.0, outer_iters=5, inner_iters=117,
            learning_rate=1.0, seed=trial,
        )
        ste = matching.ste_matching(a, b, am_data, ste_cfg)
        r_ste = analysis.compute_R(
            a, perm.apply_perm(ste.pi, b),
            perm.identity_perm(dims[1:-1]), 0.3,
        )
        rows.append({
            "merged_acc": bar.midpoint_accuracy,
            "wm_barrier": bar.midpoint_barrier,
            "wm_reduction": wm.reduction_rate,
            "taylor_mid": tay.midpoint_estimate,
            "true_mid": bar.midpoint_barrier,
            "am_reduction": am.reduction_rate,
            "ste_reduction": ste.reduction_rate,
            "ste_r": r_ste.r_value,
        })

    def mean(key):
        return float(np.mean([r[key] for r in rows]))

    min_acc = min(r["merged_acc"] for r in rows)
    checks = {
        "merged accuracy >= 0.975": min_acc >= 0.975,
        "wm midpoint barrier in [-0.1, 0.05]":
            -0.1 <= mean("wm_barrier") <= 0.05,
        "wm reduction in [15%, 26%]":
            0.15 <= mean("wm_reduction") <= 0.26,
        "taylor exceeds true barrier":
            mean("taylor_mid") > mean("true_mid"),
        "am reduction in [10%, 21%]":
            0.10 <= mean("am_reduction") <= 0.21,
        "ste reduction < 12%": mean("ste_reduction") < 0.12,
        "ste R(0.3) < 0.35": mean("ste_r") < 0.35,
    }
    detail = (
        f"5 trials: merged acc min {min_acc:.4f}; WM barrier "
        f"{mean('wm_barrier'):+.4f}; WM reduction {mean('wm_reduction'):.3f}; "
        f"Taylor {mean('taylor_mid'):+.4f} vs true {mean('true_mid'):+.4f}; "
        f"AM reduction {mean('am_reduction'):.3f}; STE reduction "
        f"{mean('ste_reduction'):.3f}; STE R(0.3) {mean('ste_r'):.3f}"
    )
    failed = [k for k, v in checks.items() if not v]
    if failed:
        detail += "; FAILED: " + "; ".join(failed)
    accept("paper-scale-mnist", not failed, detail)


@full_scale
@needs_mnist
def test_three_model_ordering(accept):
    ds = data.take(data.load_mnist(DATA_DIR), 12_000, 2_000)
    dims = [784, 128, 128, 128, 10]
    wins = 0
    pairs = []
    for trial in range(3):
        models = []
        for offset in (0, 101, 202):
            tc = nn.TrainConfig(
                epochs=25, batch_size=256, seed=trial + offset
            )
            models.append(_cached_train("mnist128", dims, tc, ds.train))
        a, b, c = models
        indirect = {}
        for method in ("wm", "ste"):
            if method == "wm":
                cfg = MatchConfig(method="wm_coord", seed=trial)
            else:
                cfg = MatchConfig(
                    method="ste", tau=1.0, outer_iters=5, inner_iters=24,
                    learning_rate=1.0, seed=trial,
                )
            rep_b = matching.match(a, b, cfg, ds.train)
            rep_c = matching.match(a, c, cfg, ds.train)
            bar = analysis.barrier(
                perm.apply_perm(rep_b.pi, b),
                perm.apply_perm(rep_c.pi, c),
                ds.test, grid_size=25,
            )
            indirect[method] = bar.midpoint_barrier
        pairs.append((indirect["wm"], indirect["ste"]))
        if indirect["wm"] < indirect["ste"]:
            wins += 1
    detail = "; ".join(
        f"trial {i}: WM {w:+.4f} vs STE {s:+.4f}"
        for i, (w, s) in enumerate(pairs)
    )
    accept("three-model-ordering", wins >= 2, f"{wins}/3 WM wins; {detail}")
