"""Command line surface.

Subcommands mirror the analysis pipeline: train models, search permutations,
merge, and measure (barriers, Taylor estimates, alignment metrics, spectra,
landscapes, three-model experiments, conv kernel analysis, hyperparameter
sweeps). Every command writes JSON and CSV artifacts plus a manifest with
the resolved config and its hash; artifact JSON is deterministic for a fixed
config, with volatile data (wall times, timestamps) confined to the manifest.

Exit codes: 0 ok, 2 config error, 3 numeric divergence, 4 IO/format error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import itertools
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import analysis, convspec, data, matching, nn, perm
from .errors import ConfigError, DivergenceError, FormatError

# -- configuration ------------------------------------------------------------

_DEFAULTS = {
    "dataset": {
        "name": "blobs",
        "dir": None,
        "n": 4000,
        "dim": 32,
        "classes": 10,
        "seed": 0,
        "train_subset": None,
        "test_subset": None,
    },
    "model": {"hidden": [512, 512, 512]},
    "train": {
        "optimizer": "adam",
        "learning_rate": 1e-3,
        "weight_decay": 0.0,
        "batch_size": 512,
        "epochs": 100,
        "seed": 0,
    },
    "match": {
        "method": "wm_coord",
        "tau": 1.0,
        "outer_iters": 10,
        "inner_iters": 100,
        "learning_rate": 1.0,
        "seed": 0,
        "accept_only_improving": True,
    },
    "analysis": {
        "lambda_grid": 25,
        "landscape_resolution": 25,
        "gamma": 0.3,
        "split": "test",
    },
    "out": "out",
    "seeds": [0],
    "sweep": {"param": "width", "values": []},
}

_PROFILES = {
    "paper": {},
    "ci": {
        "model": {"hidden": [128, 128, 128]},
        "train": {"epochs": 25, "batch_size": 256},
        "dataset": {"train_subset": 12000, "test_subset": 2000},
        "analysis": {"landscape_resolution": 15},
    },
}

_SCHEMA = {
    "dataset": {
        "name": str, "dir": (str, type(None)), "n": int, "dim": int,
        "classes": int, "seed": int,
        "train_subset": (int, type(None)), "test_subset": (int, type(None)),
    },
    "model": {"hidden": list},
    "train": {
        "optimizer": str, "learning_rate": (int, float),
        "weight_decay": (int, float), "batch_size": int, "epochs": int,
        "seed": int,
    },
    "match": {
        "method": str, "tau": (int, float), "outer_iters": int,
        "inner_iters": int, "learning_rate": (int, float), "seed": int,
        "accept_only_improving": bool,
    },
    "analysis": {
        "lambda_grid": int, "landscape_resolution": int,
        "gamma": (int, float), "split": str,
    },
    "out": str,
    "seeds": list,
    "sweep": {"param": str, "values": list},
}


def _validate(doc, schema, path="config"):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a table, got {type(doc).__name__}")
    for key, val in doc.items():
        if key not in schema:
            raise ConfigError(f"{path}: unknown key {key!r}")
        want = schema[key]
        if isinstance(want, dict):
            _validate(val, want, f"{path}.{key}")
        elif not isinstance(val, want):
            names = (
                want.__name__ if isinstance(want, type)
                else "/".join(t.__name__ for t in want)
            )
            raise ConfigError(
                f"{path}.{key}: expected {names}, got {type(val).__name__}"
            )


def _merge_tables(base, overlay):
    out = copy.deepcopy(base)
    for key, val in overlay.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge_tables(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(args) -> dict:
    """defaults <- profile overlay <- config file <- command line flags."""
    cfg = _merge_tables(_DEFAULTS, _PROFILES[args.profile])
    if args.config is not None:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: not valid JSON: {exc}") from exc
        _validate(doc, _SCHEMA)
        cfg = _merge_tables(cfg, doc)
    if getattr(args, "seed", None) is not None:
        cfg["train"]["seed"] = args.seed
        cfg["match"]["seed"] = args.seed
        cfg["seeds"] = [args.seed]
    if getattr(args, "out", None) is not None:
        cfg["out"] = args.out
    if getattr(args, "method", None) is not None:
        cfg["match"]["method"] = args.method
    if getattr(args, "gamma", None) is not None:
        cfg["analysis"]["gamma"] = args.gamma
    if getattr(args, "lambda_grid", None) is not None:
        cfg["analysis"]["lambda_grid"] = args.lambda_grid
    _validate(cfg, _SCHEMA)
    if cfg["dataset"]["dir"] is None:
        cfg["dataset"]["dir"] = os.environ.get("PERMALIGN_DATA_DIR")
    return cfg


def config_hash(cfg: dict) -> str:
    """Hash of the experiment settings. The artifact directory is excluded so
    the same experiment hashes the same wherever its outputs land."""
    doc = {k: v for k, v in cfg.items() if k != "out"}
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True).encode("utf-8")
    ).hexdigest()


def load_dataset(cfg: dict) -> data.Dataset:
    d = cfg["dataset"]
    if d["name"] in ("mnist", "fashion_mnist"):
        if not d["dir"]:
            raise ConfigError(
                f"dataset {d['name']} needs dataset.dir or PERMALIGN_DATA_DIR"
            )
        ds = data.load_mnist(d["dir"], name=d["name"])
    elif d["name"] in ("blobs", "two_moons"):
        ds = data.make_synthetic(
            d["name"], d["n"], d["dim"], d["classes"], d["seed"]
        )
    else:
        raise ConfigError(f"unknown dataset {d['name']!r}")
    if d["train_subset"] or d["test_subset"]:
        ds = data.take(
            ds,
            d["train_subset"] or ds.train.inputs.shape[0],
            d["test_subset"] or ds.test.inputs.shape[0],
        )
    return ds


def _split(ds: data.Dataset, cfg: dict) -> nn.EvalSet:
    return ds.test if cfg["analysis"]["split"] == "test" else ds.train


# -- artifact helpers ---------------------------------------------------------


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(x) for x in row) + "\n")


def _csv_cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _strip_volatile(doc):
    if isinstance(doc, dict):
        return {
            k: _strip_volatile(v) for k, v in doc.items() if k != "wall_time"
        }
    if isinstance(doc, list):
        return [_strip_volatile(v) for v in doc]
    return doc


def _manifest(out_dir, command, cfg, args, t0, extra=None) -> None:
    doc = {
        "command": command,
        "profile": args.profile,
        "config": {k: v for k, v in cfg.items() if k != "out"},
        "config_hash": config_hash(cfg),
        "out": out_dir,
        "seeds": cfg["seeds"],
        "created": datetime.now(timezone.utc).isoformat(),
        "elapsed_seconds": time.perf_counter() - t0,
    }
    if extra:
        doc.update(extra)
    _write_json(os.path.join(out_dir, "manifest.json"), doc)


def _outdir(cfg) -> str:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    return out


def _load_perm(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    try:
        return perm.perm_from_json(doc)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _load_pair(args, cfg):
    a = nn.load_checkpoint(args.model_a)
    b = nn.load_checkpoint(args.model_b)
    if getattr(args, "perm", None):
        b = perm.apply_perm(_load_perm(args.perm), b)
    return a, b


# -- subcommands --------------------------------------------------------------


def cmd_train(args, cfg):
    t0 = time.perf_counter()
    out = _outdir(cfg)
    ds = load_dataset(cfg)
    tc = nn.TrainConfig(**cfg["train"])
    dims = [ds.input_dim] + list(cfg["model"]["hidden"]) + [ds.num_classes]
    history = []
    model = nn.train(dims, tc, ds.train.inputs, ds.train.labels, record=history)
    train_loss, train_acc = nn.evaluate(model, ds.train)
    test_loss, test_acc = nn.evaluate(model, ds.test)
    path = os.path.join(out, "model.nnpk")
    nn.save_checkpoint(model, path, seed=tc.seed, notes=f"dataset={ds.name}")
    _write_csv(
        os.path.join(out, "history.csv"),
        ["epoch", "loss"],
        [(h["epoch"], h["loss"]) for h in history],
    )
    _write_json(
        os.path.join(out, "train.json"),
        {
            "dataset": ds.name,
            "layer_dims": dims,
            "seed": tc.seed,
            "train_loss": train_loss,
            "train_accuracy": train_acc,
            "test_loss": test_loss,
            "test_accuracy": test_acc,
        },
    )
    _manifest(out, "train", cfg, args, t0, {"checkpoint": path})
    return 0


def cmd_match(args, cfg):
    t0 = time.perf_counter()
    out = _outdir(cfg)
    a = nn.load_checkpoint(args.model_a)
    b = nn.load_checkpoint(args.model_b)
    mc = matching.MatchConfig(**cfg["match"])
    report_data = None
    if mc.method in ("am", "ste"):
        ds = load_dataset(cfg)
        report_data = ds.train
    report = matching.match(a, b, mc, report_data)
    _write_json(
        os.path.join(out, "match.json"), _strip_volatile(report.to_json())
    )
    _write_json(os.path.join(out, "perm.json"), perm.perm_to_json(report.pi))
    _manifest(out, "match", cfg, args, t0,
              {"match_wall_time": report.wall_time})
    return 0


def cmd_merge(args, cfg):
    t0 = time.perf_counter()
    out = _outdir(cfg)
    a, b = _load_pair(args, cfg)
    ds = load_dataset(cfg)
    merged = analysis.interpolate(a, b, args.lam)
    train_loss, train_acc = nn.evaluate(merged, ds.train)
    test_loss, test_acc = nn.evaluate(merged, ds.test)
    path = os.path.join(out, "merged.nnpk")
    nn.save_checkpoint(merged, path, notes=f"lam={args.lam}")
    _write_json(
        os.path.join(out, "merge.json"),
        {
            "lam": args.lam,
            "train_loss": train_loss,
            "train_accuracy": train_acc,
            "test_loss": test_loss,
            "test_accuracy": test_acc,
        },
    )
    _manifest(out, "merge", cfg, args, t0, {"checkpoint": path})
    return 0


def cmd_barrier(args, cfg):
    t0 = time.perf_counter()
    out = _outdir(cfg)
    a, b = _load_pair(args, cfg)
    ds = load_dataset(cfg)
    split = _split(ds, cfg)
    report = analysis.barrier(
        a, b, split,
        grid_size=cfg["analysis"]["lambda_grid"],
        split_name=cfg["analysis"]["split"],
    )
    _write_json(os.path.join(out, "barrier.json"), report.to_json())
    _write_csv(
        os.path.join(out, "barrier.csv"),
        ["lambda", "loss", "accuracy"],
        zip(
            (float(x) for x in report.lambdas),
            (float(x) for x in report.losses),
            (float(x) for x in report.accuracies),
        ),
    )
    _manifest(out, "barrier", cfg, args, t0)
    return 0


def cmd_taylor(args, cfg):
    t0 = time.perf_counter()
    out = _outdir(cfg)
    a, b = _load_pair(args, cfg)
    ds = load_dataset(cfg)
    est = analysis.taylor_barrier(
        a, b, _split(ds, cfg), grid_size=cfg["analysis"]["lambda_grid"]
    )
    _write_json(os.path.join(out, "taylor.json"), est.to_json())
    _write_csv(
        os.path.join(out, "taylor.csv"),
        ["lambda", "value", "gradient_term", "hessian_term"],
        [
            (float(lam), float(g + h), float(g), float(h))
            for lam, (g, h) in zip(est.lambdas, est.per_lambda_terms)
        ],
    )
    _manifest(out, "taylor", cfg, args, t0)
    return 0


def cmd_r_metric(args, cfg):
    t0 = time.perf_counter()
    out = _outdir(cfg)
    a = nn.load_checkpoint(args.model_a)
    b = nn.load_checkpoint(args.model_b)
    pi = (
        _load_perm(args.perm)
        if args.perm
        else perm.identity_perm(a.layer_dims[1:-1])
    )
    report = analysis.compute_R(a, b, pi, cfg["analysis"]["gamma"])
    _write_json(os.path.join(out, "r_metric.json"), report.to_json())
    _manifest(out, "r-metric", cfg, args, t0)
    return 0


def cmd_spectrum(args, cfg):
    t0 = time.perf_counter()
    out = _outdir(cfg)
    model = nn.load_checkpoint(args.model)
    spec = analysis.spectrum(model)
    _write_json(
        os.path.join(out, "spectrum.json"),
        {"per_layer": [[float(x) for x in s] for s in spec]},
    )
    rows = [
        (l, i, float(x)) for l, s in enumerate(spec) for i, x in enumerate(s)
    ]
    _write_csv(os.path.join(out, "spectrum.csv"), ["layer", "index", "value"], rows)
    _manifest(out, "spectrum", cfg, args, t0)
    return 0


def cmd_input_align(args, cfg):
    t0 = time.perf_counter()
    out = _outdir(cfg)
    model = nn.load_checkpoint(args.model)
    ds = load_dataset(cfg)
    vals = analysis.input_alignment(model, _split(ds, cfg))
    _write_json(
        os.path.join(out, "input_align.json"),
        {"per_layer": [[float(x) for x in v] for v in vals]},
    )
    rows = [
        (l, i, float(x)) for l, v in enumerate(vals) for i, x in enumerate(v)
    ]
    _write_csv(
        os.path.join(out, "input_align.csv"), ["layer", "index", "value"], rows
    )
    _manifest(out, "input-align", cfg, args, t0)
    return 0


def cmd_landscape(args, cfg):
    t0 = time.perf_counter()
    out = _outdir(cfg)
    a = nn.load_checkpoint(args.model_a)
    b = nn.load_checkpoint(args.model_b)
    c = nn.load_checkpoint(args.model_c)
    if args.perm_b:
        b = perm.apply_perm(_load_perm(args.perm_b), b)
    if args.perm_c:
        c = perm.apply_perm(_load_perm(args.perm_c), c)
    ds = load_dataset(cfg)
    grid = analysis.landscape(
        a, b, c, _split(ds, cfg),
        resolution=cfg["analysis"]["landscape_resolution"],
    )
    _write_json(os.path.join(out, "landscape.json"), grid.to_json())
    rows = [
        (float(x), float(y), float(grid.losses[iy, ix]),
         float(grid.accuracies[iy, ix]))
        for iy, y in enumerate(grid.ys)
        for ix, x in enumerate(grid.xs)
    ]
    _write_csv(
        os.path.join(out, "landscape.csv"), ["x", "y", "loss", "accuracy"], rows
    )
    _manifest(out, "landscape", cfg, args, t0)
    return 0


def cmd_three_model(args, cfg):
    t0 = time.perf_counter()
    out = _outdir(cfg)
    a = nn.load_checkpoint(args.model_a)
    b = nn.load_checkpoint(args.model_b)
    c = nn.load_checkpoint(args.model_c)
    method_map = {"wm_coord": "wm", "ste": "ste"}
    method = cfg["match"]["method"]
    if method not in method_map:
        raise ConfigError(
            f"three-model supports wm_coord or ste, got {method!r}"
        )
    ds = load_dataset(cfg)
    mc = matching.MatchConfig(**cfg["match"])
    report = analysis.three_model_experiment(
        a, b, c, method_map[method], _split(ds, cfg), match_cfg=mc,
        barrier_grid=cfg["analysis"]["lambda_grid"],
        landscape_resolution=cfg["analysis"]["landscape_resolution"],
        gammas=(0.0, cfg["analysis"]["gamma"]),
    )
    _write_json(
        os.path.join(out, "three_model.json"),
        _strip_volatile(report.to_json()),
    )
    grid = report.grid
    rows = [
        (float(x), float(y), float(grid.losses[iy, ix]),
         float(grid.accuracies[iy, ix]))
        for iy, y in enumerate(grid.ys)
        for ix, x in enumerate(grid.xs)
    ]
    _write_csv(
        os.path.join(out, "landscape.csv"), ["x", "y", "loss", "accuracy"], rows
    )
    _manifest(out, "three-model", cfg, args, t0)
    return 0


def cmd_conv_analyze(args, cfg):
    t0 = time.perf_counter()
    out = _outdir(cfg)
    ka = convspec.load_kernel(args.kernel)
    sv = convspec.conv_singular_values(ka)
    doc = {
        "n": ka.n,
        "m": ka.m,
        "singular_values": [float(x) for x in sv],
    }
    if args.kernel_b:
        kb = convspec.load_kernel(args.kernel_b)
        if ka.m > 6:
            raise ConfigError(
                f"exhaustive channel matching is limited to m <= 6, got {ka.m}"
            )
        best = None
        ident = tuple(range(ka.m))
        for p_out in itertools.permutations(range(ka.m)):
            for p_in in itertools.permutations(range(ka.m)):
                obj = convspec.conv_alignment_objective(
                    ka, kb, np.array(p_out), np.array(p_in)
                )
                key = (obj, p_out == ident and p_in == ident)
                if best is None or key > best[0]:
                    best = (key, p_out, p_in)
        (obj, _), p_out, p_in = best
        doc["best_objective"] = float(obj)
        doc["best_p_out"] = list(p_out)
        doc["best_p_in"] = list(p_in)
        doc["identity_objective"] = float(
            convspec.conv_alignment_objective(
                ka, kb, np.arange(ka.m), np.arange(ka.m)
            )
        )
    _write_json(os.path.join(out, "conv.json"), doc)
    _write_csv(
        os.path.join(out, "conv.csv"),
        ["index", "value"],
        [(i, float(x)) for i, x in enumerate(sv)],
    )
    _manifest(out, "conv-analyze", cfg, args, t0)
    return 0


def _large_singular_ratio(model, threshold: float = 0.3) -> float:
    """Fraction of singular values at least `threshold` of their layer's
    largest, pooled over layers."""
    spec = analysis.spectrum(model)
    kept = sum(int(np.sum(s >= threshold * s[0])) for s in spec)
    total = sum(s.size for s in spec)
    return kept / total


def cmd_sweep(args, cfg):
    t0 = time.perf_counter()
    out = _outdir(cfg)
    param = cfg["sweep"]["param"]
    values = cfg["sweep"]["values"]
    if param not in ("width", "weight_decay", "learning_rate"):
        raise ConfigError(
            f"sweep.param must be width, weight_decay or learning_rate, "
            f"got {param!r}"
        )
    if not values:
        raise ConfigError("sweep.values must be a nonempty list")
    ds = load_dataset(cfg)
    split = _split(ds, cfg)
    rows = []
    results = []
    for value in values:
        for seed in cfg["seeds"]:
            run_cfg = copy.deepcopy(cfg)
            if param == "width":
                run_cfg["model"]["hidden"] = [int(value)] * len(
                    cfg["model"]["hidden"]
                )
            else:
                run_cfg["train"][param] = float(value)
            dims = (
                [ds.input_dim] + list(run_cfg["model"]["hidden"])
                + [ds.num_classes]
            )
            models = []
            for offset in (0, 101):
                tc = nn.TrainConfig(
                    **{**run_cfg["train"], "seed": seed + offset}
                )
                models.append(
                    nn.train(dims, tc, ds.train.inputs, ds.train.labels)
                )
            a, b = models
            mc = matching.MatchConfig(
                **{**run_cfg["match"], "method": "wm_coord"}
            )
            rep = matching.wm_coordinate(a, b, mc)
            bp = perm.apply_perm(rep.pi, b)
            bar = analysis.barrier(
                a, bp, split, grid_size=cfg["analysis"]["lambda_grid"]
            )
            ratio = _large_singular_ratio(a)
            row = {
                "param": param,
                "value": value,
                "seed": seed,
                "large_singular_ratio": ratio,
                "reduction_rate": rep.reduction_rate,
                "midpoint_barrier": bar.midpoint_barrier,
                "test_accuracy_a": nn.evaluate(a, ds.test)[1],
            }
            results.append(row)
            rows.append(
                (param, value, seed, ratio, rep.reduction_rate,
                 bar.midpoint_barrier, row["test_accuracy_a"])
            )
    _write_json(os.path.join(out, "sweep.json"), {"runs": results})
    _write_csv(
        os.path.join(out, "sweep.csv"),
        ["param", "value", "seed", "large_singular_ratio", "reduction_rate",
         "midpoint_barrier", "test_accuracy_a"],
        rows,
    )
    _manifest(out, "sweep", cfg, args, t0)
    return 0


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="permalign",
        description="Permutation alignment and mode connectivity toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override all seeds")
        p.add_argument("--out", help="artifact directory")
        p.add_argument(
            "--profile", choices=("ci", "paper"), default="ci",
            help="scale preset (default ci)",
        )

    p = sub.add_parser("train", help="train one MLP")
    common(p)

    p = sub.add_parser("match", help="find a permutation aligning B to A")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument(
        "--method", choices=("wm_coord", "wm_sinkhorn", "am", "ste")
    )
    common(p)

    p = sub.add_parser("merge", help="interpolate two checkpoints")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument("--perm", help="permutation JSON applied to B")
    p.add_argument("--lam", type=float, default=0.5)
    common(p)

    p = sub.add_parser("barrier", help="loss barrier along the path")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument("--perm")
    p.add_argument("--lambda-grid", type=int, dest="lambda_grid")
    common(p)

    p = sub.add_parser("taylor", help="second-order barrier estimate")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument("--perm")
    p.add_argument("--lambda-grid", type=int, dest="lambda_grid")
    common(p)

    p = sub.add_parser("r-metric", help="singular-vector alignment R")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument("--perm")
    p.add_argument("--gamma", type=float)
    common(p)

    p = sub.add_parser("spectrum", help="per-layer singular values")
    p.add_argument("model")
    common(p)

    p = sub.add_parser("input-align", help="E[(v . z)^2] per singular index")
    p.add_argument("model")
    common(p)

    p = sub.add_parser("landscape", help="2-D loss plane of three models")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument("model_c")
    p.add_argument("--perm-b", dest="perm_b")
    p.add_argument("--perm-c", dest="perm_c")
    common(p)

    p = sub.add_parser("three-model", help="align two models onto a third")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument("model_c")
    p.add_argument("--method", choices=("wm_coord", "ste"))
    common(p)

    p = sub.add_parser("conv-analyze", help="spectral analysis of a kernel")
    p.add_argument("kernel")
    p.add_argument("kernel_b", nargs="?", default=None)
    common(p)

    p = sub.add_parser("sweep", help="hyperparameter grid study")
    common(p)

    return parser


_COMMANDS = {
    "train": cmd_train,
    "match": cmd_match,
    "merge": cmd_merge,
    "barrier": cmd_barrier,
    "taylor": cmd_taylor,
    "r-metric": cmd_r_metric,
    "spectrum": cmd_spectrum,
    "input-align": cmd_input_align,
    "landscape": cmd_landscape,
    "three-model": cmd_three_model,
    "conv-analyze": cmd_conv_analyze,
    "sweep": cmd_sweep,
}


def _fail(code: int, kind: str, message: str) -> int:
    record = {"error": {"code": code, "kind": kind, "message": message}}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        return _fail(2, "config", str(exc))
    except DivergenceError as exc:
        return _fail(3, "divergence", str(exc))
    except FormatError as exc:
        return _fail(4, "format", str(exc))
    except OSError as exc:
        return _fail(4, "io", str(exc))
    except ValueError as exc:
        return _fail(2, "config", str(exc))


if __name__ == "__main__":
    sys.exit(main())
