"""Command-line entry point: ``sparsegp {generate,train,predict,benchmark,report}``.

Every command reads one JSON config (``--config``); flags override its keys.
Example config::

    {
      "data": {"csv": "stations.csv", "coords": ["lon", "lat", "day"], "value": "tmax"},
      "kernel": {"n_sums": 2, "n_bumps": 4, "core": "none"},
      "batch_size": 1000, "workers": 4, "iterations": 160,
      "objective": "plain", "output_dir": "run1", "seed": 0
    }

``data`` may instead hold ``{"synthetic": {...ClusterSpec fields...}}`` or
``{"synthetic": "two_clusters", "n_per": 100, "dim": 1}``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from .assembly import (
    plan_batches,
    run_scaling_benchmark,
    write_benchmark_csv,
)
from .data import ClusterSpec, Normalization, generate_synthetic, ingest_csv, export_csv
from .errors import InvalidInputError
from .linalg import write_matrix_market
from .training import (
    MCMCConfig,
    build_model,
    default_hyperparameters,
    load_hyperparameters,
    mcmc_train,
    posterior_predict,
    save_hyperparameters,
)

log = logging.getLogger("sparsegp")

DEFAULTS = {
    "data": {"synthetic": "two_clusters", "n_per": 100, "dim": 1},
    "kernel": {"n_sums": 2, "n_bumps": 2, "core": "none"},
    "init": None,
    "batch_size": 1000,
    "workers": 1,
    "iterations": 160,
    "proposal_scale": 0.1,
    "objective": "plain",
    "sparsity_requirement": 1.0,
    "output_dir": "sparsegp_out",
    "seed": 0,
    "export_covariance": False,
}

FLAG_KEYS = ("seed", "workers", "batch_size", "iterations", "objective",
             "sparsity_requirement", "output_dir", "export_covariance")


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if path:
        with open(path) as fh:
            user = json.load(fh)
        for k, v in user.items():
            if isinstance(v, dict) and isinstance(cfg.get(k), dict):
                cfg[k] = {**cfg[k], **v} if k == "kernel" else v
            else:
                cfg[k] = v
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    return cfg


def load_dataset(cfg: dict):
    data = cfg["data"]
    if "csv" in data:
        return ingest_csv(data["csv"], data["coords"], data["value"], data.get("noise"),
                          subsample=data.get("subsample"), seed=cfg["seed"])
    syn = data.get("synthetic")
    if syn == "two_clusters":
        spec = ClusterSpec.two_clusters(int(data.get("n_per", 100)), int(data.get("dim", 1)),
                                        noise_std=float(data.get("noise_std", 0.05)))
    elif isinstance(syn, dict):
        spec = ClusterSpec(**syn)
    else:
        raise InvalidInputError("config 'data' needs a 'csv' or 'synthetic' entry")
    return generate_synthetic(spec, seed=cfg["seed"])


def initial_hyperparameters(cfg: dict, ds):
    if cfg.get("init"):
        return load_hyperparameters(cfg["init"])
    k = cfg["kernel"]
    return default_hyperparameters(ds, int(k["n_sums"]), int(k["n_bumps"]), k.get("core", "none"))


def cmd_generate(cfg: dict, args) -> None:
    ds = load_dataset(cfg)
    out = Path(args.output)
    export_csv(out, ds)
    log.info("wrote %d points to %s", ds.n, out)


def cmd_train(cfg: dict, args) -> None:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(cfg)
    init = initial_hyperparameters(cfg, ds)
    mc = MCMCConfig(int(cfg["iterations"]), float(cfg["proposal_scale"]), int(cfg["seed"]),
                    cfg["objective"], float(cfg["sparsity_requirement"]))
    t0 = time.perf_counter()
    trace, model = mcmc_train(ds, init, mc, workers=int(cfg["workers"]), batch_size=int(cfg["batch_size"]))
    elapsed = time.perf_counter() - t0

    save_hyperparameters(out / "hyperparameters.json", model.hyperparameters,
                         extra={"log_likelihood": trace.best_log_likelihood})
    trace.write_jsonl(out / "trace.jsonl")
    stats = model.stats.as_dict()
    stats["s_bound"] = model.s_bound()
    with open(out / "stats.json", "w") as fh:
        json.dump(stats, fh, indent=2)
    if cfg.get("export_covariance"):
        write_matrix_market(out / "covariance.mtx", model.K, comment="kernel matrix without noise")
    accepted = sum(r.accepted for r in trace.records)
    lines = [
        f"points: {ds.n}  dim: {ds.dim}",
        f"objective: {mc.objective}  iterations: {mc.iterations}  accepted: {accepted}",
        f"initial lnL: {trace.initial.log_likelihood:.6g}",
        f"best lnL: {trace.best_log_likelihood:.6g}",
        f"nnz: {stats['nnz']}  empirical_s: {stats['empirical_s']:.6g}  s_bound: {stats['s_bound']:.6g}",
        f"training time: {elapsed:.3f} s",
    ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


def parse_grid(specs: list[str], dim: int) -> list[np.ndarray]:
    if len(specs) != dim:
        raise InvalidInputError(f"grid needs {dim} dimension specs, got {len(specs)}")
    axes = []
    for s in specs:
        lo, hi, count = s.split(",")
        axes.append(np.linspace(float(lo), float(hi), int(count)))
    return axes


def cmd_predict(cfg: dict, args) -> None:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(cfg)
    h = load_hyperparameters(args.hyperparameters)
    norm = ds.meta.get("normalization", Normalization.identity(ds.dim))
    axes = parse_grid(args.grid, ds.dim)
    raw = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, ds.dim)
    queries = norm.normalize(raw)
    model = build_model(ds, h, int(cfg["batch_size"]), int(cfg["workers"]))
    post = posterior_predict(model, queries)
    coords = norm.denormalize(queries)
    names = ds.meta.get("columns", {}).get("coords") or [f"x{k}" for k in range(ds.dim)]
    path = Path(args.output) if args.output else out / "predictions.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(names) + ["mean", "variance"])
        for c, m, v in zip(coords, post.mean, post.variance):
            w.writerow([repr(float(x)) for x in c] + [repr(float(m)), repr(float(v))])
    print(f"wrote {len(coords)} predictions to {path}")


def cmd_benchmark(cfg: dict, args) -> None:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(cfg)
    h = initial_hyperparameters(cfg, ds)
    counts = [int(c) for c in args.worker_counts.split(",")]
    plan = plan_batches(ds.n, min(int(cfg["batch_size"]), ds.n))
    rows = run_scaling_benchmark(ds, plan, h.core, h.kernel, counts, repeats=args.repeats)
    path = Path(args.output) if args.output else out / "benchmark.csv"
    write_benchmark_csv(path, rows)
    for r in rows:
        print(f"workers={r.workers:3d}  measured={r.wall_time_s:.4f}s  model={r.model_time_s:.4f}s")


def cmd_report(cfg: dict, args) -> None:
    ds = load_dataset(cfg)
    h = load_hyperparameters(args.hyperparameters) if args.hyperparameters else initial_hyperparameters(cfg, ds)
    model = build_model(ds, h, int(cfg["batch_size"]), int(cfg["workers"]))
    stats = model.stats.as_dict()
    stats["s_bound"] = model.s_bound()
    print(json.dumps(stats, indent=2))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--batch-size", type=int, dest="batch_size")
    common.add_argument("--iterations", type=int)
    common.add_argument("--objective", choices=["plain", "augmented", "constrained"])
    common.add_argument("--sparsity-requirement", type=float, dest="sparsity_requirement")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--export-covariance", action="store_true", default=None, dest="export_covariance")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sparsegp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("generate", parents=[common], help="write the configured synthetic dataset as CSV")
    g.add_argument("--output", required=True)
    g.set_defaults(func=cmd_generate)
    t = sub.add_parser("train", parents=[common], help="MCMC training")
    t.set_defaults(func=cmd_train)
    pr = sub.add_parser("predict", parents=[common], help="posterior mean/variance on a grid")
    pr.add_argument("--hyperparameters", required=True)
    pr.add_argument("--grid", action="append", required=True, metavar="MIN,MAX,COUNT",
                    help="one per dimension, in raw coordinate units; write --grid=-5,5,11 for negative bounds")
    pr.add_argument("--output")
    pr.set_defaults(func=cmd_predict)
    b = sub.add_parser("benchmark", parents=[common], help="assembly scaling measurement")
    b.add_argument("--worker-counts", default="1", dest="worker_counts")
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--output")
    b.set_defaults(func=cmd_benchmark)
    r = sub.add_parser("report", parents=[common], help="sparsity statistics for given hyperparameters")
    r.add_argument("--hyperparameters")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = None
    try:
        cfg = load_config(args.config, {k: getattr(args, k, None) for k in FLAG_KEYS})
        args.func(cfg, args)
    except Exception as exc:
        msg = f"{type(exc).__name__}: {exc}"
        print(f"error: {msg}", file=sys.stderr)
        out = Path(cfg["output_dir"]) if cfg else Path(DEFAULTS["output_dir"])
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.txt").write_text(msg + "\n\n" + traceback.format_exc())
        except OSError:
            pass
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
