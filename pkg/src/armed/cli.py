"""Command-line experiment runner.

    armed run <config.toml>
    armed summarize <results-dir>
    armed gen-data <config.toml> --out <data.csv>

Exit codes: 0 success, 1 configuration error, 2 runtime failure.  The
``ARMED_OUTPUT_DIR`` environment variable overrides ``output_dir``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .config import load_config
from .errors import ArmedError, ConfigError
from .metrics import aggregate_importance, decision_grid, paired_t_test
from .numcore import make_rng
from .simgen import gen_spiral, load_dataset, save_dataset
from .trainer import crossvalidate, unseen_cluster_eval

log = logging.getLogger("armed")

RESULT_METRICS = ("accuracy", "auroc", "balanced_accuracy", "sensitivity", "specificity")
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def feature_names(p):
    return [f"x{i + 1}" for i in range(p)]


def build_dataset(cfg):
    if cfg.experiment == "custom_csv":
        return load_dataset(cfg.input)
    return gen_spiral(cfg.data)


def probe_ttests(reports, probe_columns, p):
    """Least-important true feature minus each probe, paired across folds."""
    rows = []
    names = feature_names(p)
    true_cols = [j for j in range(p) if j not in set(probe_columns)]
    for variant, reps in reports.items():
        ok = [r for r in reps if r.failed is None]
        if len(ok) < 2 or not true_cols:
            continue
        imp = np.array([r.feature_importance for r in ok])
        med = aggregate_importance(imp)
        ref = min(true_cols, key=lambda j: med[j])
        for probe in probe_columns:
            res = paired_t_test(imp[:, ref], imp[:, probe])
            rows.append((variant, names[probe], names[ref], res.t_statistic, res.p_value, res.df))
    return rows


def run(config_path, out_dir=None):
    cfg, text = load_config(config_path)
    out_dir = out_dir or os.environ.get("ARMED_OUTPUT_DIR") or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    ds = build_dataset(cfg)
    reports = crossvalidate(ds, cfg.k, cfg.train, cfg.variants, random_z=cfg.random_z,
                            n_jobs=cfg.n_jobs, keep_models=True)
    names = feature_names(ds.p)
    failed = []

    rows, imp_rows = [], []
    for variant, reps in reports.items():
        for r in reps:
            if r.failed:
                failed.append({"variant": variant, "fold": r.fold, "error": r.failed})
                rows.append((variant, r.fold, *([math.nan] * (len(RESULT_METRICS) + 1)), "failed"))
                continue
            rows.append((variant, r.fold, *(r.metrics[m] for m in RESULT_METRICS),
                         r.metrics["threshold"], "ok"))
            if variant in cfg.variants:
                imp_rows.extend((variant, r.fold, names[j], float(v))
                                for j, v in enumerate(r.feature_importance))
    write_atomic(os.path.join(out_dir, "results.csv"),
                 _csv_text(["variant", "fold", *RESULT_METRICS, "threshold", "status"], rows))
    write_atomic(os.path.join(out_dir, "importance.csv"),
                 _csv_text(["variant", "fold", "feature", "importance"], imp_rows))

    if ds.probe_columns:
        base = {v: reports[v] for v in cfg.variants}
        write_atomic(os.path.join(out_dir, "ttests.csv"),
                     _csv_text(["variant", "probe", "reference", "t", "p", "df"],
                               probe_ttests(base, ds.probe_columns, ds.p)))

    if ds.p == 2:
        grid_dir = os.path.join(out_dir, "grids")
        os.makedirs(grid_dir, exist_ok=True)
        for variant in cfg.variants:
            rep = reports[variant][0]
            if rep.model is None:
                continue
            for c in range(rep.model.n_clusters):
                z = np.eye(rep.model.n_clusters)[c]
                g = decision_grid(rep.model, z, tuple(cfg.grid_bounds), cfg.grid_resolution, cluster=c)
                write_atomic(os.path.join(grid_dir, f"{variant}_{c}.csv"),
                             _csv_text(["x1", "x2", "cluster", "probability"], g.rows()))

    if cfg.holdout_clusters:
        urows = []
        for variant in cfg.variants:
            for rep in range(cfg.replicates):
                tc = type(cfg.train)(**{**cfg.train.__dict__, "seed": cfg.train.seed + rep})
                res = unseen_cluster_eval(ds, cfg.holdout_clusters, tc, variant)
                for source, m in res["metrics"].items():
                    urows.append((variant, rep, source, *(m[k] for k in RESULT_METRICS)))
        write_atomic(os.path.join(out_dir, "unseen.csv"),
                     _csv_text(["variant", "replicate", "z_source", *RESULT_METRICS], urows))

    manifest = {
        "version": __version__,
        "config_path": str(config_path),
        "config_text": text,
        "config": cfg.to_dict(),
        "seed": {"data": cfg.data.seed, "train": cfg.train.seed},
        "n_samples": ds.n,
        "n_features": ds.p,
        "failed": failed,
    }
    write_atomic(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True))
    return EXIT_RUNTIME if failed else EXIT_OK


def summarize(results_dir, stream=sys.stdout):
    """Mean and normal-approximation 95% CI per variant and metric."""
    path = os.path.join(results_dir, "results.csv")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, newline="") as fh:
        records = [r for r in csv.DictReader(fh) if r.get("status", "ok") == "ok"]
    variants = list(dict.fromkeys(r["variant"] for r in records))
    out = []
    for v in variants:
        for m in RESULT_METRICS:
            vals = np.array([float(r[m]) for r in records if r["variant"] == v])
            mean = float(vals.mean())
            half = 1.96 * float(vals.std(ddof=1)) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
            out.append((v, m, mean, mean - half, mean + half, len(vals)))
    stream.write(f"{'variant':<28}{'metric':<20}{'mean':>8}{'ci_low':>9}{'ci_high':>9}{'k':>4}\n")
    for v, m, mean, lo, hi, k in out:
        stream.write(f"{v:<28}{m:<20}{mean:>8.4f}{lo:>9.4f}{hi:>9.4f}{k:>4}\n")
    return out


def gen_data(config_path, out_path):
    cfg, _ = load_config(config_path)
    if cfg.experiment == "custom_csv":
        raise ConfigError(f"{config_path}: gen-data needs a simulation experiment, not custom_csv")
    save_dataset(gen_spiral(cfg.data), out_path)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="armed", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a cross-validation experiment")
    p_run.add_argument("config")
    p_sum = sub.add_parser("summarize", help="print mean and 95%% CI per variant")
    p_sum.add_argument("results_dir")
    p_gen = sub.add_parser("gen-data", help="write a simulated dataset to CSV")
    p_gen.add_argument("config")
    p_gen.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return run(args.config)
        if args.command == "summarize":
            summarize(args.results_dir)
            return EXIT_OK
        gen_data(args.config, args.out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ArmedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
