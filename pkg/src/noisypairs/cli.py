"""Command-line entry point: ``noisypairs <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 missing/unreadable input file,
4 invalid input or file format, 5 training failure, 6 sweep finished with
failed cells.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import io as nio
from .estimation import estimate_from_model, estimation_error
from .exceptions import InputError, TrainingError
from .nn import load_checkpoint, save_checkpoint
from .noise import (LabeledDataset, corrupt_labels, gaussian_blobs,
                    make_similarity_pairs, symmetric_transition)
from .pipeline import (BoundInputs, ExperimentConfig, ExperimentReport,
                       config_from_mapping, dump_config, evaluate_classifier,
                       frobenius_norms, generalization_bound, load_config,
                       run_experiment)
from .training import train_on_pairs

log = logging.getLogger("noisypairs")

OUTPUT_ENV = "NOISYPAIRS_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INPUT, EXIT_TRAIN, EXIT_SWEEP = 0, 2, 3, 4, 5, 6

# flags that map straight onto ExperimentConfig fields
OVERRIDES = {
    "num_classes": ("--C", int), "n": ("--n", int), "n_test": ("--n-test", int),
    "dim": ("--dim", int), "separation": ("--separation", float),
    "spread": ("--spread", float), "rho": ("--rho", float),
    "hidden": ("--hidden", str), "activation": ("--activation", str),
    "lr": ("--lr", float), "decay_every": ("--decay-every", int),
    "decay_factor": ("--decay-factor", float), "batch_size": ("--batch-size", int),
    "epochs": ("--epochs", int), "pairing": ("--pairing", str),
    "pairs_per_batch": ("--pairs-per-batch", int), "pos_weight": ("--pos-weight", float),
    "tau": ("--tau", float), "val_fraction": ("--val-fraction", float),
    "anchors_k": ("--anchors-k", int), "anchor_percentile": ("--anchor-percentile", float),
    "method": ("--method", str), "delta": ("--delta", float),
    "weight_decay": ("--weight-decay", float),
}


def _out_dir(arg: Optional[str]) -> Path:
    path = Path(arg or os.environ.get(OUTPUT_ENV) or "noisypairs-out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _add_overrides(p):
    for key, (flag, typ) in OVERRIDES.items():
        p.add_argument(flag, dest=key, type=typ, default=None)
    p.add_argument("--no-bias", dest="bias", action="store_false", default=None)
    p.add_argument("--warm-start", dest="warm_start", action="store_true", default=None)
    p.add_argument("--set", dest="extra", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key")


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    values: Dict[str, object] = {}
    for item in args.extra:
        if "=" not in item:
            raise InputError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v
    for key in list(OVERRIDES) + ["bias", "warm_start"]:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v if not (key == "hidden") else str(v)
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    return config_from_mapping(values, cfg)


# -- subcommands ----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    out = _out_dir(args.out)
    data = gaussian_blobs(args.C, args.n_per_class, args.dim, args.separation,
                          args.spread, args.seed, split=args.split)
    path = nio.write_dataset(data, out / args.name)
    print(path)
    return EXIT_OK


def cmd_corrupt(args) -> int:
    data = nio.read_dataset(args.data)
    T = nio.read_matrix(args.T) if args.T else symmetric_transition(data.num_classes, args.rho)
    out = _out_dir(args.out)
    noisy = corrupt_labels(data.y, T, args.seed)
    path = nio.write_dataset(LabeledDataset(data.X, noisy, data.num_classes, data.split),
                             out / args.name)
    nio.write_matrix(T, out / "T_true.txt")
    print(path)
    return EXIT_OK


def cmd_pairs(args) -> int:
    data = nio.read_dataset(args.data)
    out = _out_dir(args.out)
    pairs = make_similarity_pairs(data.y, args.strategy, k=args.k, seed=args.seed)
    path = nio.write_pairs(pairs, out / args.name)
    print(f"{path} pairs={len(pairs)} positive_fraction={pairs.positive_fraction():.6f}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    data = nio.read_dataset(args.data)
    T = nio.read_matrix(args.T) if args.T else None
    out = _out_dir(args.out)
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    order = np.random.default_rng(seeds[0]).permutation(len(data))
    n_val = max(2, int(round(cfg.val_fraction * len(data))))
    val, tr = order[:n_val], order[n_val:]
    val_pairs = make_similarity_pairs(data.y[val])
    res = train_on_pairs(data.X[tr], data.y[tr], data.X[val], val_pairs, data.num_classes,
                         cfg.train_config(), seeds[1], T=T,
                         select="loss" if T is None and args.select_loss else "error")
    save_checkpoint(res.model, out / "model.npz")
    curves = [{"stage": "train", "epoch": e, "train_loss": res.train_loss[e],
               "val_loss": res.val_loss[e], "val_pair_error": res.val_error[e],
               "lr": res.lr[e]} for e in range(len(res.train_loss))]
    nio.write_curves_csv(curves, out / "curves.csv")
    print(json.dumps({"checkpoint": str(out / "model.npz"),
                      "selected_epoch": res.selected_epoch}))
    return EXIT_OK


def cmd_estimate_t(args) -> int:
    model = load_checkpoint(args.checkpoint)
    data = nio.read_dataset(args.data)
    out = _out_dir(args.out)
    est = estimate_from_model(model, data.X, args.k, args.percentile)
    nio.write_matrix(est.T_hat, out / "T_hat.txt")
    nio.write_heatmap_csv(est.T_hat, out / "T_hat.csv")
    summary = {"T_hat": est.T_hat.tolist(),
               "anchors": [a.tolist() for a in est.anchors.indices]}
    if args.true_T:
        summary["epsilon"] = estimation_error(nio.read_matrix(args.true_T), est.T_hat)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    data = nio.read_dataset(args.data, split="test")
    ev = evaluate_classifier(model, data, align=not args.no_align)
    print(json.dumps({"accuracy": ev.accuracy, "confusion": ev.confusion.tolist(),
                      "mapping": ev.mapping.tolist()}))
    return EXIT_OK


def cmd_bound(args) -> int:
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        frob = frobenius_norms(model)
        depth = model.depth
    else:
        if args.frob is None:
            raise InputError("bound needs --frob values or --checkpoint")
        frob = args.frob
        depth = args.depth if args.depth is not None else len(frob)
        if len(frob) == 1 and depth > 1:
            frob = frob * depth
    inp = BoundInputs(B=args.B, num_classes=args.C, depth=depth, frobenius=frob,
                      M=args.M, delta=args.delta, n=args.n)
    print(repr(generalization_bound(inp)))
    return EXIT_OK


def write_report(report: ExperimentReport, out: Path, model=None):
    (out / "report.json").write_text(report.to_json())
    nio.write_curves_csv(report.curves, out / "curves.csv")
    if report.T_hat is not None:
        nio.write_matrix(report.T_hat, out / "T_hat.txt")
        nio.write_heatmap_csv(report.T_hat, out / "T_hat.csv")
    if report.T_true is not None:
        nio.write_matrix(report.T_true, out / "T_true.txt")
    if model is not None:
        save_checkpoint(model, out / "model.npz")


def cmd_experiment(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(args.out)
    dump_config(cfg, out / "config.ini")
    report, model = run_experiment(cfg, return_model=True)
    write_report(report, out, model)
    if report.status != "ok":
        print(f"experiment failed in {report.failed_stage}: {report.error}", file=sys.stderr)
        return EXIT_TRAIN
    print(json.dumps({"test_accuracy": report.test_accuracy, "epsilon": report.epsilon,
                      "selected_epoch": report.selected_epoch}))
    return EXIT_OK


# -- sweep ----------------------------------------------------------------------

def _run_cell(cfg_dict: dict, out: Optional[str]):
    cfg = ExperimentConfig(**cfg_dict)
    try:
        report, model = run_experiment(cfg, return_model=True)
    except (InputError, TrainingError, OSError) as exc:
        return cfg_dict, None, str(exc)
    if out is not None:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        write_report(report, path, model)
    if report.status != "ok":
        return cfg_dict, None, report.error
    return cfg_dict, report.test_accuracy, None


def run_sweep(base: ExperimentConfig, rhos: Sequence[float], methods: Sequence[str],
              seeds: Sequence[int], out: Optional[Path] = None, jobs: int = 1):
    """One experiment per (rho, method, seed); returns the aggregated table rows.

    Each row holds ``method``, ``rho``, mean and std (population, ddof=0) of
    the clean test accuracy in percent, the per-seed values, and a ``FAILED``
    marker when any seed failed. Row order is sorted, so the result does not
    depend on the order of the inputs.
    """
    if not rhos or not methods or not seeds:
        raise InputError("sweep needs at least one rho, one method and one seed")
    rhos = sorted(set(float(r) for r in rhos))
    methods = sorted(set(methods))
    seeds = sorted(set(int(s) for s in seeds))
    cells = []
    for rho, method, seed in product(rhos, methods, seeds):
        cfg = base.replace(rho=rho, method=method, seed=seed)
        cell_out = None if out is None else str(out / f"{method}_rho{rho:g}_seed{seed}")
        cells.append((asdict(cfg), cell_out))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, *zip(*cells)))
    else:
        results = [_run_cell(c, o) for c, o in cells]
    table: Dict[tuple, list] = {}
    failed: Dict[tuple, bool] = {}
    for cfg_dict, acc, err in results:
        key = (cfg_dict["method"], cfg_dict["rho"])
        table.setdefault(key, [])
        if err is not None:
            failed[key] = True
            log.warning("cell %s seed %s failed: %s", key, cfg_dict["seed"], err)
        else:
            table[key].append(acc * 100.0)
    rows = []
    for key in sorted(table):
        accs = table[key]
        rows.append({"method": key[0], "rho": key[1],
                     "mean": float(np.mean(accs)) if accs else float("nan"),
                     "std": float(np.std(accs)) if accs else float("nan"),
                     "n_seeds": len(accs), "values": accs,
                     "status": "FAILED" if failed.get(key) else "ok"})
    return rows


def write_sweep_csv(rows, path):
    """Long format (one line per cell) plus a wide ``table.csv`` next to it."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "rho", "mean", "std", "n_seeds", "status"])
        for r in rows:
            w.writerow([r["method"], repr(r["rho"]), repr(r["mean"]), repr(r["std"]),
                        r["n_seeds"], r["status"]])
    rhos = sorted({r["rho"] for r in rows})
    methods = sorted({r["method"] for r in rows})
    cell = {(r["method"], r["rho"]): r for r in rows}
    with open(path.with_name("table.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Noise"] + [f"{r:g}" for r in rhos])
        for m in methods:
            line = [m]
            for r in rhos:
                c = cell.get((m, r))
                if c is None:
                    line.append("")
                elif c["status"] == "FAILED":
                    line.append("FAILED")
                else:
                    line.append(f"{c['mean']:.2f}±{c['std']:.2f}")
            w.writerow(line)
    return path


def cmd_sweep(args) -> int:
    base = _config_from_args(args)
    out = _out_dir(args.out)
    rows = run_sweep(base, args.rhos, args.methods, args.seeds, out, args.jobs)
    write_sweep_csv(rows, out / "results.csv")
    print((out / "table.csv").read_text(), end="")
    return EXIT_SWEEP if any(r["status"] == "FAILED" for r in rows) else EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noisypairs",
                                description="Learn classifiers from noisy similarity pairs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a Gaussian-blob dataset")
    g.add_argument("--C", type=int, default=3)
    g.add_argument("--n-per-class", type=int, default=1000)
    g.add_argument("--dim", type=int, default=8)
    g.add_argument("--separation", type=float, default=4.0)
    g.add_argument("--spread", type=float, default=1.0)
    g.add_argument("--split", default="train", choices=["train", "validation", "test"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--name", default="data.txt")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_data)

    c = sub.add_parser("corrupt", help="flip class labels through a transition matrix")
    c.add_argument("--data", required=True)
    c.add_argument("--rho", type=float, default=0.0)
    c.add_argument("--T", help="matrix file; overrides --rho")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--name", default="noisy.txt")
    c.add_argument("--out")
    c.set_defaults(func=cmd_corrupt)

    pr = sub.add_parser("pairs", help="derive similarity pairs from (noisy) labels")
    pr.add_argument("--data", required=True)
    pr.add_argument("--strategy", default="all_pairs_in_batch",
                    choices=["all_pairs_in_batch", "sampled"])
    pr.add_argument("--k", type=int)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--name", default="pairs.csv")
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_pairs)

    t = sub.add_parser("train", help="train from a noisy-labelled dataset's pairs")
    t.add_argument("--data", required=True)
    t.add_argument("--T", help="fixed transition matrix file (omit for no transition layer)")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--select-loss", action="store_true",
                   help="select by validation loss instead of pair error (no T only)")
    t.add_argument("--out")
    _add_overrides(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("estimate-t", help="estimate T from a noisy-posterior checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--k", type=int, default=5)
    e.add_argument("--percentile", type=float)
    e.add_argument("--true-T")
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate_t)

    v = sub.add_parser("eval", help="clean-label accuracy of a checkpoint")
    v.add_argument("--checkpoint", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--no-align", action="store_true")
    v.set_defaults(func=cmd_eval)

    b = sub.add_parser("bound", help="evaluate the generalisation bound")
    b.add_argument("--B", type=float, required=True)
    b.add_argument("--C", type=int, required=True)
    b.add_argument("--depth", type=int)
    b.add_argument("--frob", type=float, nargs="+")
    b.add_argument("--checkpoint")
    b.add_argument("--M", type=float, required=True)
    b.add_argument("--delta", type=float, required=True)
    b.add_argument("--n", type=int, required=True)
    b.set_defaults(func=cmd_bound)

    x = sub.add_parser("experiment", help="run the full two-stage experiment")
    x.add_argument("--config")
    x.add_argument("--seed", type=int)
    x.add_argument("--out")
    _add_overrides(x)
    x.set_defaults(func=cmd_experiment)

    s = sub.add_parser("sweep", help="grid of noise rates x methods x seeds")
    s.add_argument("--config")
    s.add_argument("--rhos", type=float, nargs="+", required=True)
    s.add_argument("--methods", nargs="+", required=True,
                   choices=["mcl", "mns_estimated_T", "mns_true_T"])
    s.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(seed=None)
    _add_overrides(s)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
