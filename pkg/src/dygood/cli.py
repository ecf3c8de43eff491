"""Command-line entry points.

Every subcommand exits 0 on success. Failures print a one-line JSON error
record to stderr and exit 1; argument errors exit 2 (argparse).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments, metrics
from .config import ExperimentConfig, load_config, save_config
from .graph import EdgeListSchema, load_sequence, load_temporal_edgelist, save_sequence
from .oodgen import FISpec, SBMSpec, make_ood_testset
from .spectral import SpectralCache, augment, write_spectrum
from .synthetic import make_synthetic
from .training import (
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
    write_curves,
    write_loss_log,
    write_scores,
)

log = logging.getLogger("dygood")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "data", None):
        overrides["data_path"] = args.data
    return dataclasses.replace(cfg, **overrides).validate() if overrides else cfg


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _training_data(cfg: ExperimentConfig):
    if cfg.data_path is None:
        return make_synthetic(experiments.synthetic_spec(cfg), cfg.seed)
    path = Path(cfg.data_path)
    if not path.exists():
        raise FileNotFoundError(f"data path does not exist: {path}")
    return load_sequence(path)


def _load_many(paths):
    return [load_sequence(p) for p in paths]


def cmd_ingest(args):
    schema = EdgeListSchema(
        columns=tuple(args.columns.split(",")),
        header=args.header,
        delimiter=args.delimiter,
        time_bucket=args.time_bucket,
        feature_dim=args.feature_dim,
        binarize_labels=args.binarize_labels,
    )
    seq = load_temporal_edgelist(args.edges, schema, args.features, args.node_labels)
    save_sequence(seq, _out_dir(args))
    print(f"timesteps={seq.total_timesteps} nodes={seq.num_nodes} classes={seq.num_classes} hash={seq.content_hash()}")


def _metrics_lines(result) -> list:
    lines = [f"method=uncertainty {result.report.to_line()}"]
    for kind, rep in result.baselines.items():
        lines.append(f"method={kind} {rep.to_line()}")
    return lines


def cmd_train(args):
    cfg = _config(args)
    data = _training_data(cfg)
    out = _out_dir(args)
    save_config(cfg, out / "config-resolved.yaml")
    state = train(cfg, data)
    write_loss_log(state.history, out / "losses.csv")
    save_checkpoint(state, out / "checkpoint")
    print(f"epochs={state.epoch} best_epoch={state.best_epoch} val_ce={state.best_val!r} val_f1={state.val_f1!r}")


def cmd_evaluate(args):
    state = load_checkpoint(args.checkpoint)
    cfg = state.config
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.id_test:
        id_tests = _load_many(args.id_test)
    elif cfg.data_path is None:
        id_tests = experiments.synthetic_id_tests(cfg)
    else:
        id_tests = [experiments.holdout_split(_training_data(cfg), cfg)]
    if args.ood_test:
        ood_tests = _load_many(args.ood_test)
    elif cfg.data_path is None:
        ood_tests = experiments.synthetic_ood_tests(cfg, args.kind or cfg.ood_kind)
    else:
        kind = args.kind or cfg.ood_kind
        ood_tests = [make_ood_testset(s, kind, experiments.ood_spec(cfg, kind)) for s in id_tests]
    result = evaluate(state, cfg, id_tests, ood_tests)
    out = _out_dir(args)
    write_scores(result.id_scores, out / "scores_id.csv")
    write_scores(result.ood_scores, out / "scores_ood.csv")
    write_curves(result.curves, out / "curves.csv")
    lines = _metrics_lines(result)
    (out / "metrics.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


def cmd_run(args):
    cmd_train(args)
    args.checkpoint = str(Path(args.out_dir) / "checkpoint")
    args.id_test = args.ood_test = None
    args.kind = None
    cmd_evaluate(args)


def cmd_gen_ood(args):
    seq = load_sequence(args.data)
    if args.kind == "sm":
        spec = SBMSpec(num_blocks=args.blocks, out_ratio=args.out_ratio, seed=args.seed)
    else:
        spec = FISpec(lam=args.lam, seed=args.seed)
    out_seq = make_ood_testset(seq, args.kind, spec)
    save_sequence(out_seq, _out_dir(args))
    print(f"hash={out_seq.content_hash()} input_hash={seq.content_hash()} provenance={out_seq.provenance}")


def cmd_augment(args):
    seq = load_sequence(args.data)
    cache = SpectralCache()
    rows = []
    for s in seq.snapshots:
        dec = cache.get(s)
        neg = augment(dec, args.r, args.mode)
        rows.append((s.timestep, dec.eigenvalues, np.linalg.eigvalsh(neg.laplacian)))
    out = _out_dir(args)
    with open(out / "spectra.csv", "w") as fh:
        write_spectrum(fh, rows)
    print(f"snapshots={len(rows)} file={out / 'spectra.csv'}")


def _read_scores(path, column: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"score file not found: {p}")
    with open(p, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ValueError(f"{p} has no column {column!r}")
        return np.array([float(row[column]) for row in reader])


def cmd_metrics(args):
    a = _read_scores(args.id_scores, args.column)
    b = _read_scores(args.ood_scores, args.column)
    rep = metrics.detection_report(a, b)
    print(rep.to_line())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dygood", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="YAML experiment config")
        sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out-dir", required=True)

    sp = sub.add_parser("ingest", help="temporal edge list -> sequence directory")
    sp.add_argument("--edges", required=True)
    sp.add_argument("--features")
    sp.add_argument("--node-labels")
    sp.add_argument("--columns", default="src,dst,t")
    sp.add_argument("--header", action="store_true")
    sp.add_argument("--delimiter")
    sp.add_argument("--time-bucket", type=float)
    sp.add_argument("--feature-dim", type=int, default=8)
    sp.add_argument("--binarize-labels", action="store_true")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_ingest)

    for name, func in (("train", cmd_train), ("run", cmd_run)):
        sp = sub.add_parser(name, help="train" if name == "train" else "train then evaluate")
        common(sp)
        sp.add_argument("--data", help="sequence directory (default: bundled synthetic data)")
        sp.set_defaults(func=func)

    sp = sub.add_parser("evaluate", help="score ID/OOD test windows")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--id-test", nargs="+")
    sp.add_argument("--ood-test", nargs="+")
    sp.add_argument("--kind", choices=("sm", "fi"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("gen-ood", help="build an SM or FI test sequence")
    sp.add_argument("--data", required=True)
    sp.add_argument("--kind", choices=("sm", "fi"), required=True)
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--blocks", type=int, default=4)
    sp.add_argument("--out-ratio", type=float, default=0.2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_gen_ood)

    sp = sub.add_parser("augment", help="dump Laplacian spectra of negative samples")
    sp.add_argument("--data", required=True)
    sp.add_argument("--r", type=float, default=0.3)
    sp.add_argument("--mode", choices=("verbatim", "weighted"), default="verbatim")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("metrics", help="recompute detection metrics from score CSVs")
    sp.add_argument("--id-scores", required=True)
    sp.add_argument("--ood-scores", required=True)
    sp.add_argument("--column", default="score")
    sp.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - reported as a structured record
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        if hasattr(exc, "record"):
            record["detail"] = exc.record
        print(json.dumps(record), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
