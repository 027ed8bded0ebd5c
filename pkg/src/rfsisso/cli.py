"""Command-line entry point: ``rfsisso {importance,run,compare,synth}``.

Exit status is 0 on success, 1 when some runs failed, 2 on usage or I/O
errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .data import generate_synthetic, write_dataset
from .errors import RFSissoError
from .pipeline import cmd_compare, cmd_importance, cmd_run, emit_report, load_config

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("rfsisso")


def _onoff(v: str) -> bool:
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return v == "on"


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--schema", help="schema YAML for the dataset")
    p.add_argument("--task", choices=["regression", "classification"])
    p.add_argument("--rung", type=int)
    p.add_argument("--sis-size", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--rf-trees", type=int)
    p.add_argument("--rf-repeats", type=int)
    p.add_argument("--select", help="threshold:5 or topk:8 (comma-separate several to sweep)")
    p.add_argument("--sizes", help="comma-separated training sizes, e.g. 224,150,75,45")
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--units", type=_onoff, metavar="{on,off}")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfsisso", description="Random-forest prescreened SISSO descriptor search.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("importance", help="repeated random-forest feature importance")
    _common(p)

    p = sub.add_parser("run", help="one SISSO or RF-SISSO run on a train/test split")
    _common(p)
    p.add_argument("--method", choices=["sisso", "rf-sisso"])
    p.add_argument("--train-size", type=int)

    p = sub.add_parser("compare", help="SISSO vs RF-SISSO over subset sizes and repeats")
    _common(p)

    p = sub.add_parser("synth", help="write a synthetic dataset with a planted formula")
    p.add_argument("--formula", required=True, help='e.g. "y = (f1*f2)/f3^2"')
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--features", type=int, default=None, help="number of generated features (default: highest referenced)")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--low", type=float, default=1.0)
    p.add_argument("--high", type=float, default=5.0)
    p.add_argument("--task", choices=["regression", "classification"], default="regression")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory (data.csv + schema.yaml)")
    return parser


def _config(args):
    cfg = load_config(args.config)
    over = {
        "data": args.data,
        "schema": args.schema,
        "task": args.task,
        "space.rung": args.rung,
        "sis.subspace_size": args.sis_size,
        "sis.dim": args.dim,
        "rf.n_trees": args.rf_trees,
        "rf.repeats": args.rf_repeats,
        "selection": args.select,
        "sizes": args.sizes,
        "repeats": args.repeats,
        "seed": args.seed,
        "space.units": args.units,
        "workers": args.workers,
        "out": args.out,
    }
    if getattr(args, "method", None):
        over["method"] = args.method
    if getattr(args, "train_size", None):
        over["train_size"] = args.train_size
    cfg = cfg.override(**over)
    # paths given on the command line are relative to the working directory
    for key in ("data", "schema", "out"):
        v = getattr(args, key)
        if v is not None:
            cfg.values[key] = str(Path(v).resolve())
    return cfg


def _synth(args) -> int:
    ds = generate_synthetic(
        args.formula, args.n, noise=args.noise, seed=args.seed, n_features=args.features,
        low=args.low, high=args.high, task=args.task,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out / "data.csv", out / "schema.yaml")
    meta = {"formula": args.formula, "n": args.n, "noise": args.noise, "seed": args.seed, "task": args.task}
    (out / "synth.yaml").write_text(yaml.safe_dump(meta, sort_keys=True), encoding="utf-8")
    print(f"wrote {ds.n_samples} rows x {ds.n_features} features to {out / 'data.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if args.command == "synth":
            return _synth(args)
        cfg = _config(args)
        ds = cfg.load_data()
        if args.command == "compare":
            bad = [s for s in cfg["sizes"] if not 1 <= int(s) < ds.n_samples]
            if bad:
                raise ValueError(f"subset sizes {bad} must be smaller than the {ds.n_samples} rows")
    except (OSError, RFSissoError, ValueError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = cfg.path("out")
    try:
        if args.command == "importance":
            rep = cmd_importance(cfg, ds)
            for name, score, rank in rep.to_rows():
                print(f"{rank:3d}  {name:<20s} {score:8.3f}")
            return EXIT_OK
        if args.command == "run":
            report = cmd_run(cfg, ds)
        else:
            report = cmd_compare(cfg, ds)
        emit_report(report, out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RFSissoError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL

    for r in report.records:
        best = r.models[-1] if r.models else None
        desc = " ; ".join(best.labels) if best else "-"
        print(f"size={r.size} repeat={r.repeat} {r.method:8s} {r.selection:12s} {r.status:8s} "
              f"train={r.train_metric} test={r.test_metric}  {desc}")
    summary = report.timing_summary()
    for e in summary["sizes"]:
        if e["time_ratio"] is not None:
            print(f"size={e['size']} {e['selection']}: SISSO/RF-SISSO regression time ratio = {e['time_ratio']:.2f}")
    print(f"reports written to {out}")
    if report.failed:
        print(f"{report.failed} of {len(report.records)} runs failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
