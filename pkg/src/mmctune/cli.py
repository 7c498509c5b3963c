"""Command-line entry point.

Subcommands: ``gen`` (dataset), ``label`` (oracle + overrides), ``train``,
``eval``, ``tune``, ``run`` (single optimization), ``render``.  Exit codes:
0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import workbench
from .geometry import DesignVector, GeometryError
from .mma import MmaParams
from .runner import render, run_mmc, save_record, write_pgm
from .workbench import ConfigError, WorkbenchError, load_config


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=str, default=None, help="INI config file (defaults used when omitted)")
    sub.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmctune", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen", help="generate a dataset of optimization runs")
    _add_common(gen)
    gen.add_argument("-n", type=int, default=None, help="sample count (default: [dataset] size)")
    gen.add_argument("--out", type=str, required=True)
    gen.add_argument("--workers", type=int, default=None)

    label = subs.add_parser("label", help="oracle-label a manifest, optionally with overrides")
    _add_common(label)
    label.add_argument("--manifest", type=str, required=True)
    label.add_argument("--overrides", type=str, default=None, help="file of '<record-stem> <label>' lines")

    train = subs.add_parser("train", help="fit vocabulary + forest on the train split")
    _add_common(train)
    train.add_argument("--manifest", type=str, required=True)
    train.add_argument("--out", type=str, required=True, help="model/report directory")

    evl = subs.add_parser("eval", help="evaluate a trained model on the test split")
    _add_common(evl)
    evl.add_argument("--manifest", type=str, required=True)
    evl.add_argument("--model", type=str, required=True)
    evl.add_argument("--out", type=str, required=True)

    tune = subs.add_parser("tune", help="closed-loop parameter search")
    _add_common(tune)
    tune.add_argument("--model", type=str, default=None, help="trained model directory")
    tune.add_argument("--train-first", action="store_true", help="train on --manifest before tuning")
    tune.add_argument("--manifest", type=str, default=None)
    tune.add_argument("--out", type=str, required=True)

    run = subs.add_parser("run", help="one optimization at fixed parameters")
    _add_common(run)
    run.add_argument("--params", type=str, required=True, help="albefa,asyinit,asyincr,asydecr")
    run.add_argument("--out", type=str, required=True, help="output record stem")

    rnd = subs.add_parser("render", help="rasterize a serialized design")
    _add_common(rnd)
    rnd.add_argument("--design", type=str, required=True, help="design record text file")
    rnd.add_argument("--out", type=str, required=True, help="output PGM path")

    return parser


def _cmd_gen(args, cfg) -> int:
    n = args.n if args.n is not None else int(cfg.get("dataset", "size"))
    manifest = workbench.generate_dataset(cfg, n, args.seed, args.out, workers=args.workers)
    print(f"wrote {manifest}")
    return 0


def _cmd_label(args, cfg) -> int:
    entries = workbench.apply_labels(args.manifest, cfg, args.overrides)
    n_feas = sum(e.label == "feasible" for e in entries)
    print(f"labeled {len(entries)} records ({n_feas} feasible, {len(entries) - n_feas} infeasible)")
    return 0


def _cmd_train(args, cfg) -> int:
    split = (int(cfg.get("dataset", "train")), int(cfg.get("dataset", "test")))
    report = workbench.train_and_evaluate(args.manifest, cfg, split, args.seed, out_dir=args.out)
    acc = report["metrics"]["accuracy"]
    print(f"trained; test accuracy {acc if acc is None else f'{acc:.4f}'}, model in {args.out}")
    return 0


def _cmd_eval(args, cfg) -> int:
    manifest = Path(args.manifest)
    entries = workbench.read_manifest(manifest)
    split = (int(cfg.get("dataset", "train")), int(cfg.get("dataset", "test")))
    train, test = workbench.split_entries(entries, split[0], split[1], args.seed)
    model = workbench.load_model(args.model)
    report = workbench.evaluate_classifier(model, test, manifest.parent)
    report["seed"] = args.seed
    report["reference_targets"] = workbench.REFERENCE_TARGETS.get(cfg.get("case", "name"))
    workbench.write_report(report, args.out)
    print(f"evaluated {len(test)} records; report in {args.out}")
    return 0


def _cmd_tune(args, cfg) -> int:
    if args.train_first:
        if args.manifest is None:
            print("--train-first needs --manifest", file=sys.stderr)
            return 1
        split = (int(cfg.get("dataset", "train")), int(cfg.get("dataset", "test")))
        model_dir = Path(args.out) / "model"
        workbench.train_and_evaluate(args.manifest, cfg, split, args.seed, out_dir=model_dir)
        model = workbench.load_model(model_dir)
    elif args.model is not None:
        model = workbench.load_model(args.model)
    else:
        print("tune needs --model or --train-first with --manifest", file=sys.stderr)
        return 1
    bundle = workbench.tune_case(cfg, model, args.seed, args.out)
    print(
        f"best {bundle['best']} compliance {bundle['best_compliance']:.4f} "
        f"after {bundle['iterations']} iterations; final structure {bundle['final_label']}"
    )
    return 0


def _cmd_run(args, cfg) -> int:
    try:
        values = [float(tok) for tok in args.params.split(",")]
    except ValueError:
        print(f"bad --params {args.params!r}", file=sys.stderr)
        return 1
    if len(values) != 4:
        print("--params needs four comma-separated floats", file=sys.stderr)
        return 1
    record = run_mmc(cfg.case(), MmaParams.from_array(values))
    rec_path, img_path = save_record(record, args.out)
    print(
        f"compliance {record.compliance:.6g} volume {record.volume_fraction:.4f} "
        f"converged {record.converged}; wrote {rec_path} and {img_path}"
    )
    return 0


def _cmd_render(args, cfg) -> int:
    design = DesignVector.from_text(Path(args.design).read_text())
    image = render(design, cfg.case())
    write_pgm(image, args.out)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "label": _cmd_label,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "tune": _cmd_tune,
    "run": _cmd_run,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args, cfg)
    except (ConfigError, GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures -> exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
