"""Command-line front end: ``qegm generate-data|train|evaluate|compare``."""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import pipeline
from .config import load_config
from .errors import NumericError, QegmError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qegm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        c = sub.add_parser(name, help=help_text)
        c.add_argument("--config", required=True, help="experiment config (JSON)")
        c.add_argument("--seed", type=int, default=None, help="override the config seed")
        c.add_argument("--force", action="store_true", help="overwrite existing outputs")
        c.add_argument("--out", default=None, help=f"output root (default: config output_dir, ${pipeline.OUTPUT_ROOT_ENV})")
        return c

    add("generate-data", "sample or ingest, label and split the dataset")
    c = add("train", "train one model on the generated dataset")
    c.add_argument("--mode", default=None, help="Quantum or ClassicalBaseline (default: config)")
    c = add("evaluate", "compute metrics for a checkpoint on the test split")
    c.add_argument("--checkpoint", default=None, help="checkpoint path (default: the run matching mode and seed)")
    c.add_argument("--mode", default=None)
    c = add("compare", "train and evaluate every mode across seeds, or compare given checkpoints")
    c.add_argument("--checkpoints", nargs="+", metavar="NAME=PATH", default=None,
                   help="compare existing checkpoints instead of training")
    c.add_argument("--seeds", type=int, nargs="+", default=None, help="override compare.seeds")
    return p


def _run(args) -> None:
    cfg = load_config(args.config)
    out = pipeline.output_root(cfg, args.out)
    if args.command == "generate-data":
        if args.seed is not None:
            cfg.dataset = dataclasses.replace(cfg.dataset, seed=args.seed)
        manifest = pipeline.generate_data(cfg, out, args.force)
        print(f"wrote {out / 'data'}: {manifest['n_samples']} samples, {manifest['rare_count']} rare, "
              f"split {manifest['split_sizes']}")
    elif args.command == "train":
        target = pipeline.train_run(cfg, out, args.mode, args.seed, args.force)
        print(f"wrote {target}")
    elif args.command == "evaluate":
        mode = args.mode or cfg.model.mode
        seed = cfg.training.seed if args.seed is None else args.seed
        ckpt = Path(args.checkpoint) if args.checkpoint else pipeline.run_dir(out, mode, seed) / "checkpoint.json"
        report = pipeline.evaluate_run(cfg, out, ckpt, args.seed)
        print(f"tail_kl={report.tail_kl:.6g} rare_recall={report.rare_recall:.6g} (TP={report.tp}, FN={report.fn}) "
              f"coverage_error={report.coverage_error:.6g} wasserstein_1d={report.wasserstein_1d:.6g}")
    else:
        seeds = args.seeds or ([args.seed] if args.seed is not None else None)
        if args.checkpoints:
            named = {}
            for item in args.checkpoints:
                name, sep, path = item.partition("=")
                if not sep or not name:
                    raise pipeline.ValidationError(f"--checkpoints expects NAME=PATH, got {item!r}")
                named[name] = Path(path)
            summary = pipeline.compare_checkpoints(cfg, out, named, seeds or cfg.compare.seeds)
        else:
            summary = pipeline.compare_training(cfg, out, seeds, log=print)
        for name, m in summary["models"].items():
            med = m["median"]
            print(f"{name} median: tail_kl={med['tail_kl']:.6g} rare_recall={med['rare_recall']:.6g} "
                  f"coverage_error={med['coverage_error']:.6g} wasserstein_1d={med['wasserstein_1d']:.6g}")
        print(f"wrote {out / 'compare'}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        _run(args)
    except NumericError as exc:
        print(f"qegm: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except QegmError as exc:
        print(f"qegm: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"qegm: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"qegm: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
