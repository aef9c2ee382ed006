"""Command-line interface.

    bedexit <synth|encode|train|eval|predict|trace> [options]

Every subcommand is driven by one YAML config (``--config``); ``--seed``
overrides the config seed everywhere. Outputs land under ``--out`` (or
``paths.out_dir``). Errors print to stderr as ``error [CODE]: message`` with
a stable machine-readable code and a non-zero exit status.
"""

from __future__ import annotations

import argparse
import sys

import torch

from . import pipeline
from .config import RunConfig, load_run_config
from .errors import BedexitError, ConfigError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bedexit",
        description="Load-cell time series -> image encodings -> bed-exit intent.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML run config (defaults used if omitted)")
        p.add_argument("--out", help="output directory (default: paths.out_dir)")
        p.add_argument("--seed", type=int, help="override the config seed")
        return p

    add("synth", "generate labeled synthetic episodes")
    add("encode", "encode episodes into image pairs + manifests")
    add("train", "train the classifier and write a checkpoint")

    p_eval = add("eval", "evaluate a checkpoint on one split")
    p_eval.add_argument("--checkpoint", help="checkpoint file (default: paths.checkpoint)")
    p_eval.add_argument("--split", choices=("train", "val", "test"), default="test")

    p_pred = add("predict", "per-window predictions over a raw stream")
    p_pred.add_argument("--checkpoint", help="checkpoint file (default: paths.checkpoint)")
    p_pred.add_argument("raw", help="raw stream file (CSV or JSONL)")

    p_trace = add("trace", "probability trace + plot over one episode")
    p_trace.add_argument("--checkpoint", help="checkpoint file (default: paths.checkpoint)")
    p_trace.add_argument("episode", help="episode directory or raw stream file")
    return parser


def _out_dir(args, config: RunConfig) -> str:
    out = args.out or config.paths.out_dir
    if not out:
        raise ConfigError("no output directory: pass --out or set paths.out_dir")
    return out


def _checkpoint(args, config: RunConfig) -> str:
    path = getattr(args, "checkpoint", None) or config.paths.checkpoint
    if not path:
        raise ConfigError("no checkpoint: pass --checkpoint or set paths.checkpoint")
    return path


def _run(args) -> None:
    config = load_run_config(args.config, seed_override=args.seed)
    if args.command == "synth":
        out = _out_dir(args, config)
        paths = pipeline.cmd_synth(config, out)
        print(f"wrote {len(paths)} episodes under {out}")
    elif args.command == "encode":
        out = _out_dir(args, config)
        dataset = pipeline.cmd_encode(config, out)
        for name in ("train", "val", "test"):
            print(f"{name}: {len(dataset[name])} windows")
        print(f"images and manifests under {out}")
    elif args.command == "train":
        out = _out_dir(args, config)
        ckpt_path, result = pipeline.cmd_train(config, out)
        print(
            f"best val accuracy {result.best_val_accuracy:.4f} at step "
            f"{result.best_step} ({result.steps_run} steps run)"
        )
        print(f"checkpoint: {ckpt_path}")
    elif args.command == "eval":
        report = pipeline.cmd_eval(config, _checkpoint(args, config), args.split,
                                   _out_dir(args, config))
        for line in report.format_lines():
            print(line)
    elif args.command == "predict":
        records = pipeline.cmd_predict(config, _checkpoint(args, config), args.raw,
                                       _out_dir(args, config))
        alarms = sum(1 for r in records if r["alarm"])
        print(f"{len(records)} windows, {alarms} alarms")
    elif args.command == "trace":
        rows = pipeline.cmd_trace(config, _checkpoint(args, config), args.episode,
                                  _out_dir(args, config))
        crossings = [t for t, _, alarm in rows if alarm]
        first = f"{crossings[0]:.0f} s" if crossings else "never"
        print(f"{len(rows)} trace points, first alarm: {first}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    torch.set_num_threads(1)
    try:
        _run(args)
    except BedexitError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # keep the contract: stable code on stderr
        print(f"error [INTERNAL]: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
