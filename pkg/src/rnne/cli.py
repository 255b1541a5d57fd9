"""Batch command-line interface.

Subcommands: gen, train, eval, sweep, inspect-checkpoint.  Every config key
is mirrored as a flag (underscores become dashes); flags override the YAML
file given with --config.
"""

import argparse
import dataclasses
import logging
import sys

import numpy as np

from . import config as config_mod
from . import model
from . import pipeline
from .exceptions import RnneError

log = logging.getLogger(__name__)

_LIST_ITEM_TYPES = {
    "layer_sizes": int,
    "precision_ks": int,
    "fractions": float,
    "alpha_grid": float,
    "beta_grid": float,
    "gamma_grid": float,
}


def _add_config_flags(parser):
    for field in dataclasses.fields(config_mod.RunConfig):
        flag = "--" + field.name.replace("_", "-")
        if field.type == "bool" or isinstance(field.default, bool):
            parser.add_argument(flag, dest=field.name, default=None,
                                action=argparse.BooleanOptionalAction)
        elif field.name in _LIST_ITEM_TYPES:
            item = _LIST_ITEM_TYPES[field.name]
            parser.add_argument(
                flag, dest=field.name, default=None,
                type=lambda s, item=item: [item(v) for v in s.split(",") if v],
                metavar="V1,V2,...",
            )
        elif isinstance(field.default, int):
            parser.add_argument(flag, dest=field.name, default=None, type=int)
        elif isinstance(field.default, float):
            parser.add_argument(flag, dest=field.name, default=None, type=float)
        else:
            parser.add_argument(flag, dest=field.name, default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rnne",
        description="Dynamic-network embedding: generate, train, evaluate, sweep.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    known_fields = {f.name for f in dataclasses.fields(config_mod.RunConfig)}
    for name, help_text in (
        ("gen", "generate a synthetic snapshot series with labels"),
        ("train", "train over the sliding window and write embeddings"),
        ("eval", "score embeddings on a task"),
        ("sweep", "grid-sweep alpha/beta/gamma with train+eval per cell"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="YAML config file")
        _add_config_flags(p)
        if name == "eval":
            p.add_argument("eval_task", nargs="?", default=None,
                           choices=["reconstruct", "linkpred", "classify"])

    p = sub.add_parser("inspect-checkpoint", help="print checkpoint contents")
    p.add_argument("checkpoint")
    return parser, known_fields


def _config_from_args(args, known_fields):
    overrides = {
        name: getattr(args, name)
        for name in known_fields
        if getattr(args, name, None) is not None
    }
    return config_mod.load_config(args.config, overrides)


def _cmd_inspect(args):
    params, hyper, seed, extra = model.load_checkpoint(args.checkpoint)
    print(f"layer_sizes: {list(params.layer_sizes)}")
    print(f"seed: {seed}")
    for key, value in sorted(hyper.as_dict().items()):
        print(f"hyper.{key}: {value}")
    for name, arr in params.arrays():
        print(f"{name}: shape {arr.shape}, l2 {np.linalg.norm(arr):.6g}")
    if extra:
        print(f"extra: {extra}")
    return 0


def main(argv=None):
    parser, known_fields = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "inspect-checkpoint":
            return _cmd_inspect(args)
        cfg = _config_from_args(args, known_fields)
        if args.command == "gen":
            snapshot_dir, labels_path = pipeline.run_generation(cfg)
            print(f"wrote series to {snapshot_dir}, labels to {labels_path}")
        elif args.command == "train":
            result = pipeline.run_training(cfg)
            print(f"trained {len(result.snapshots)} snapshots -> {cfg.output_dir}")
        elif args.command == "eval":
            task = args.eval_task or cfg.task
            rows = pipeline.run_eval(cfg, task)
            means = [r for r in rows if r[1] == "mean"]
            for _task, _snap, kf, metric, value in means:
                print(f"{task} {metric}@{kf}: {value:.6g}")
        elif args.command == "sweep":
            rows = pipeline.run_sweep(cfg)
            print(f"wrote {len(rows)} sweep rows -> {cfg.output_dir}/sweep.csv")
    except RnneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
