"""Command-line interface.

Subcommands: prepare (ingest + split), train, evaluate, sweep, stats.
Flags override config-file values, which override defaults. Exit codes:
0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import DEFAULT_ALPHA_GRID, build_run_config, parse_config_file
from .errors import ConfigError, DataError, NumericError
from .runner import run_evaluate, run_prepare, run_stats, run_sweep, run_train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_CONFIG_KEYS = (
    "data",
    "out",
    "seed",
    "aggregator",
    "distance",
    "alpha",
    "beta",
    "layers",
    "dim",
    "lr",
    "reg",
    "batch",
    "epochs",
    "patience",
    "k",
    "train_fraction",
    "val_fraction",
)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--data", help="interaction file or prepared dataset directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--aggregator", choices=["sagcn", "mean"])
    p.add_argument("--distance", choices=["euclidean", "cosine", "kl"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--layers", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--reg", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--k", help="comma-separated cutoffs, e.g. 10,20,50")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sagcn",
        description="Distance-adaptive graph-convolution training and evaluation "
        "for implicit-feedback top-N recommendation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, doc in [
        ("prepare", "ingest a raw interaction file and write the split to --out"),
        ("train", "train a model and write checkpoint, log and report to --out"),
        ("evaluate", "score a stored checkpoint against the dataset's test split"),
        ("sweep", "train/evaluate a grid of configurations and tabulate results"),
        ("stats", "print dataset size and sparsity statistics"),
    ]:
        p = sub.add_parser(name, help=doc)
        _add_common_flags(p)
        if name == "evaluate":
            p.add_argument("--checkpoint", required=True, help="checkpoint file to load")
        if name == "sweep":
            p.add_argument("--alphas", help="comma-separated alpha grid")
            p.add_argument("--distances", help="comma-separated distance kinds")
            p.add_argument("--aggregators", help="comma-separated aggregators")
            p.add_argument("--seeds", help="comma-separated seeds")
    return parser


def _run_config_from(args: argparse.Namespace):
    file_values = parse_config_file(args.config) if args.config else {}
    flag_values = {key: getattr(args, key, None) for key in _CONFIG_KEYS}
    return build_run_config(file_values, flag_values)


def _parse_grid(text, cast, what):
    if text is None:
        return None
    try:
        return tuple(cast(t.strip()) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"bad {what} list {text!r}: {exc}") from exc


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        cfg = _run_config_from(args)
        if args.command == "prepare":
            ds = run_prepare(cfg)
            print(
                f"prepared {cfg.out}: users={ds.num_users} items={ds.num_items} "
                f"train={len(ds.train_edges)} val={len(ds.val_edges)} test={len(ds.test_edges)}"
            )
        elif args.command == "train":
            report = run_train(cfg)
            print(report.to_table(), end="")
        elif args.command == "evaluate":
            report = run_evaluate(cfg, args.checkpoint)
            print(report.to_table(), end="")
        elif args.command == "sweep":
            if args.alphas == "default":
                alphas = DEFAULT_ALPHA_GRID
            else:
                alphas = _parse_grid(args.alphas, float, "alpha")
            rows = run_sweep(
                cfg,
                alphas=alphas,
                distances=_parse_grid(args.distances, str, "distance"),
                aggregators=_parse_grid(args.aggregators, str, "aggregator"),
                seeds=_parse_grid(args.seeds, int, "seed"),
            )
            print(f"sweep wrote {len(rows)} rows to {cfg.out}/sweep.tsv")
        elif args.command == "stats":
            print(run_stats(cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
