"""Command-line entry points: train, eval, gen-data, verify.

Exit codes: 0 success, 1 failed verification checks, 2 invalid
configuration or malformed artifact, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError, ContractError, DimensionError, FormatError

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_IO = 3


def _cmd_train(args) -> int:
    from .config import load_config, with_seed
    from .trainer import evaluate  # noqa: F401  (import check before heavy work)

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    out_dir = args.out or cfg.output_dir
    if out_dir is None:
        raise ConfigError("no output directory: pass --out or set output_dir")
    cfg.output_dir = str(out_dir)

    from .config import execute_run

    records = execute_run(cfg, out_dir=Path(out_dir))
    final = records[-1]
    print(f"finished {cfg.train.t_total} iterations; "
          f"final test accuracy {final.test_acc:.4f}")
    print(f"run artifacts in {out_dir}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .data import load_raw
    from .nets import load_checkpoint
    from .trainer import evaluate

    params = load_checkpoint(args.checkpoint)
    dataset = load_raw(args.data)
    accuracy, per_class = evaluate(params, dataset.features, dataset.labels)
    print(f"accuracy {accuracy:.6f}")
    for c, acc in enumerate(per_class):
        print(f"class {c} accuracy {acc:.6f}")
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    from .config import build_dataset, load_config
    from .data import save_raw

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.dataset.seed = args.seed
    dataset = build_dataset(cfg)
    save_raw(dataset, args.out)
    print(f"wrote {dataset.features.shape[0]} samples "
          f"({dataset.labeled_count} labeled) to {args.out}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_suite

    results = run_suite(args.suite, corrupt=args.corrupt)
    for res in results:
        print(res.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECKS_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jepamatch",
        description="Semi-supervised training lab with geometric shaping of embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run training from a JSON config")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", default=None, help="run directory (overrides config)")
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_train.set_defaults(fn=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.set_defaults(fn=_cmd_eval)

    p_gen = sub.add_parser("gen-data", help="generate a dataset file from a config")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.set_defaults(fn=_cmd_gen_data)

    p_verify = sub.add_parser("verify", help="run a verification suite")
    p_verify.add_argument("--suite", required=True,
                          choices=["gradcheck", "sigreg-oracle", "curriculum", "e2e"])
    p_verify.add_argument("--corrupt", action="store_true",
                          help=argparse.SUPPRESS)  # negative-control fixture
    p_verify.set_defaults(fn=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FormatError, ContractError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
