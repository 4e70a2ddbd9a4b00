"""Command line entry point: ``nashtsc run`` and ``nashtsc eval``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import CONTROLLERS, PRESETS, ConfigError, parse_config
from .harness import CSV_COLUMNS, evaluate, run_experiment

OUTPUT_DIR_ENV = "NASHTSC_OUTPUT_DIR"


def _resolve_out(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _load_config(args):
    cfg = parse_config(args.config) if args.config else PRESETS[args.preset]
    overrides = {}
    for key in ("seed", "controller", "episodes"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return cfg.replace(**overrides)


def build_parser():
    parser = argparse.ArgumentParser(prog="nashtsc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train a controller and write per-episode metrics")
    run.add_argument("--config", help="key = value config file")
    run.add_argument("--preset", default="paper-5x5", choices=sorted(PRESETS),
                     help="base config when --config is not given")
    run.add_argument("--seed", type=int)
    run.add_argument("--controller", choices=CONTROLLERS)
    run.add_argument("--episodes", type=int)
    run.add_argument("--out", default="metrics.csv", help=f"CSV path (relative paths go under ${OUTPUT_DIR_ENV})")
    run.add_argument("--checkpoint", help="checkpoint directory (default: <out>_checkpoint)")

    ev = sub.add_parser("eval", help="greedy rollout of a saved checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--config")
    ev.add_argument("--preset", default="paper-5x5", choices=sorted(PRESETS))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        cfg = _load_config(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "run":
        out = _resolve_out(args.out)
        ckpt = _resolve_out(args.checkpoint) if args.checkpoint else out.with_name(out.stem + "_checkpoint")
        rows = run_experiment(cfg, out, ckpt)
        print(f"wrote {len(rows)} episodes to {out}; checkpoint in {ckpt}")
    else:
        row = evaluate(cfg, args.checkpoint)
        print(",".join(CSV_COLUMNS))
        print(",".join(str(v) for v in row.as_csv()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
