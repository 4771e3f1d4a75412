"""Command-line front end: ``run``, ``verify`` and ``print-schema``."""
from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .experiment import EXIT_CONFIG, load_config, run, schema_text, verify


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dispatchlab", description="Multi-interval dispatch pricing experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the configured Monte Carlo experiment")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--seed", type=int, help="base seed (overrides scenario.base_seed)")
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.add_argument("--no-timestamp", action="store_true", help="omit the timestamp header line")

    v = sub.add_parser("verify", help="run the invariant battery")
    v.add_argument("config")
    v.add_argument("--random-instances", type=int, default=50)
    v.add_argument("--seed", type=int)

    sub.add_parser("print-schema", help="print the configuration JSON schema")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "print-schema":
        print(schema_text())
        return 0
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)

    if args.command == "run":
        if args.jobs < 1:
            print("config error: --jobs must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        res = run(cfg, args.out, args.jobs, timestamp=not args.no_timestamp)
        print(res.message)
        print(f"outputs in {res.out_dir}")
        return res.exit_code

    code, _, lines = verify(cfg, args.random_instances)
    print("\n".join(lines))
    return code


if __name__ == "__main__":
    sys.exit(main())
