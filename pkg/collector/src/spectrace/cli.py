"""CLI for the trace collector.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .collect import CollectorConfig, CollectorError, collect


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectrace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    collect_p = sub.add_parser("collect", help="record acceptance traces from a model pair")
    collect_p.add_argument("--target", required=True, help="target (verifier) model id or path")
    collect_p.add_argument("--draft", required=True, help="draft (proposer) model id or path")
    collect_p.add_argument("--prompts", required=True, help="newline-delimited prompts file")
    collect_p.add_argument("--gamma", type=int, required=True, help="fixed draft window size")
    collect_p.add_argument("--max-new-tokens", type=int, required=True, dest="max_new_tokens")
    collect_p.add_argument(
        "--out",
        required=True,
        help="output trace path; with several prompts, files are suffixed .000, .001, ...",
    )
    collect_p.set_defaults(func=cmd_collect)
    return parser


def cmd_collect(args: argparse.Namespace) -> int:
    config = CollectorConfig(
        target_model_id=args.target,
        draft_model_id=args.draft,
        prompts_file=args.prompts,
        max_new_tokens=args.max_new_tokens,
        fixed_gamma=args.gamma,
        output_path=args.out,
    )
    written = collect(config)
    for path in written:
        print(path)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CollectorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
