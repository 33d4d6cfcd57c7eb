import argparse
import sys
from typing import List, Optional

import structlog

from .commands import COMMANDS
from .errors import SemiFlexError
from .logging_config import configure_logging

logger = structlog.get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semiflex",
        description="Design semi-on-demand hybrid feeder routes: analyze, optimize, sweep, casestudy.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_format)
    try:
        return args.handler(args) or 0
    except SemiFlexError as e:
        logger.error("command_failed", command=args.command, error=type(e).__name__, exit_code=e.exit_code)
        print(f"semiflex {args.command}: {e.detail}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
