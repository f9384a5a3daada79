"""
Command-line entry point for the mdpreg toolkit.
"""

import logging
import sys

from mdpreg.cli.commands import UsageError, build_parser, run_command
from mdpreg.core.config import get_settings


def configure_logging(level: str | None = None) -> None:
    """Logs go to stderr; command results are printed to stdout."""
    settings = get_settings()
    if level is None:
        level = "DEBUG" if settings.DEBUG else settings.LOG_LEVEL
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)-8s %(name)s - %(message)s",
        stream=sys.stderr,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    configure_logging(args.log_level)
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
