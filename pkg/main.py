import argparse
import logging
import sys
from typing import List, Optional

from commands import COMMANDS, EXAMPLE_IDS, run_reproduce
from commands.base import FIELD_NAMES, add_config_arguments, load_config
from config import MVLAB_LOG_LEVEL
from tasks.reproduce import preset
from utils.errors import ConfigError, MVLabError

logger = logging.getLogger("mvlab")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvlab",
        description="Numerical lab for stationary laws of distribution-dependent SDEs",
    )
    parser.add_argument("--log-level", default=MVLAB_LOG_LEVEL, help="logging level (default from MVLAB_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, (_handler, help_text) in COMMANDS.items():
        add_config_arguments(sub.add_parser(name, help=help_text))

    reproduce = sub.add_parser("reproduce", help="full pipeline for one example, with gates and manifest")
    reproduce.add_argument("example_id", choices=EXAMPLE_IDS)
    add_config_arguments(reproduce)
    return parser


def configure_logging(level: str) -> None:
    numeric = getattr(logging, str(level).upper(), logging.INFO)
    logging.basicConfig(
        level=numeric,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.getLogger().setLevel(numeric)


def run_subcommand(argv: Optional[List[str]] = None) -> int:
    """
    Parse argv, build the experiment config and run one subcommand.

    Returns:
        0 on success, 1 on a failed gate or service error, 2 on a config error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.log_level)
    supplied = vars(args)
    overrides = {key: supplied[key] for key in FIELD_NAMES.values() if key in supplied}

    try:
        if args.command == "reproduce":
            cfg = load_config(overrides, supplied.get("config_path"), preset(args.example_id))
            return run_reproduce(cfg, args.example_id)
        cfg = load_config(overrides, supplied.get("config_path"))
        handler, _help = COMMANDS[args.command]
        return handler(cfg)
    except ConfigError as e:
        logger.error("config error: %s", e)
        return 2
    except MVLabError as e:
        logger.error("%s failed: %s", args.command, e)
        return 1


def main() -> None:
    sys.exit(run_subcommand(sys.argv[1:]))


if __name__ == "__main__":
    main()
