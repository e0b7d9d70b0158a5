import argparse
import asyncio
import importlib
import sys

from MixTrace import LOGGER, app
from MixTrace.core.settings import KEYS, load_config
from MixTrace.plugins import ALL_MODULES
from MixTrace.utils.exceptions import ConfigError

# switches with a dedicated negative flag instead of a value
SWITCHES = ("smooth", "swap")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def load_plugins():
    for all_module in ALL_MODULES:
        importlib.import_module("MixTrace.plugins" + all_module)
    LOGGER("MixTrace.plugins").info("Successfully Imported Modules...")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="flat YAML file of dotted keys")
    for key in KEYS:
        if key in SWITCHES:
            continue
        common.add_argument(f"--{key}", dest=key, default=argparse.SUPPRESS, metavar=key.split(".")[-1].upper())
    for key in SWITCHES:
        common.add_argument(f"--no-{key}", dest=key, action="store_const", const=False, default=argparse.SUPPRESS)

    parser = _Parser(prog="python -m MixTrace", description="Trace anonymization by constant speed and mix-zones.")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in sorted(app.commands):
        commands.add_parser(name, parents=[common], help=app.helps[name], description=app.helps[name])
    return parser


def main(argv=None) -> int:
    if not app.commands:
        load_plugins()
    try:
        args = build_parser().parse_args(argv)
        overrides = {k: v for k, v in vars(args).items() if k in KEYS}
        cfg = load_config(args.config, overrides)
    except ConfigError as e:
        LOGGER(__name__).error(f"Bad configuration: {e}")
        return e.exit_code
    return asyncio.run(app.dispatch(args.command, cfg))


if __name__ == "__main__":
    sys.exit(main())
