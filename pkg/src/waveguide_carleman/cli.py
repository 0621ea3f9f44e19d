"""``waveguide-lab COMMAND CONFIG [--output DIR]``.

Exit status 0 on success, 1 when the experiment fails at run time and 2 for
config or usage errors. Every failure prints one line to stderr::

    error: <code>: <message>

``WAVEGUIDE_OUTPUT_ROOT`` (when set) is prepended to relative output paths.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .config import COMMANDS, load_config
from .errors import ConfigError, WaveguideError
from .experiments import RUNNERS

OUTPUT_ROOT_ENV = "WAVEGUIDE_OUTPUT_ROOT"
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    code = "usage_error"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="waveguide-lab", description="Run weighted-estimate checks, forward solves, "
                                                    "reconstructions and stability sweeps from a config file.")
    ap.add_argument("command", help=f"one of: {', '.join(COMMANDS)}; 'run' uses [run] command from the config")
    ap.add_argument("config", help="path to the .ini experiment config")
    ap.add_argument("-o", "--output", help="output directory (overrides [run] output)")
    ap.add_argument("-q", "--quiet", action="store_true", help="do not print the JSON summary")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def _fail(code: str, message: str, status: int) -> int:
    print(f"error: {code}: {' '.join(str(message).split())}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(exc.code, exc, EXIT_CONFIG)
    try:
        cfg = load_config(args.config)
        command = args.command
        if command == "run":
            command = cfg.run["command"]
            if command is None:
                raise ConfigError("command 'run' needs [run] command in the config")
        if command not in RUNNERS:
            return _fail("unknown_command", f"unknown command {command!r}; accepted: {', '.join(COMMANDS)}, run",
                         EXIT_CONFIG)
        out = cfg.output_dir(args.output, os.environ.get(OUTPUT_ROOT_ENV))
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        return _fail(exc.code, exc, EXIT_CONFIG)
    except OSError as exc:
        return _fail("io_error", exc, EXIT_RUNTIME)
    try:
        RUNNERS[command](cfg, out)
    except ConfigError as exc:
        return _fail(exc.code, exc, EXIT_CONFIG)
    except WaveguideError as exc:
        return _fail(exc.code, f"{command}: {exc}", EXIT_RUNTIME)
    except (OSError, ValueError, ArithmeticError, NotImplementedError) as exc:
        return _fail("runtime_error", f"{command}: {type(exc).__name__}: {exc}", EXIT_RUNTIME)
    if not args.quiet:
        print(json.dumps({"command": command, "output": str(out)}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
