# -*- test-case-name: qfces.test_cli -*-
"""
The ``qfces`` command line.

Exit codes: 0 on success, 1 when an input, configuration or artifact is
invalid or missing, 2 when a completion backend fails.
"""

import argparse
import logging
import os
import sys
import time

import attr

from effect import sync_perform

from ._dispatch import make_dispatcher, make_pool
from ._errors import BackendError, ValidationError, unwrap
from .config import load_config
from .gateway import Gateway
from .pipeline import COMMANDS, TARGETS, Run
from .promptkit import MODES, TemplateSet

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_BACKEND = 2

# Logging level is 50 - 10 * verbosity: warnings by default.
DEFAULT_VERBOSITY = 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qfces",
        description="Generate and evaluate query-focused comparative summaries.",
    )
    parser.add_argument("-c", "--config", required=True, help="run configuration (INI)")
    parser.add_argument("--run-id", help="run directory name (default: timestamp and config hash)")
    parser.add_argument("--out", help="override [run] output_dir")
    parser.add_argument("--json", action="store_true", help="print machine-readable JSON")
    parser.add_argument(
        "-v", "--verbose", action="count", default=DEFAULT_VERBOSITY, help="more logging (repeatable)"
    )
    parser.add_argument(
        "-q", "--quiet", action="store_const", const=1, dest="verbose", help="log errors only"
    )
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True
    for name in COMMANDS:
        sub = commands.add_parser(name)
        if name == "gen-ces":
            sub.add_argument("--mode", choices=MODES, required=True)
        elif name == "judge":
            sub.add_argument(
                "--dims",
                type=lambda s: [d.strip() for d in s.split(",") if d.strip()],
                help="comma-separated dimensions (default: all for the target)",
            )
            sub.add_argument("--target", choices=TARGETS, default="ces")
        elif name == "bench":
            sub.add_argument("--iterations", type=int, help="override [bench] iterations")
    return parser


def default_run_id(config, now=None):
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime(now))
    return "%s-%s" % (stamp, config.config_hash)


def make_run(args):
    config = load_config(args.config)
    if args.out:
        config = attr.evolve(config, output_dir=os.path.abspath(args.out))
    run_id = args.run_id or default_run_id(config)
    return Run(
        config=config,
        run_dir=os.path.join(config.output_dir, run_id),
        templates=TemplateSet(config.templates),
        as_json=args.json,
    )


def run_command(args):
    """Perform one command; errors propagate as raised."""
    run = make_run(args)
    gateway = Gateway(run.config.build_backends())
    pool = make_pool(run.config.workers)
    try:
        log.info("%s in %s", args.command, run.run_dir)
        return sync_perform(make_dispatcher(gateway, pool), COMMANDS[args.command](run, args))
    finally:
        pool.close()
        pool.join()
        gateway.close()


def exit_code(error):
    if isinstance(error, ValidationError):
        return EXIT_INVALID
    if isinstance(error, BackendError):
        return EXIT_BACKEND
    return None


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=50 - 10 * args.verbose)
    try:
        run_command(args)
    except Exception as e:
        error = unwrap(e)
        code = exit_code(error)
        if code is None:
            raise
        log.debug("command failed", exc_info=error)
        print("qfces: error: %s" % (error,), file=sys.stderr)
        return code
    return EXIT_OK
