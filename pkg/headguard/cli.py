#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Command Line Interface.

Parses arguments and call run() with them.

Exit codes: 0 ok, 2 invalid input, 3 checkpoint/config incompatibility,
4 missing artifact or empty dataset, 5 summary integrity failure, 1 anything else.
"""
import asyncio
import functools
import logging
import signal
from argparse import ArgumentParser

from headguard import __version__
from headguard.attack import AttackConfigError
from headguard.config import (
    DEFAULT_CONFIG,
    CompatibilityError,
    ConfigError,
    MissingArtifactError,
    load_config,
)
from headguard.corpus.base import (
    CorpusArgumentError,
    CorpusSchemaError,
    CorpusValidationError,
    StratificationError,
)
from headguard.logger import logger, parse_level, set_logger
from headguard.model.checkpoint import CheckpointFormatError
from headguard.model.encoder import ModelConfigError
from headguard.model.training import TrainingError
from headguard.patching.spec import PatchSpecError
from headguard.patching.sweep import SweepConfigurationError
from headguard.preflight_check import PreflightCheck
from headguard.report.summary import IntegrityError
from headguard.services import SERVICES
from headguard.utils import get_event_loop

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_COMPATIBILITY = 3
EXIT_MISSING_ARTIFACT = 4
EXIT_INTEGRITY = 5

# first match wins, CheckpointFormatError is a ValueError too
EXIT_CODES = (
    ((CompatibilityError, CheckpointFormatError), EXIT_COMPATIBILITY),
    ((MissingArtifactError,), EXIT_MISSING_ARTIFACT),
    ((IntegrityError,), EXIT_INTEGRITY),
    (
        (
            ConfigError,
            CorpusSchemaError,
            CorpusValidationError,
            CorpusArgumentError,
            StratificationError,
            ModelConfigError,
            AttackConfigError,
            SweepConfigurationError,
            PatchSpecError,
            TrainingError,
            FileNotFoundError,
        ),
        EXIT_INPUT,
    ),
)
NEEDS_CORPUS = ("train", "pipeline")


def exit_code_for(exception):
    for families, code in EXIT_CODES:
        if isinstance(exception, families):
            return code
    return EXIT_FAILURE


def _parser():
    parser = ArgumentParser(prog="headguard")

    parser.add_argument(
        "action",
        type=str,
        nargs="?",
        default="pipeline",
        choices=list(SERVICES),
        help="What headguard should do",
    )

    parser.add_argument(
        "-c",
        "--config",
        type=str,
        help="Configuration file",
        default=DEFAULT_CONFIG,
    )

    parser.add_argument(
        "--workdir",
        type=str,
        default=None,
        help="Directory holding every artifact of the run, overrides paths.workdir",
    )

    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Global seed, overrides the configured seeds",
    )

    parser.add_argument(
        "--workers",
        type=int,
        default=None,
        help="Parallel sweep cells / attacked examples",
    )

    parser.add_argument(
        "--dataset",
        type=str,
        default="clean",
        choices=["clean", "adversarial"],
        help="Dataset the sweep action runs on",
    )

    parser.add_argument(
        "-k",
        type=int,
        default=None,
        help="Number of heads the mitigate action suppresses, overrides mitigate.k",
    )

    parser.add_argument(
        "--debug",
        action="store_true",
        default=False,
        help="Run the event loop in debug mode.",
    )

    parser.add_argument(
        "--filebeat",
        action="store_true",
        default=False,
        help="Output in filebeat format.",
    )

    parser.add_argument(
        "--version",
        action="store_true",
        default=False,
        help="Display the version and exit.",
    )

    parser.add_argument(
        "--uvloop",
        action="store_true",
        default=False,
        help="Use uvloop if possible",
    )

    return parser


def _print_result(action, result):
    if action == "attack":
        print(
            f"success_rate={result['success_rate']!r} filtered_rate={result['filtered_rate']!r}"
        )
    elif action == "mitigate":
        print(
            f"clean_delta_accuracy={result['clean']['delta_accuracy']!r} "
            f"adversarial_delta_accuracy={result['adversarial']['delta_accuracy']!r}"
        )


async def _start_service(config, args, loop):
    preflight = PreflightCheck(config, needs_corpus=args.action in NEEDS_CORPUS)
    for sig in (signal.SIGINT, signal.SIGTERM):
        loop.add_signal_handler(sig, functools.partial(preflight.shutdown, sig))
    try:
        if not await preflight.run():
            return EXIT_INPUT
    finally:
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.remove_signal_handler(sig)

    service = SERVICES[args.action](config, args)

    def _shutdown(sig_name):
        logger.info(f"Caught {sig_name}. Graceful shutdown.")
        service.stop()

    for sig in (signal.SIGINT, signal.SIGTERM):
        loop.add_signal_handler(sig, functools.partial(_shutdown, sig.name))
    try:
        result = await service.run()
    except Exception as e:
        code = exit_code_for(e)
        if code == EXIT_FAILURE:
            logger.critical(e, exc_info=True)
        else:
            logger.critical(f"{args.action} failed: {e}")
        return code
    finally:
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.remove_signal_handler(sig)

    if result is not None:
        _print_result(args.action, result)
    return EXIT_OK


def run(args):
    """Runner"""

    # load config
    try:
        config = load_config(args.config, args.workdir, args.seed, args.workers)
    except ConfigError as e:
        logger.critical(str(e))
        return EXIT_INPUT

    if not args.debug:
        set_logger(parse_level(config.log_level), filebeat=args.filebeat)

    loop = get_event_loop(args.uvloop)
    coro = _start_service(config, args, loop)

    try:
        return loop.run_until_complete(coro)
    except asyncio.CancelledError:
        return EXIT_OK
    finally:
        logger.info("Bye")


def main(args=None):
    parser = _parser()
    args = parser.parse_args(args=args)
    if args.version:
        print(__version__)
        return EXIT_OK
    set_logger(args.debug and logging.DEBUG or logging.INFO, filebeat=args.filebeat)
    return run(args)
