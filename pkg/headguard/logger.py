#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Logger -- sets the logging and provides a `logger` global object.

Records emitted while a pipeline stage runs carry the stage name, as a `[stage]`
tag in the human format and as `labels.stage` in the ECS format.
"""
import logging
from contextlib import contextmanager
from contextvars import ContextVar
from datetime import datetime

import ecs_logging

from headguard import __version__

LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
    "critical": logging.CRITICAL,
}
STAGE_FIELD = "labels.stage"

logger = None
_stage = ContextVar("headguard_log_stage", default=None)


def current_stage():
    return _stage.get()


@contextmanager
def log_stage(name):
    """Tags every record logged inside the block with `name`."""
    token = _stage.set(name)
    try:
        yield
    finally:
        _stage.reset(token)


def parse_level(name):
    try:
        return LEVELS[name.lower()]
    except KeyError:
        raise ValueError(f"Unknown log level {name!r}, expected one of {list(LEVELS)}")


class StageFormatter(logging.Formatter):
    def formatMessage(self, record):
        stage = getattr(record, STAGE_FIELD, None)
        record.stage_tag = f"[{stage}]" if stage else ""
        return super().formatMessage(record)


def _formatter(prefix):
    return StageFormatter(
        fmt="[" + prefix + "][%(asctime)s][%(levelname)s]%(stage_tag)s %(message)s",
        datefmt="%H:%M:%S",
    )


class ExtraLogger(logging.Logger):
    def _log(self, level, msg, args, exc_info=None, extra=None, **kwargs):
        if extra is None:
            extra = {}
        extra.update(
            {
                "service.type": "headguard",
                "service.version": __version__,
                "labels.index_date": datetime.now().strftime("%Y.%m.%d"),
            }
        )
        stage = _stage.get()
        if stage is not None:
            extra[STAGE_FIELD] = stage
        super(ExtraLogger, self)._log(level, msg, args, exc_info, extra, **kwargs)


def set_logger(log_level=logging.INFO, filebeat=False):
    global logger
    if isinstance(log_level, str):
        log_level = parse_level(log_level)
    if filebeat:
        formatter = ecs_logging.StdlibFormatter()
    else:
        formatter = _formatter("HGRD")

    if logger is None:
        logging.setLoggerClass(ExtraLogger)
        logger = logging.getLogger("headguard")
        handler = logging.StreamHandler()
        logger.addHandler(handler)

    logger.propagate = False
    logger.setLevel(log_level)
    logger.handlers[0].setLevel(log_level)
    logger.handlers[0].setFormatter(formatter)
    logger.filebeat = filebeat
    return logger


set_logger()
