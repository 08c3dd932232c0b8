#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import io
import json
import logging
from contextlib import contextmanager

import pytest

import headguard.logger
from headguard.logger import current_stage, log_stage, logger, parse_level, set_logger


@contextmanager
def unset_logger():
    old = headguard.logger.logger
    headguard.logger.logger = None
    try:
        yield
    finally:
        if old is not None:
            headguard.logger.logger = logger


def test_logger():
    with unset_logger():
        logger = set_logger(logging.DEBUG)
        assert logger.level == logging.DEBUG
        assert logger.handlers[0].level == logging.DEBUG


def test_logger_filebeat():
    with unset_logger():
        logger = set_logger(logging.DEBUG, filebeat=True)
        logs = []

        def _w(msg):
            logs.append(msg)

        logger.handlers[0].stream.write = _w
        logger.debug("filebeat")
        ecs_log = logs[0]

        # make sure it's JSON and we have service.type
        data = json.loads(ecs_log)
        assert data["service"]["type"] == "headguard"
        assert data["message"] == "filebeat"
        set_logger(logging.INFO)


@contextmanager
def _capture(logger):
    stream = io.StringIO()
    old = logger.handlers[0].setStream(stream)
    try:
        yield stream
    finally:
        logger.handlers[0].setStream(old)


def test_log_stage_in_ecs_labels():
    with unset_logger():
        logger = set_logger("debug", filebeat=True)
        with _capture(logger) as stream:
            with log_stage("attack"):
                assert current_stage() == "attack"
                logger.info("inside")
            logger.info("outside")

        inside, outside = (json.loads(line) for line in stream.getvalue().splitlines())
        assert inside["labels"]["stage"] == "attack"
        assert "stage" not in outside.get("labels", {})
        assert current_stage() is None
        set_logger(logging.INFO)


def test_log_stage_tag_in_human_format():
    with unset_logger():
        logger = set_logger(logging.INFO)
        with _capture(logger) as stream:
            with log_stage("sweep clean"):
                with log_stage("inner"):
                    logger.info("nested")
                logger.info("outer")
            logger.info("none")

        lines = stream.getvalue().splitlines()
        assert "[INFO][inner] nested" in lines[0]
        assert "[INFO][sweep clean] outer" in lines[1]
        assert "[INFO] none" in lines[2]


def test_parse_level():
    assert parse_level("WARNING") == logging.WARNING
    assert parse_level("debug") == logging.DEBUG
    with pytest.raises(ValueError, match="Unknown log level"):
        parse_level("verbose")
