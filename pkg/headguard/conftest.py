#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import io
import os
import traceback

import pytest

from headguard.corpus.synthetic import synthesize_toy_corpus
from headguard.model.encoder import ModelConfig
from headguard.model.training import TrainConfig, train

TESTS_DIR = os.path.join(os.path.dirname(__file__), "tests")
TEST_CONFIG = os.path.join(TESTS_DIR, "config.yml")

TINY_MODEL = {
    "num_layers": 2,
    "num_heads": 2,
    "d_model": 16,
    "d_ff": 32,
    "vocab_size": 64,
    "max_seq_len": 16,
    "seed": 0,
}
TOY_GROUPS = ["women", "muslim"]


class Logger:
    def __init__(self, silent=True):
        self.logs = []
        self.silent = silent

    def debug(self, msg, exc_info=False):
        if not self.silent:
            print(msg)
        self.logs.append(msg)
        if exc_info:
            self.logs.append(traceback.format_exc())

    def assert_present(self, lines):
        if isinstance(lines, str):
            lines = [lines]
        for msg in lines:
            found = False
            for log in self.logs:
                if isinstance(log, str) and msg in log:
                    found = True
                    break
            if not found:
                raise AssertionError(f"'{msg}' not found in {self.logs}")

    def assert_not_present(self, lines):
        if isinstance(lines, str):
            lines = [lines]
        for msg in lines:
            for log in self.logs:
                if isinstance(log, str) and msg in log:
                    raise AssertionError(f"'{msg}' found in {self.logs}")

    error = exception = critical = warning = info = debug


class _CapturedStdout:
    # pytest re-installs its own sys.stdout before each test phase, so a
    # StringIO swapped in by a fixture never sees the output; read it from
    # capsys instead.
    def __init__(self, capsys):
        self._capsys = capsys
        self._text = ""
        self._pos = 0

    def seek(self, pos):
        self._pos = pos

    def read(self):
        self._text += self._capsys.readouterr().out
        out = self._text[self._pos :]
        self._pos = len(self._text)
        return out


@pytest.fixture
def catch_stdout(capsys):
    yield _CapturedStdout(capsys)


@pytest.fixture
def patch_logger(silent=True):
    new_logger = Logger(silent)

    from headguard.logger import logger

    methods = ("exception", "error", "critical", "info", "debug", "warning")
    for method in methods:
        setattr(logger, f"_old_{method}", getattr(logger, method))
        setattr(logger, method, new_logger.info)

    try:
        yield new_logger
    finally:
        for method in methods:
            setattr(logger, method, getattr(logger, f"_old_{method}"))
            delattr(logger, f"_old_{method}")


@pytest.fixture(scope="session")
def tiny_config():
    return ModelConfig(**TINY_MODEL)


@pytest.fixture(scope="session")
def toy_corpus():
    return synthesize_toy_corpus(seed=0, n=80, groups=TOY_GROUPS)


@pytest.fixture(scope="session")
def trained_model(tiny_config, toy_corpus):
    """A tiny classifier trained on the toy corpus. Tests must not modify it."""
    hyper = TrainConfig(learning_rate=0.01, epochs=8, batch_size=8, seed=0)
    model, _ = train(tiny_config, toy_corpus, hyper)
    return model


@pytest.fixture
def workdir(tmp_path):
    return str(tmp_path / "workdir")
