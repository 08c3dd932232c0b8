#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import os

from headguard.corpus.base import CorpusArgumentError
from headguard.corpus.readers import get_reader, infer_format
from headguard.logger import logger
from headguard.utils import ensure_workdir


class PreflightCheck:
    """Checks every sub-config and the inputs before a subcommand starts working."""

    def __init__(self, config, needs_corpus=False):
        self.config = config
        self.needs_corpus = needs_corpus
        self.problems = []
        self.running = False

    def stop(self):
        self.running = False

    def shutdown(self, sig):
        logger.info(f"Caught {sig.name}. Graceful shutdown.")
        self.stop()

    def _check_corpus(self):
        settings = self.config.corpus
        if settings.path is None:
            return
        if not os.path.isfile(settings.path):
            self.problems.append(f"corpus: file {settings.path} not found")
            return
        try:
            get_reader(
                settings.format or infer_format(settings.path),
                strict=settings.strict,
                readers=settings.readers,
            )
        except (CorpusArgumentError, ImportError, AttributeError, ValueError) as e:
            self.problems.append(f"corpus: {e}")

    def _check_workdir(self):
        try:
            ensure_workdir(self.config.workdir)
        except OSError as e:
            self.problems.append(f"paths: cannot create workdir {self.config.workdir}: {e}")
            return
        if not os.access(self.config.workdir, os.W_OK):
            self.problems.append(f"paths: workdir {self.config.workdir} is not writable")

    async def run(self):
        logger.info("Preflight checks...")
        self.running = True
        try:
            self.problems = self.config.validate()
            if self.needs_corpus:
                self._check_corpus()
            if self.running:
                self._check_workdir()
            for problem in self.problems:
                logger.critical(f"Invalid configuration, {problem}")
            return self.running and not self.problems
        finally:
            self.stop()
