#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
from headguard.corpus.readers import write_corpus
from headguard.logger import logger
from headguard.services.base import CORPUS, BaseService
from headguard.services.train import synthetic_corpus


class SynthesizeService(BaseService):
    """Writes the seeded toy corpus, to the configured corpus path or the workdir."""

    stage = "synthesize"

    async def _run(self):
        settings = self.config.corpus
        corpus = synthetic_corpus(settings)
        path = settings.path or self.workdir.path(CORPUS)
        write_corpus(corpus, path, settings.format, settings.readers)
        logger.info(f"Synthesized {len(corpus)} examples over groups {corpus.groups} into {path}")
        return {"path": path, "n_examples": len(corpus), "groups": corpus.groups}
