#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Train stage: corpus -> train/test split -> checkpoint + per-epoch metrics.
"""
from headguard.config import EmptyDatasetError
from headguard.corpus.readers import load_corpus
from headguard.corpus.split import class_balance, rebalance, split
from headguard.corpus.synthetic import synthesize_toy_corpus
from headguard.logger import logger
from headguard.model.checkpoint import save_model
from headguard.model.training import train
from headguard.patching.sweep import run_with_patch
from headguard.services.base import (
    CHECKPOINT,
    CORPUS,
    TEST_SPLIT,
    TRAIN_METRICS,
    TRAIN_SPLIT,
    BaseService,
)


def synthetic_corpus(settings):
    synthetic = settings.synthetic
    return synthesize_toy_corpus(
        settings.seed,
        synthetic["n"],
        synthetic["groups"],
        synthetic.get("group_specific", False),
        context=synthetic.get("context", False),
    )


class TrainService(BaseService):
    stage = "train"

    def source_corpus(self):
        settings = self.config.corpus
        if settings.path is None:
            logger.info("No corpus path configured, synthesizing the toy corpus")
            corpus = synthetic_corpus(settings)
            self.workdir.write_dataset(corpus, CORPUS)
            return corpus
        return load_corpus(settings.path, settings.format, settings.strict, settings.readers)

    async def _run(self):
        settings = self.config.corpus
        corpus = self.source_corpus()
        if len(corpus) == 0:
            raise EmptyDatasetError("The training corpus holds no examples")

        train_set, test_set = split(corpus, settings.test_fraction, settings.seed, settings.stratify)
        train_set = rebalance(train_set, settings.rebalance, settings.seed)
        self.workdir.write_dataset(train_set, TRAIN_SPLIT)
        self.workdir.write_dataset(test_set, TEST_SPLIT)

        model, history = train(self.config.model, train_set, self.config.train)
        save_model(model, self.workdir.path(CHECKPOINT))
        logger.info(f"Saved checkpoint to {self.workdir.path(CHECKPOINT)}")

        test_loss, test_accuracy = run_with_patch(model, test_set) if len(test_set) else (None, None)
        metrics = {
            "history": history,
            "train_loss": history[-1]["loss"],
            "train_accuracy": history[-1]["accuracy"],
            "test_loss": test_loss,
            "test_accuracy": test_accuracy,
            "n_train": len(train_set),
            "n_test": len(test_set),
            "class_balance": {str(k): v for k, v in class_balance(train_set).items()},
            "vocabulary_size": len(model.vocab),
            "fingerprints": {
                "model": self.config.model.fingerprint(),
                "train": self.config.train.fingerprint(),
                "train_split": train_set.fingerprint(),
                "test_split": test_set.fingerprint(),
            },
        }
        self.workdir.write_json(TRAIN_METRICS, metrics)
        if test_accuracy is not None:
            logger.info(f"Held-out accuracy {test_accuracy:.4f} on {len(test_set)} examples")
        return metrics
