#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Shared plumbing of the subcommand services: the workdir layout and the checks
every stage runs on the artifacts it consumes.
"""
import os
import re

from headguard.config import CompatibilityError, EmptyDatasetError, MissingArtifactError
from headguard.corpus.readers import load_corpus, write_corpus
from headguard.logger import log_stage, logger
from headguard.model.checkpoint import load_model
from headguard.utils import ensure_workdir, read_json, write_json

CORPUS = "corpus.jsonl"
TRAIN_SPLIT = "train.jsonl"
TEST_SPLIT = "test.jsonl"
CHECKPOINT = "model.ckpt"
TRAIN_METRICS = "train_metrics.json"
ADVERSARIAL = "adversarial.jsonl"
ATTACK_STATS = "attack_stats.json"
MEAN_STATS = "mean_stats.json"
HEADS = "heads.json"
BEST_HEADS = "best_heads.json"
MITIGATION = "mitigation.json"
GROUP_CSV = "group_accuracy.csv"
GROUP_SVG = "group_accuracy.svg"
SUMMARY = "summary.json"

DATASETS = {"clean": TEST_SPLIT, "adversarial": ADVERSARIAL}
SLUG_RE = re.compile(r"[^A-Za-z0-9_-]+")


def slug(group):
    return SLUG_RE.sub("-", group).strip("-") or "group"


def sweep_files(dataset_tag, group=None):
    """(csv, json, svg) names of one sweep."""
    stem = f"sweep_{dataset_tag}" if group is None else f"sweep_{dataset_tag}_{slug(group)}"
    return f"{stem}.csv", f"{stem}.json", f"heatmap_{stem[len('sweep_'):]}.svg"


def sweep_index(dataset_tag):
    return f"sweep_{dataset_tag}_groups.json"


class ServiceAlreadyRunningError(Exception):
    pass


class Workdir:
    def __init__(self, path):
        self.root = path

    def create(self):
        ensure_workdir(self.root)
        return self

    def path(self, name):
        return os.path.join(self.root, name)

    def exists(self, name):
        return os.path.isfile(self.path(name))

    def require(self, name, what=None):
        if not self.exists(name):
            raise MissingArtifactError(
                f"{what or name} not found in {self.root}, run the stage that produces {name} first"
            )
        return self.path(name)

    def read_json(self, name, what=None):
        return read_json(self.require(name, what))

    def write_json(self, name, ob):
        path = write_json(self.path(name), ob)
        logger.info(f"Wrote {path}")
        return path

    def load_dataset(self, name, what=None):
        corpus = load_corpus(self.require(name, what), format="jsonl")
        if len(corpus) == 0:
            raise EmptyDatasetError(f"{what or name} ({self.path(name)}) holds no examples")
        return corpus

    def write_dataset(self, corpus, name):
        path = write_corpus(corpus, self.path(name), format="jsonl")
        logger.info(f"Wrote {len(corpus)} examples to {path}")
        return path


def check_compatible(config, model):
    """The checkpoint must have the architecture and vocabulary size the config asks for."""
    expected = {k: v for k, v in config.model.to_dict().items() if k != "seed"}
    found = {k: v for k, v in model.config.to_dict().items() if k != "seed"}
    if expected != found:
        diff = sorted(k for k in expected if expected[k] != found.get(k))
        raise CompatibilityError(
            f"Checkpoint does not match the model config on {diff}: "
            + ", ".join(f"{k} config={expected[k]} checkpoint={found.get(k)}" for k in diff)
        )
    if len(model.vocab) != config.model.vocab_size:
        raise CompatibilityError(
            f"Checkpoint vocabulary has {len(model.vocab)} tokens, "
            f"config asks for {config.model.vocab_size}"
        )


class BaseService:
    stage = None

    def __init__(self, config, args=None):
        self.config = config
        self.args = args
        self.workdir = Workdir(config.workdir)
        self.running = False

    def stop(self):
        self.running = False

    def load_model(self):
        model = load_model(self.workdir.require(CHECKPOINT, "checkpoint"))
        check_compatible(self.config, model)
        return model

    async def _run(self):
        raise NotImplementedError()

    async def run(self):
        if self.running:
            raise ServiceAlreadyRunningError(f"{self.__class__.__name__} is already running.")

        self.running = True
        try:
            with log_stage(self.stage or self.__class__.__name__):
                self.workdir.create()
                return await self._run()
        finally:
            self.stop()
