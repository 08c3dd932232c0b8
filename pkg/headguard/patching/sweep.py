#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Single-head ablation sweeps.

Every cell of a sweep is an independent `run_with_patch` evaluation against the
same unpatched baseline. Cells run on a `ConcurrentTasks` pool with the numpy
work pushed to a thread executor; results are keyed by head and assembled in
layer-major order, so the matrices never depend on the schedule.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from headguard.logger import logger
from headguard.model.encoder import DEFAULT_EVAL_BATCH, config_fingerprint
from headguard.model.metrics import check_labels
from headguard.model.training import evaluate
from headguard.patching.spec import (
    AblationMode,
    HeadIndex,
    MeanActivations,
    PatchSpec,
    all_heads,
)
from headguard.utils import ConcurrentTasks, fingerprint, run_blocking

DATASET_TAGS = ("clean", "adversarial")


class SweepConfigurationError(ValueError):
    pass


class EvalSet:
    """A dataset tokenized once for repeated patched evaluations."""

    def __init__(self, ids, labels, fingerprint):
        self.ids = ids
        self.labels = labels
        self.fingerprint = fingerprint

    def __len__(self):
        return len(self.labels)

    @classmethod
    def prepare(cls, model, dataset):
        if isinstance(dataset, EvalSet):
            return dataset
        examples = list(dataset)
        if not examples:
            raise SweepConfigurationError("Cannot evaluate on an empty dataset")
        ids = model.encode([example.text for example in examples])
        labels = check_labels([example.label for example in examples])
        digest = fingerprint([[example.id, example.text, example.label] for example in examples])
        return cls(ids, labels, digest)


def run_with_patch(model, dataset, patch=None, batch_size=DEFAULT_EVAL_BATCH):
    """Mean BCE and accuracy over `dataset` with `patch` applied to every forward."""
    data = EvalSet.prepare(model, dataset)
    return evaluate(model, data.ids, data.labels, patch=patch, batch_size=batch_size)


def _head_batches(model, data, batch_size):
    heads = all_heads(model.config.num_layers, model.config.num_heads)
    for start in range(0, len(data), batch_size):
        _, cache = model.forward(data.ids[start : start + batch_size])
        mask = cache.mask
        yield heads, {head: cache.head(*head)[mask] for head in heads}


def mean_activation_stats(model, dataset, batch_size=DEFAULT_EVAL_BATCH, streaming=True):
    """Mean output of every head over all non-padding positions of `dataset`.

    The streaming variant folds batch means into a running mean; the two-pass
    variant stacks every position first.
    """
    data = EvalSet.prepare(model, dataset)
    if streaming:
        means, count = {}, 0
        for heads, rows in _head_batches(model, data, batch_size):
            n = len(next(iter(rows.values())))
            if n == 0:
                continue
            for head in heads:
                batch_mean = rows[head].mean(axis=0)
                if head not in means:
                    means[head] = batch_mean
                else:
                    means[head] = means[head] + (batch_mean - means[head]) * (n / (count + n))
            count += n
        return MeanActivations(means, count)

    stacked = {}
    for heads, rows in _head_batches(model, data, batch_size):
        for head in heads:
            stacked.setdefault(head, []).append(rows[head])
    means = {head: np.concatenate(chunks).mean(axis=0) for head, chunks in stacked.items()}
    count = sum(len(chunk) for chunk in next(iter(stacked.values())))
    return MeanActivations(means, count)


class SweepResult:
    """L x H deltas (patched metric - baseline metric) of single-head ablations."""

    def __init__(
        self,
        baseline_loss,
        baseline_accuracy,
        delta_loss,
        delta_accuracy,
        dataset_tag,
        group_tag=None,
        n_examples=0,
        mode="zero",
        dataset_fingerprint=None,
        model_fingerprint=None,
    ):
        self.baseline_loss = float(baseline_loss)
        self.baseline_accuracy = float(baseline_accuracy)
        self.delta_loss = np.asarray(delta_loss, dtype=np.float64)
        self.delta_accuracy = np.asarray(delta_accuracy, dtype=np.float64)
        if self.delta_loss.ndim != 2 or self.delta_loss.shape != self.delta_accuracy.shape:
            raise SweepConfigurationError(
                f"Delta matrices must share an L x H shape, got {self.delta_loss.shape} "
                f"and {self.delta_accuracy.shape}"
            )
        if dataset_tag not in DATASET_TAGS:
            raise SweepConfigurationError(
                f"dataset_tag must be one of {DATASET_TAGS}, got {dataset_tag!r}"
            )
        self.dataset_tag = dataset_tag
        self.group_tag = group_tag
        self.n_examples = int(n_examples)
        self.mode = AblationMode.from_string(mode).value
        self.dataset_fingerprint = dataset_fingerprint
        self.model_fingerprint = model_fingerprint

    @property
    def shape(self):
        return self.delta_loss.shape

    def cells(self):
        """(HeadIndex, delta_loss, delta_accuracy) in layer-major order."""
        num_layers, num_heads = self.shape
        for head in all_heads(num_layers, num_heads):
            yield head, float(self.delta_loss[head]), float(self.delta_accuracy[head])

    def cell(self, head):
        head = HeadIndex.parse(head)
        return float(self.delta_loss[head]), float(self.delta_accuracy[head])

    def to_dict(self):
        return {
            "baseline_loss": self.baseline_loss,
            "baseline_accuracy": self.baseline_accuracy,
            "delta_loss": self.delta_loss.tolist(),
            "delta_accuracy": self.delta_accuracy.tolist(),
            "dataset_tag": self.dataset_tag,
            "group_tag": self.group_tag,
            "n_examples": self.n_examples,
            "mode": self.mode,
            "dataset_fingerprint": self.dataset_fingerprint,
            "model_fingerprint": self.model_fingerprint,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def __eq__(self, other):
        return isinstance(other, SweepResult) and self.to_dict() == other.to_dict()

    def __repr__(self):
        group = f", group={self.group_tag}" if self.group_tag else ""
        return f"SweepResult({self.dataset_tag}{group}, {self.shape[0]}x{self.shape[1]})"


async def sweep_heads(
    model,
    dataset,
    mode="zero",
    mean_stats=None,
    workers=1,
    dataset_tag="clean",
    group_tag=None,
    batch_size=DEFAULT_EVAL_BATCH,
):
    """Zero- or mean-ablates every head in turn and records the metric deltas."""
    mode = AblationMode.from_string(mode)
    if mode is AblationMode.MEAN and mean_stats is None:
        raise SweepConfigurationError("Mean-ablation sweeps need mean activation stats")
    if workers < 1:
        raise SweepConfigurationError(f"workers must be >= 1, got {workers}")
    stats = mean_stats if mode is AblationMode.MEAN else None

    data = EvalSet.prepare(model, dataset)
    num_layers, num_heads = model.config.num_layers, model.config.num_heads
    results = {}

    with ThreadPoolExecutor(max_workers=workers) as executor:
        baseline_loss, baseline_acc = await run_blocking(
            executor, run_with_patch, model, data, None, batch_size
        )
        pool = ConcurrentTasks(max_concurrency=workers)

        def _cell(head):
            async def _run():
                patch = PatchSpec.single(head, mode, stats)
                loss, acc = await run_blocking(
                    executor, run_with_patch, model, data, patch, batch_size
                )
                results[head] = (loss - baseline_loss, acc - baseline_acc)
                logger.debug(f"{dataset_tag} {patch}: dloss {results[head][0]:+.6f}")

            return _run

        for head in all_heads(num_layers, num_heads):
            await pool.put(_cell(head))
        await pool.join()

    delta_loss = np.zeros((num_layers, num_heads))
    delta_acc = np.zeros((num_layers, num_heads))
    for head, (d_loss, d_acc) in results.items():
        delta_loss[head] = d_loss
        delta_acc[head] = d_acc

    group = f" [{group_tag}]" if group_tag else ""
    logger.info(
        f"Swept {num_layers * num_heads} heads on {len(data)} {dataset_tag} examples{group}, "
        f"baseline accuracy {baseline_acc:.4f}"
    )
    return SweepResult(
        baseline_loss,
        baseline_acc,
        delta_loss,
        delta_acc,
        dataset_tag=dataset_tag,
        group_tag=group_tag,
        n_examples=len(data),
        mode=mode,
        dataset_fingerprint=data.fingerprint,
        model_fingerprint=config_fingerprint(model),
    )


async def sweep_heads_by_group(
    model,
    dataset,
    mode="zero",
    mean_stats=None,
    workers=1,
    dataset_tag="clean",
    groups=None,
    batch_size=DEFAULT_EVAL_BATCH,
):
    """The overall sweep followed by one sweep per group, groups sorted.

    Examples with several tags take part in each of their groups. Requested
    groups without examples are left out with a warning.
    """
    results = [
        await sweep_heads(
            model, dataset, mode, mean_stats, workers, dataset_tag, None, batch_size
        )
    ]
    requested = sorted(groups) if groups is not None else dataset.groups
    for group in requested:
        subset = dataset.by_group(group)
        if len(subset) == 0:
            logger.warning(f"Group '{group}' has no {dataset_tag} examples, skipping")
            continue
        results.append(
            await sweep_heads(
                model, subset, mode, mean_stats, workers, dataset_tag, group, batch_size
            )
        )
    return results
