#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Mitigate stage: zero-ablate the top-k vulnerable (or crucial) heads and report
the signed accuracy deltas on clean and adversarial data.
"""
from headguard.config import ConfigError
from headguard.logger import logger
from headguard.patching.classify import HeadClassification
from headguard.patching.spec import PatchSpec
from headguard.patching.sweep import EvalSet, run_with_patch
from headguard.services.base import ADVERSARIAL, HEADS, MITIGATION, TEST_SPLIT, BaseService


def select_heads(classification, target, k):
    """The first `k` heads of the ranked target list, clamped to what is available."""
    if k < 0:
        raise ConfigError(f"The number of heads to suppress must be >= 0, got {k}")
    available = classification.vulnerable if target == "vulnerable" else classification.crucial
    if k > len(available):
        logger.warning(f"Asked for {k} {target} head(s), only {len(available)} available")
        k = len(available)
    return available[:k]


def evaluate_mitigation(model, datasets, heads, batch_size):
    patch = PatchSpec(heads)
    outcome = {}
    for tag, dataset in datasets.items():
        data = EvalSet.prepare(model, dataset)
        baseline_loss, baseline_acc = run_with_patch(model, data, None, batch_size)
        if heads:
            loss, acc = run_with_patch(model, data, patch, batch_size)
        else:
            loss, acc = baseline_loss, baseline_acc
        outcome[tag] = {
            "n_examples": len(data),
            "baseline_loss": baseline_loss,
            "baseline_accuracy": baseline_acc,
            "mitigated_loss": loss,
            "mitigated_accuracy": acc,
            "delta_loss": loss - baseline_loss,
            "delta_accuracy": acc - baseline_acc,
        }
    return outcome


class MitigateService(BaseService):
    stage = "mitigate"

    async def _run(self):
        settings = self.config.mitigate
        k = getattr(self.args, "k", None)
        if k is None:
            k = settings.k
        classification = HeadClassification.from_dict(self.workdir.read_json(HEADS, "head classification"))
        model = self.load_model()
        datasets = {
            "clean": self.workdir.load_dataset(TEST_SPLIT, "clean test split"),
            "adversarial": self.workdir.load_dataset(ADVERSARIAL, "adversarial dataset"),
        }

        heads = select_heads(classification, settings.target, k)
        outcome = evaluate_mitigation(model, datasets, heads, self.config.sweep.batch_size)
        report = {
            "target": settings.target,
            "k_requested": k,
            "k": len(heads),
            "heads": [str(head) for head in heads],
            **outcome,
        }
        logger.info(
            f"Suppressing {report['heads'] or 'no heads'}: clean accuracy "
            f"{outcome['clean']['delta_accuracy']:+.4f}, adversarial accuracy "
            f"{outcome['adversarial']['delta_accuracy']:+.4f}"
        )
        self.workdir.write_json(MITIGATION, report)
        return report
