#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Crucial and vulnerable heads.

A head is crucial when zero-ablating it drops clean accuracy by at least tau_c,
and vulnerable when ablating it lowers the loss on adversarial input. Ties are
broken by the lower layer, then the lower head.
"""
from headguard.logger import logger
from headguard.patching.spec import HeadIndex
from headguard.patching.sweep import SweepConfigurationError

DEFAULT_TAU_C = 0.10


def identify_crucial(sweep_clean, tau_c=DEFAULT_TAU_C):
    """Heads with delta_accuracy <= -tau_c, largest drop first."""
    if not tau_c > 0:
        raise SweepConfigurationError(f"tau_c must be > 0, got {tau_c}")
    if sweep_clean.dataset_tag != "clean":
        logger.warning(f"Looking for crucial heads on a {sweep_clean.dataset_tag} sweep")
    hits = [
        (delta_acc, head)
        for head, _, delta_acc in sweep_clean.cells()
        if delta_acc <= -tau_c
    ]
    return [head for _, head in sorted(hits)]


def identify_vulnerable(sweep_adv):
    """Heads with delta_loss < 0, most negative first."""
    if sweep_adv.dataset_tag != "adversarial":
        logger.warning(f"Looking for vulnerable heads on a {sweep_adv.dataset_tag} sweep")
    hits = [(delta_loss, head) for head, delta_loss, _ in sweep_adv.cells() if delta_loss < 0]
    return [head for _, head in sorted(hits)]


class HeadClassification:
    def __init__(self, crucial, vulnerable, tau_c, criteria=None):
        self.crucial = [HeadIndex.parse(head) for head in crucial]
        self.vulnerable = [HeadIndex.parse(head) for head in vulnerable]
        self.tau_c = tau_c
        self.criteria = criteria or {}

    @property
    def intersection(self):
        vulnerable = set(self.vulnerable)
        return [head for head in self.crucial if head in vulnerable]

    def to_dict(self):
        return {
            "tau_c": self.tau_c,
            "crucial": [str(head) for head in self.crucial],
            "vulnerable": [str(head) for head in self.vulnerable],
            "intersection": [str(head) for head in self.intersection],
            "criteria": self.criteria,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["crucial"], data["vulnerable"], data["tau_c"], data.get("criteria"))


def classify_heads(sweep_clean, sweep_adv, tau_c=DEFAULT_TAU_C):
    """Crucial set, vulnerable ranking and the per-head numbers behind them."""
    if sweep_clean.shape != sweep_adv.shape:
        raise SweepConfigurationError(
            f"Clean sweep {sweep_clean.shape} and adversarial sweep {sweep_adv.shape} differ in shape"
        )
    crucial = identify_crucial(sweep_clean, tau_c)
    vulnerable = identify_vulnerable(sweep_adv)
    criteria = {
        "crucial": [
            {"head": str(head), "clean_delta_accuracy": sweep_clean.cell(head)[1]}
            for head in crucial
        ],
        "vulnerable": [
            {
                "head": str(head),
                "adversarial_delta_loss": sweep_adv.cell(head)[0],
                "adversarial_delta_accuracy": sweep_adv.cell(head)[1],
            }
            for head in vulnerable
        ],
    }
    result = HeadClassification(crucial, vulnerable, tau_c, criteria)
    logger.info(
        f"{len(crucial)} crucial head(s), {len(vulnerable)} vulnerable head(s), "
        f"{len(result.intersection)} in both"
    )
    return result


def best_head_per_group(sweeps):
    """Per group, the head whose ablation raises that group's accuracy most.

    The signed gain is kept, so a group where every ablation hurts still gets
    its least harmful head. Accuracy ties go to the larger loss drop, then to
    the first head in layer-major order. Sweeps without a group tag are ignored.
    """
    best = {}
    for sweep in sweeps:
        if sweep.group_tag is None:
            continue
        candidates = [
            (-delta_acc, delta_loss, head) for head, delta_loss, delta_acc in sweep.cells()
        ]
        gain, _, head = min(candidates)
        best[sweep.group_tag] = (head, -gain)
    return {group: best[group] for group in sorted(best)}
