#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Classify-heads stage: crucial heads from the clean sweep, vulnerable heads from
the adversarial sweep, and the best head of every group.
"""
from headguard.logger import logger
from headguard.patching.classify import best_head_per_group, classify_heads
from headguard.report.sweep_io import read_sweep_json
from headguard.services.base import BEST_HEADS, HEADS, BaseService, sweep_files, sweep_index


class HeadsService(BaseService):
    stage = "classify-heads"

    def read_sweep(self, name, what):
        return read_sweep_json(self.workdir.require(name, what))

    def group_sweeps(self, dataset_tag):
        if not self.workdir.exists(sweep_index(dataset_tag)):
            return []
        index = self.workdir.read_json(sweep_index(dataset_tag))
        return [
            self.read_sweep(index["groups"][group]["json"], f"{dataset_tag} sweep of group {group}")
            for group in sorted(index["groups"])
        ]

    async def _run(self):
        clean = self.read_sweep(sweep_files("clean")[1], "clean sweep")
        adversarial = self.read_sweep(sweep_files("adversarial")[1], "adversarial sweep")
        classification = classify_heads(clean, adversarial, self.config.sweep.tau_c)
        self.workdir.write_json(HEADS, classification.to_dict())

        best = best_head_per_group(self.group_sweeps("adversarial"))
        best_heads = {group: {"head": str(head), "gain": gain} for group, (head, gain) in best.items()}
        for group, entry in best_heads.items():
            logger.info(f"Best head for '{group}': {entry['head']} ({entry['gain']:+.4f})")
        self.workdir.write_json(BEST_HEADS, best_heads)
        return classification, best_heads
