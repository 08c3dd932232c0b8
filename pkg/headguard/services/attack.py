#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Attack stage: PGD against the held-out split, keeping the filtered successes.
"""
from headguard.attack import attack_corpus
from headguard.logger import logger
from headguard.patching.sweep import run_with_patch
from headguard.services.base import ADVERSARIAL, ATTACK_STATS, TEST_SPLIT, BaseService


class AttackService(BaseService):
    stage = "attack"

    async def _run(self):
        model = self.load_model()
        clean = self.workdir.load_dataset(TEST_SPLIT, "clean test split")
        adversarial, stats = await attack_corpus(
            model, clean, self.config.attack, workers=self.config.workers
        )
        self.workdir.write_dataset(adversarial, ADVERSARIAL)

        report = stats.to_dict()
        _, report["clean_accuracy"] = run_with_patch(model, clean)
        report["adversarial_accuracy"] = None
        if len(adversarial):
            _, report["adversarial_accuracy"] = run_with_patch(model, adversarial)
            logger.info(
                f"Accuracy {report['clean_accuracy']:.4f} on clean examples, "
                f"{report['adversarial_accuracy']:.4f} on the {len(adversarial)} filtered "
                "adversarial examples"
            )
        else:
            logger.warning("No adversarial example passed the similarity filter")
        self.workdir.write_json(ATTACK_STATS, report)
        return report
