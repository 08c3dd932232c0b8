#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
from headguard.logger import logger
from headguard.services.attack import AttackService
from headguard.services.base import BaseService
from headguard.services.heads import HeadsService
from headguard.services.mitigate import MitigateService
from headguard.services.report import ReportService
from headguard.services.sweep import SweepService
from headguard.services.train import TrainService


class PipelineService(BaseService):
    """train -> attack -> sweep (clean, adversarial) -> classify-heads -> mitigate -> report"""

    stage = "pipeline"

    def stages(self):
        return [
            ("train", TrainService(self.config, self.args)),
            ("attack", AttackService(self.config, self.args)),
            ("sweep clean", SweepService(self.config, self.args, dataset_tag="clean")),
            ("sweep adversarial", SweepService(self.config, self.args, dataset_tag="adversarial")),
            ("classify-heads", HeadsService(self.config, self.args)),
            ("mitigate", MitigateService(self.config, self.args)),
            ("report", ReportService(self.config, self.args)),
        ]

    async def _run(self):
        result = None
        for name, stage in self.stages():
            if not self.running:
                logger.info(f"Stopped before {name}")
                return None
            logger.info(f"Pipeline stage: {name}")
            result = await stage.run()
        return result
