#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
from headguard.services.attack import AttackService  # NOQA
from headguard.services.heads import HeadsService  # NOQA
from headguard.services.mitigate import MitigateService  # NOQA
from headguard.services.pipeline import PipelineService  # NOQA
from headguard.services.report import ReportService  # NOQA
from headguard.services.sweep import SweepService  # NOQA
from headguard.services.synthesize import SynthesizeService  # NOQA
from headguard.services.train import TrainService  # NOQA

SERVICES = {
    "synthesize": SynthesizeService,
    "train": TrainService,
    "attack": AttackService,
    "sweep": SweepService,
    "classify-heads": HeadsService,
    "mitigate": MitigateService,
    "report": ReportService,
    "pipeline": PipelineService,
}
