#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
from headguard.patching.classify import (  # NOQA
    HeadClassification,
    best_head_per_group,
    classify_heads,
    identify_crucial,
    identify_vulnerable,
)
from headguard.patching.spec import (  # NOQA
    AblationMode,
    HeadIndex,
    MeanActivations,
    PatchIndexError,
    PatchSpec,
    PatchSpecError,
)
from headguard.patching.sweep import (  # NOQA
    SweepConfigurationError,
    SweepResult,
    mean_activation_stats,
    run_with_patch,
    sweep_heads,
    sweep_heads_by_group,
)
