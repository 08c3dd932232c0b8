#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
from headguard.model.checkpoint import (  # NOQA
    CheckpointFormatError,
    load_model,
    save_model,
)
from headguard.model.encoder import (  # NOQA
    ActivationCache,
    ClassifierModel,
    ModelConfig,
    ModelConfigError,
)
from headguard.model.metrics import (  # NOQA
    ArgumentError,
    LabelError,
    accuracy,
    bce_loss,
)
from headguard.model.tokenizer import TokenSequence, Vocabulary, tokenize  # NOQA
from headguard.model.training import (  # NOQA
    TrainConfig,
    TrainingError,
    evaluate,
    train,
)
