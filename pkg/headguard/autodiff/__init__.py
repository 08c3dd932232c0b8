#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
from headguard.autodiff.gradcheck import (  # NOQA
    finite_diff_grad,
    gradcheck,
    relative_error,
)
from headguard.autodiff.ops import (  # NOQA
    gelu,
    layer_norm,
    matmul,
    softmax_lastdim,
)
from headguard.autodiff.tensor import (  # NOQA
    ConfigurationError,
    DimensionError,
    Tape,
    TapeStateError,
    Tensor,
    backward,
    current_tape,
)
