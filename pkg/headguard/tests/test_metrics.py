#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import math

import pytest

from headguard.model.metrics import (
    ArgumentError,
    LabelError,
    accuracy,
    bce_loss,
    predictions,
)


def test_bce_loss():
    assert bce_loss([1.0], [1]) == pytest.approx(0.0, abs=1e-11)
    assert bce_loss([0.5], [1]) == pytest.approx(0.693147, abs=1e-6)
    assert bce_loss([0.9], [0]) == pytest.approx(2.302585, abs=1e-6)


def test_bce_loss_is_a_batch_mean():
    assert bce_loss([0.5, 1.0], [1, 1]) == pytest.approx(math.log(2) / 2)


def test_bce_loss_clamps():
    assert math.isfinite(bce_loss([0.0], [1]))
    assert math.isfinite(bce_loss([1.0], [0]))


def test_bce_loss_errors():
    with pytest.raises(LabelError) as e:
        bce_loss([0.5], [2])
    assert "position 0" in str(e.value)
    with pytest.raises(ArgumentError):
        bce_loss([0.5, 0.5], [1])
    with pytest.raises(ArgumentError):
        bce_loss([], [])


def test_accuracy():
    assert accuracy([0.9, 0.1], [1, 0]) == 1.0
    assert accuracy([0.9, 0.1], [0, 1]) == 0.0
    assert accuracy([0.9, 0.2, 0.7, 0.4], [1, 1, 1, 0]) == 0.75


def test_accuracy_tie_predicts_toxic():
    assert accuracy([0.5], [1]) == 1.0
    assert predictions([0.5, 0.4999]).tolist() == [1, 0]


def test_accuracy_errors():
    with pytest.raises(ArgumentError):
        accuracy([], [])
    with pytest.raises(ArgumentError):
        accuracy([0.1], [0, 1])
    with pytest.raises(LabelError):
        accuracy([0.1], [-1])
