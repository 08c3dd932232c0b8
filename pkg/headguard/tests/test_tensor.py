#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import numpy as np
import pytest

from headguard.autodiff import ops
from headguard.autodiff.tensor import (
    DimensionError,
    Tape,
    TapeStateError,
    Tensor,
    backward,
    current_tape,
)


def test_tensor_basics():
    t = Tensor([[1, 2, 3], [4, 5, 6]])
    assert t.shape == (2, 3)
    assert t.size == 6
    assert t.ndim == 2
    assert t.data.dtype == np.float64
    assert t.grad is None
    assert not t.requires_grad

    with pytest.raises(DimensionError):
        t.item()

    assert Tensor([7.5]).item() == 7.5
    assert "requires_grad=True" in repr(Tensor([1.0], requires_grad=True))


def test_numpy_is_a_copy():
    t = Tensor([1.0, 2.0])
    view = t.numpy()
    view[0] = 100
    assert t.data[0] == 1.0


def test_sum_grad_is_ones():
    x = ops.parameter(np.arange(12.0).reshape(3, 4))
    with Tape() as tape:
        tape.backward(ops.sum(x))
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_square_grad():
    x = ops.parameter([3.0])
    with Tape():
        backward(ops.sum(ops.mul(x, x)))
    assert x.grad.tolist() == [6.0]


def test_backward_accumulates():
    x = ops.parameter([3.0])
    with Tape() as tape:
        loss = ops.sum(ops.mul(x, x))
        tape.backward(loss)
        tape.backward(loss)
    assert x.grad.tolist() == [12.0]

    x.zero_grad()
    assert x.grad is None


def test_backward_needs_scalar():
    x = ops.parameter([1.0, 2.0])
    with Tape() as tape:
        y = ops.mul(x, x)
        with pytest.raises(DimensionError):
            tape.backward(y)


def test_backward_needs_tape():
    x = ops.parameter([1.0])
    loss = ops.sum(x)
    assert current_tape() is None
    with pytest.raises(TapeStateError):
        backward(loss)


def test_tape_cannot_be_entered_twice():
    tape = Tape()
    with tape:
        with pytest.raises(TapeStateError):
            tape.__enter__()
    assert current_tape() is None


def test_no_recording_without_tape():
    x = ops.parameter([1.0, 2.0])
    y = ops.mul(x, x)
    assert not y.requires_grad


def test_constants_are_not_recorded():
    with Tape() as tape:
        ops.mul(Tensor([1.0]), Tensor([2.0]))
    assert len(tape) == 0


def test_backward_visits_reverse_order():
    visited = []
    x = ops.parameter([2.0])

    with Tape() as tape:
        a = ops.scale(x, 3.0)
        b = ops.scale(a, 5.0)
        loss = ops.sum(b)
        for entry in tape.entries:
            original = entry.backward

            def _spy(g, name=entry.name, original=original):
                visited.append(name)
                return original(g)

            entry.backward = _spy
        tape.backward(loss)

    assert visited == ["sum", "scale", "scale"]
    assert x.grad.tolist() == [15.0]


def test_reset_clears_entries():
    x = ops.parameter([1.0])
    with Tape() as tape:
        ops.sum(x)
        assert len(tape) == 1
        tape.reset()
        assert len(tape) == 0


def test_detach():
    x = ops.parameter([1.0, 2.0], name="x")
    d = x.detach()
    assert not d.requires_grad
    assert d.name == "x"
    np.testing.assert_array_equal(d.data, x.data)
