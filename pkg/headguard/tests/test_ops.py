#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from headguard.autodiff import ops
from headguard.autodiff.tensor import (
    ConfigurationError,
    DimensionError,
    Tape,
    Tensor,
)

finite_rows = st.lists(
    st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=1, max_size=12
)


def test_matmul_identity():
    eye = Tensor(np.eye(2))
    np.testing.assert_array_equal(ops.matmul(eye, eye).data, np.eye(2))


def test_matmul_small():
    out = ops.matmul(Tensor([[1, 2], [3, 4]]), Tensor([[0], [1]]))
    assert out.data.tolist() == [[2.0], [4.0]]


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError) as e:
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    assert "[2, 3]" in str(e.value)


def test_matmul_batched():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 2, 4))
    b = rng.normal(size=(4, 5))
    out = ops.matmul(Tensor(a), Tensor(b))
    np.testing.assert_allclose(out.data, a @ b)

    with pytest.raises(DimensionError):
        ops.matmul(Tensor(a), Tensor(rng.normal(size=(2, 4, 5))))


def test_softmax_uniform():
    out = ops.softmax_lastdim(Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3])


def test_softmax_analytic():
    out = ops.softmax_lastdim(Tensor([math.log(1), math.log(3)]))
    np.testing.assert_allclose(out.data, [0.25, 0.75])


def test_softmax_stable():
    out = ops.softmax_lastdim(Tensor([1000.0, 0.0]))
    assert np.all(np.isfinite(out.data))
    assert out.data[0] == pytest.approx(1.0)
    assert out.data[1] == pytest.approx(0.0)


def test_softmax_empty():
    with pytest.raises(DimensionError) as e:
        ops.softmax_lastdim(Tensor(np.zeros((2, 0))))
    assert "softmax_lastdim: empty tensor" in str(e.value)


@given(finite_rows)
@settings(max_examples=50, deadline=None)
def test_softmax_rows_sum_to_one(row):
    out = ops.softmax_lastdim(Tensor(row)).data
    assert abs(out.sum() - 1.0) < 1e-12
    assert np.all(out >= 0) and np.all(out <= 1)


def test_layer_norm_constant_row():
    out = ops.layer_norm(Tensor([5.0, 5.0, 5.0, 5.0]), Tensor(np.ones(4)), Tensor(np.zeros(4)))
    np.testing.assert_array_equal(out.data, np.zeros(4))


def test_layer_norm_already_normalized():
    out = ops.layer_norm(Tensor([1.0, -1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
    np.testing.assert_allclose(out.data, [1.0, -1.0], atol=1e-9)


def test_layer_norm_row_stats():
    x = np.random.default_rng(3).normal(size=(3, 8)) * 4 + 2
    out = ops.layer_norm(Tensor(x), Tensor(np.ones(8)), Tensor(np.zeros(8)), eps=1e-5).data
    assert np.all(np.abs(out.mean(axis=-1)) < 1e-9)
    assert np.all(np.abs(out.var(axis=-1) - 1) < 1e-3)


def test_layer_norm_errors():
    x = Tensor(np.ones((2, 4)))
    with pytest.raises(ConfigurationError):
        ops.layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)), eps=0)
    with pytest.raises(DimensionError):
        ops.layer_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)))


def test_gelu():
    assert ops.gelu(Tensor([0.0])).data[0] == 0.0
    assert ops.gelu(Tensor([20.0])).data[0] == pytest.approx(20.0)
    assert ops.gelu(Tensor([-20.0])).data[0] == pytest.approx(0.0, abs=1e-12)


def test_sigmoid_saturates_without_overflow():
    out = ops.sigmoid(Tensor([-1000.0, 0.0, 1000.0])).data
    assert np.all(np.isfinite(out))
    assert out.tolist() == [0.0, 0.5, 1.0]


def test_bce_values():
    assert ops.bce(Tensor([1.0]), [1]).item() == pytest.approx(0.0, abs=1e-11)
    assert ops.bce(Tensor([0.5]), [1]).item() == pytest.approx(math.log(2))
    assert ops.bce(Tensor([0.9]), [0]).item() == pytest.approx(-math.log(0.1))
    assert math.isfinite(ops.bce(Tensor([0.0]), [1]).item())


def test_bce_empty():
    with pytest.raises(DimensionError):
        ops.bce(Tensor(np.zeros(0)), [])


def test_add_broadcast_grad():
    x = ops.parameter(np.ones((3, 4)))
    bias = ops.parameter(np.zeros(4))
    with Tape() as tape:
        tape.backward(ops.sum(ops.add(x, bias)))
    np.testing.assert_array_equal(bias.grad, np.full(4, 3.0))
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_add_does_not_broadcast():
    with pytest.raises(DimensionError):
        ops.add(Tensor(np.ones((3, 4))), Tensor(np.ones(3)))


def test_embedding():
    table = ops.parameter(np.arange(12.0).reshape(4, 3))
    ids = np.array([[0, 2], [2, 3]])
    with Tape() as tape:
        rows = ops.embedding(table, ids)
        tape.backward(ops.sum(rows))
    assert rows.shape == (2, 2, 3)
    np.testing.assert_array_equal(table.grad[:, 0], [1.0, 0.0, 2.0, 1.0])

    with pytest.raises(DimensionError):
        ops.embedding(table, [4])


def test_mask_replace_blocks_gradient():
    x = ops.parameter([1.0, 2.0, 3.0])
    with Tape() as tape:
        out = ops.mask_replace(x, [True, False, True], 0.0)
        tape.backward(ops.sum(out))
    assert out.data.tolist() == [1.0, 0.0, 3.0]
    assert x.grad.tolist() == [1.0, 0.0, 1.0]


def test_select():
    x = ops.parameter(np.arange(6.0).reshape(2, 3))
    with Tape() as tape:
        first = ops.select(x, 0, axis=1)
        tape.backward(ops.sum(first))
    assert first.data.tolist() == [0.0, 3.0]
    assert x.grad.tolist() == [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]


def test_transpose_and_reshape_round_trip_grad():
    x = ops.parameter(np.arange(24.0).reshape(2, 3, 4))
    weights = np.arange(24.0).reshape(4, 3, 2)
    with Tape() as tape:
        t = ops.transpose(x, (2, 1, 0))
        loss = ops.sum(ops.mul(t, Tensor(weights)))
        tape.backward(loss)
    np.testing.assert_array_equal(x.grad, np.transpose(weights, (2, 1, 0)))

    r = ops.reshape(Tensor(np.arange(6.0)), (2, 3))
    assert r.shape == (2, 3)
