#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import numpy as np
import pytest

from headguard.autodiff import ops
from headguard.autodiff.gradcheck import finite_diff_grad, gradcheck, relative_error
from headguard.autodiff.tensor import ConfigurationError, Tape, Tensor
from headguard.model.encoder import ClassifierModel, ModelConfig
from headguard.model.tokenizer import Vocabulary

TOLERANCE = 1e-4


def _rng(seed=0):
    return np.random.default_rng(seed)


def test_finite_diff_sum():
    x = Tensor(_rng().normal(size=(3, 2)))
    grad = finite_diff_grad(ops.sum, x)
    np.testing.assert_allclose(grad.data, np.ones((3, 2)), atol=1e-9)


def test_finite_diff_square():
    x = Tensor([2.0])
    grad = finite_diff_grad(lambda t: ops.sum(ops.mul(t, t)), x, h=1e-5)
    assert abs(grad.data[0] - 4.0) < 1e-8


def test_finite_diff_restores_input():
    data = _rng().normal(size=4)
    x = Tensor(data)
    finite_diff_grad(ops.sum, x)
    np.testing.assert_array_equal(x.data, data)


def test_finite_diff_needs_positive_step():
    with pytest.raises(ConfigurationError):
        finite_diff_grad(ops.sum, Tensor([1.0]), h=0)


def test_relative_error():
    assert relative_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert relative_error([1.0], [3.0]) == pytest.approx(0.5)
    assert relative_error([], []) == 0.0
    # both below the floor: compared in absolute terms
    assert relative_error([1e-9], [0.0], floor=1e-6) == pytest.approx(1e-3)


def test_matmul_gradcheck():
    rng = _rng(1)
    a = ops.parameter(rng.normal(size=(5, 7)))
    b = ops.parameter(rng.normal(size=(7, 3)))
    weights = Tensor(rng.normal(size=(5, 3)))

    errors = gradcheck(lambda: ops.sum(ops.mul(ops.matmul(a, b), weights)), {"a": a, "b": b})
    assert max(errors.values()) < 1e-6


def test_gelu_gradcheck():
    x = ops.parameter(_rng(2).normal(size=10) * 2)
    weights = Tensor(_rng(3).normal(size=10))
    errors = gradcheck(lambda: ops.sum(ops.mul(ops.gelu(x), weights)), {"x": x})
    assert errors["x"] < 1e-5


def test_matmul_softmax_composite_agrees_with_backward():
    rng = _rng(4)
    a = ops.parameter(rng.normal(size=(3, 4)))
    b = ops.parameter(rng.normal(size=(4, 5)))
    weights = Tensor(rng.normal(size=(3, 5)))

    def loss():
        return ops.sum(ops.mul(ops.softmax_lastdim(ops.matmul(a, b)), weights))

    errors = gradcheck(loss, {"a": a, "b": b})
    assert max(errors.values()) < TOLERANCE


def test_layer_norm_gradcheck():
    rng = _rng(5)
    x = ops.parameter(rng.normal(size=(3, 6)))
    gain = ops.parameter(rng.normal(size=6))
    bias = ops.parameter(rng.normal(size=6))
    weights = Tensor(rng.normal(size=(3, 6)))

    def loss():
        return ops.sum(ops.mul(ops.layer_norm(x, gain, bias), weights))

    errors = gradcheck(loss, {"x": x, "gain": gain, "bias": bias})
    assert max(errors.values()) < TOLERANCE


def test_bce_sigmoid_gradcheck():
    rng = _rng(6)
    z = ops.parameter(rng.normal(size=8))
    labels = rng.integers(0, 2, size=8)
    errors = gradcheck(lambda: ops.bce(ops.sigmoid(z), labels), {"z": z})
    assert errors["z"] < TOLERANCE


def _tiny_model():
    config = ModelConfig(
        num_layers=2, num_heads=2, d_model=16, d_ff=32, vocab_size=12, max_seq_len=6, seed=7
    )
    words = ["w{}".format(i) for i in range(9)]
    vocab = Vocabulary(["[CLS]", "[PAD]", "[UNK]"] + words)
    model = ClassifierModel(config, vocab)
    # untrained biases are zero, perturb them so their gradients are exercised
    rng = _rng(8)
    for name, param in model.params.items():
        if param.ndim == 1 and not name.endswith("_gain"):
            param.data = rng.normal(0.0, 0.1, size=param.shape)
    return model


@pytest.mark.fail_slow(60)
def test_full_model_gradcheck():
    model = _tiny_model()
    ids = np.array(
        [
            [0, 3, 4, 5, 1, 1],
            [0, 6, 7, 1, 1, 1],
            [0, 8, 9, 10, 11, 2],
            [0, 2, 1, 1, 1, 1],
        ]
    )
    labels = [1, 0, 1, 0]
    embeddings = ops.parameter(model.embedding_table[ids].copy())

    def loss():
        probs, _ = model.forward(ids, input_embeddings=embeddings)
        return ops.bce(probs, labels)

    tensors = dict(model.params)
    tensors["input_embeddings"] = embeddings
    errors = gradcheck(loss, tensors, h=1e-5, floor=1e-4)

    worst = max(errors, key=errors.get)
    assert errors[worst] < TOLERANCE, f"{worst}: {errors[worst]:.3e}"


def test_gradcheck_populates_grads():
    x = ops.parameter([1.0, 2.0])
    gradcheck(lambda: ops.sum(ops.mul(x, x)), {"x": x})
    assert x.grad.tolist() == [2.0, 4.0]


def test_tape_grad_through_model_matches_tokens():
    model = _tiny_model()
    ids = np.array([[0, 3, 4, 1, 1, 1]])
    with Tape() as tape:
        probs, _ = model.forward(ids)
        tape.backward(ops.sum(probs))
    # rows of tokens absent from the batch get no gradient
    grad = model.params["token_embedding"].grad
    assert np.any(grad[3] != 0)
    assert np.all(grad[5] == 0)
