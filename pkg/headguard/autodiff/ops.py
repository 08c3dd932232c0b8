#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Differentiable primitives.

Each primitive computes its value with numpy and registers a backward rule
mapping the upstream gradient to one gradient per input. Broadcasting is limited
to what the encoder needs: a trailing-aligned operand (bias vectors, masks)
against a batched activation.
"""
import math

import numpy as np

from headguard.autodiff.tensor import (
    DTYPE,
    ConfigurationError,
    DimensionError,
    Tensor,
    as_tensor,
    record,
)

GELU_COEF = math.sqrt(2.0 / math.pi)
GELU_CUBIC = 0.044715
BCE_EPS = 1e-12


def _unbroadcast(grad, shape):
    """Sums `grad` down to `shape`, undoing trailing-aligned broadcasting."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a, b, name):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            f"{name}: shapes {list(a.shape)} and {list(b.shape)} do not broadcast"
        )


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record("add", (a, b), a.data + b.data, _backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record("sub", (a, b), a.data - b.data, _backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def _backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record("mul", (a, b), a.data * b.data, _backward)


def scale(a, factor):
    factor = float(factor)

    def _backward(g):
        return (g * factor,)

    return record("scale", (a,), a.data * factor, _backward)


def matmul(a, b):
    """Matrix product over the last two axes.

    `a` is [..., m, k]; `b` is either [k, n] (shared weights) or carries the
    same leading axes as `a`.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul: shapes {list(a.shape)} and {list(b.shape)} are not aligned"
        )
    if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
        raise DimensionError(
            f"matmul: batch axes of {list(a.shape)} and {list(b.shape)} differ"
        )

    def _backward(g):
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2:
            k, n = b.shape
            grad_b = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return grad_a, grad_b

    return record("matmul", (a, b), np.matmul(a.data, b.data), _backward)


def transpose(a, axes):
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def _backward(g):
        return (np.transpose(g, inverse),)

    return record("transpose", (a,), np.transpose(a.data, axes), _backward)


def reshape(a, shape):
    def _backward(g):
        return (g.reshape(a.shape),)

    return record("reshape", (a,), a.data.reshape(shape), _backward)


def sum(a):
    def _backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return record("sum", (a,), np.sum(a.data), _backward)


def mean(a):
    count = a.size

    def _backward(g):
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return record("mean", (a,), np.mean(a.data), _backward)


def softmax_lastdim(x):
    """Softmax over the last axis, computed with max-subtraction."""
    if x.ndim == 0 or x.size == 0 or x.shape[-1] < 1:
        raise DimensionError(f"softmax_lastdim: empty tensor of shape {list(x.shape)}")
    shifted = x.data - np.max(x.data, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    out = exp / np.sum(exp, axis=-1, keepdims=True)

    def _backward(g):
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)

    return record("softmax", (x,), out, _backward)


def layer_norm(x, gain, bias, eps=1e-5):
    if eps <= 0:
        raise ConfigurationError(f"layer_norm: eps must be > 0, got {eps}")
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise DimensionError(
            f"layer_norm: gain {list(gain.shape)} / bias {list(bias.shape)} "
            f"do not match last dimension {width}"
        )
    mu = np.mean(x.data, axis=-1, keepdims=True)
    centered = x.data - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gain.data + bias.data

    def _backward(g):
        dxhat = g * gain.data
        grad_x = (
            inv_std
            / width
            * (
                width * dxhat
                - np.sum(dxhat, axis=-1, keepdims=True)
                - xhat * np.sum(dxhat * xhat, axis=-1, keepdims=True)
            )
        )
        lead = tuple(range(g.ndim - 1))
        return grad_x, np.sum(g * xhat, axis=lead), np.sum(g, axis=lead)

    return record("layer_norm", (x, gain, bias), out, _backward)


def gelu(x):
    """GELU, tanh approximation: 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715x^3)))."""
    inner = GELU_COEF * (x.data + GELU_CUBIC * x.data**3)
    t = np.tanh(inner)
    out = 0.5 * x.data * (1.0 + t)

    def _backward(g):
        d_inner = GELU_COEF * (1.0 + 3.0 * GELU_CUBIC * x.data**2)
        local = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * d_inner
        return (g * local,)

    return record("gelu", (x,), out, _backward)


def sigmoid_array(z):
    z = np.asarray(z, dtype=DTYPE)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x):
    out = sigmoid_array(x.data)

    def _backward(g):
        return (g * out * (1.0 - out),)

    return record("sigmoid", (x,), out, _backward)


def embedding(table, ids):
    """Gathers rows of `table` [V, d] for integer `ids` of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(
            f"embedding: ids out of range for table of shape {list(table.shape)}"
        )

    def _backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (grad,)

    return record("embedding", (table,), table.data[ids], _backward)


def select(x, index, axis):
    """Picks a single position along `axis` (dropping that axis)."""

    def _backward(g):
        grad = np.zeros_like(x.data)
        slicer = [slice(None)] * x.ndim
        slicer[axis] = index
        grad[tuple(slicer)] = g
        return (grad,)

    return record("select", (x,), np.take(x.data, index, axis=axis), _backward)


def mask_replace(x, keep, replacement):
    """Keeps `x` where `keep` is true and uses `replacement` elsewhere.

    `keep` and `replacement` are constants broadcastable to `x`; gradients only
    flow through the kept entries.
    """
    keep = np.broadcast_to(np.asarray(keep, dtype=bool), x.shape)
    replacement = np.broadcast_to(np.asarray(replacement, dtype=DTYPE), x.shape)

    def _backward(g):
        return (np.where(keep, g, 0.0),)

    return record("mask_replace", (x,), np.where(keep, x.data, replacement), _backward)


def bce(probs, labels, eps=BCE_EPS):
    """Mean binary cross-entropy of probabilities against 0/1 labels.

    Probabilities are clamped to [eps, 1 - eps] before the logs; the clamp
    passes no gradient.
    """
    labels = np.asarray(labels, dtype=DTYPE).reshape(probs.shape)
    if probs.size == 0:
        raise DimensionError("bce: empty batch")
    p = np.clip(probs.data, eps, 1.0 - eps)
    losses = -(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))
    inside = (probs.data >= eps) & (probs.data <= 1.0 - eps)

    def _backward(g):
        local = (-labels / p + (1.0 - labels) / (1.0 - p)) / probs.size
        return (np.where(inside, g * local, 0.0),)

    return record("bce", (probs,), np.mean(losses), _backward)


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)
