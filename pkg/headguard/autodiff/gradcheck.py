#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Finite-difference gradient oracle.
"""
import numpy as np

from headguard.autodiff.tensor import DTYPE, ConfigurationError, Tape, Tensor
from headguard.logger import logger

DEFAULT_STEP = 1e-5
DEFAULT_FLOOR = 1e-6


def _scalar(value):
    if isinstance(value, Tensor):
        return value.item()
    return float(value)


def finite_diff_grad(f, x, h=DEFAULT_STEP):
    """Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate of `x`.

    `f` maps the tensor `x` to a scalar (Tensor or float). `x.data` is restored
    when the function returns.
    """
    if h <= 0:
        raise ConfigurationError(f"finite_diff_grad: h must be > 0, got {h}")

    base = x.data
    grad = np.zeros_like(base, dtype=DTYPE)
    try:
        for index in np.ndindex(base.shape):
            probe = base.copy()
            probe[index] = base[index] + h
            x.data = probe
            f_plus = _scalar(f(x))

            probe = base.copy()
            probe[index] = base[index] - h
            x.data = probe
            f_minus = _scalar(f(x))

            grad[index] = (f_plus - f_minus) / (2.0 * h)
    finally:
        x.data = base
    return Tensor(grad)


def relative_error(analytic, numeric, floor=DEFAULT_FLOOR):
    """Max over entries of |a - n| / max(|a| + |n|, floor).

    Entries whose gradients are both below `floor` are compared in absolute
    terms (scaled by 1 / floor).
    """
    analytic = np.asarray(analytic, dtype=DTYPE)
    numeric = np.asarray(numeric, dtype=DTYPE)
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def gradcheck(loss_fn, tensors, h=DEFAULT_STEP, floor=DEFAULT_FLOOR):
    """Compares tape gradients of `loss_fn()` with central differences.

    Args:
        loss_fn (callable): builds a scalar loss Tensor from the current values of `tensors`
        tensors (dict): name -> Tensor with requires_grad
        h (float): finite-difference step
        floor (float): see `relative_error`

    Returns:
        dict: name -> max relative error
    """
    for tensor in tensors.values():
        tensor.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)

    errors = {}
    for name, tensor in tensors.items():
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        numeric = finite_diff_grad(lambda _: loss_fn(), tensor, h=h)
        errors[name] = relative_error(analytic, numeric.data, floor=floor)
        logger.debug(f"gradcheck {name}: max relative error {errors[name]:.3e}")
    return errors
