#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Dense tensors and the reverse-mode tape.

A `Tape` records every primitive executed while it is active. `Tape.backward`
replays the records in exact reverse order and accumulates gradients into every
`requires_grad` tensor reachable from the loss.

    with Tape() as tape:
        loss = ops.sum(ops.mul(x, x))
        tape.backward(loss)

Without an active tape, primitives compute values only and record nothing,
which is what inference and the parallel sweeps rely on.
"""
import contextvars

import numpy as np

DTYPE = np.float64

_ACTIVE_TAPE = contextvars.ContextVar("headguard_active_tape", default=None)


class DimensionError(ValueError):
    pass


class TapeStateError(RuntimeError):
    pass


class ConfigurationError(ValueError):
    pass


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data.copy()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self):
        req = ", requires_grad=True" if self.requires_grad else ""
        name = f", name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{req}{name})"


class TapeEntry:
    __slots__ = ("name", "inputs", "output", "backward")

    def __init__(self, name, inputs, output, backward):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of primitive operations.

    A tape is confined to the execution context that entered it.
    """

    def __init__(self):
        self.entries = []
        self._token = None

    def __enter__(self):
        if self._token is not None:
            raise TapeStateError("Tape is already active")
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self):
        return len(self.entries)

    def reset(self):
        self.entries = []

    def record(self, name, inputs, output, backward):
        self.entries.append(TapeEntry(name, inputs, output, backward))

    def backward(self, loss):
        if not isinstance(loss, Tensor) or loss.size != 1:
            shape = getattr(loss, "shape", None)
            raise DimensionError(f"backward() needs a scalar loss, got shape {shape}")

        adjoints = {id(loss): np.ones_like(loss.data)}
        reached = {id(loss): loss}

        for entry in reversed(self.entries):
            upstream = adjoints.get(id(entry.output))
            if upstream is None:
                continue
            grads = entry.backward(upstream)
            for tensor, grad in zip(entry.inputs, grads):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                reached[key] = tensor
                if key in adjoints:
                    adjoints[key] = adjoints[key] + grad
                else:
                    adjoints[key] = np.array(grad, dtype=DTYPE)

        for key, tensor in reached.items():
            if not tensor.requires_grad:
                continue
            if tensor.grad is None:
                tensor.grad = np.array(adjoints[key], dtype=DTYPE)
            else:
                tensor.grad = tensor.grad + adjoints[key]


def current_tape():
    return _ACTIVE_TAPE.get()


def backward(loss):
    """Backpropagates `loss` over the active tape.

    Repeated calls without resetting gradients accumulate.
    """
    tape = current_tape()
    if tape is None:
        raise TapeStateError("backward() called without an active tape")
    tape.backward(loss)


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def record(name, inputs, data, backward_fn):
    """Wraps `data` in a Tensor, recording it on the active tape when needed."""
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(name, inputs, out, backward_fn)
    return out
