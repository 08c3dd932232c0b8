#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import numpy as np

BCE_EPS = 1e-12
DEFAULT_THRESHOLD = 0.5


class LabelError(ValueError):
    pass


class ArgumentError(ValueError):
    pass


def check_labels(labels):
    labels = np.asarray(labels)
    bad = [i for i, y in enumerate(labels.reshape(-1).tolist()) if y not in (0, 1)]
    if bad:
        raise LabelError(
            f"Labels must be 0 or 1, got {labels.reshape(-1)[bad[0]]!r} at position {bad[0]}"
        )
    return labels.astype(np.float64)


def bce_loss(probs, labels, eps=BCE_EPS):
    """Mean binary cross-entropy -[y log(p) + (1 - y) log(1 - p)].

    Probabilities are clamped to [eps, 1 - eps] before taking logs, so the
    loss is finite for p in {0, 1}.
    """
    p = np.atleast_1d(np.asarray(probs, dtype=np.float64))
    y = np.atleast_1d(check_labels(labels))
    if p.shape != y.shape:
        raise ArgumentError(f"bce_loss: {p.size} probabilities for {y.size} labels")
    if p.size == 0:
        raise ArgumentError("bce_loss: empty input")
    p = np.clip(p, eps, 1.0 - eps)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def predictions(probs, threshold=DEFAULT_THRESHOLD):
    # a probability exactly at the threshold predicts the toxic class
    return (np.asarray(probs, dtype=np.float64) >= threshold).astype(np.int64)


def accuracy(probs, labels, threshold=DEFAULT_THRESHOLD):
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    labels = check_labels(labels).reshape(-1)
    if probs.size == 0:
        raise ArgumentError("accuracy: empty input")
    if probs.size != labels.size:
        raise ArgumentError(
            f"accuracy: {probs.size} probabilities for {labels.size} labels"
        )
    return float(np.mean(predictions(probs, threshold) == labels))
