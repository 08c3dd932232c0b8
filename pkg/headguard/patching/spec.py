#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import re
from enum import Enum
from typing import NamedTuple

import numpy as np

HEAD_RE = re.compile(r"^L(\d+)H(\d+)$", re.IGNORECASE)


class PatchIndexError(IndexError):
    pass


class PatchSpecError(ValueError):
    pass


class HeadIndex(NamedTuple):
    layer: int
    head: int

    def __str__(self):
        return f"L{self.layer}H{self.head}"

    @classmethod
    def parse(cls, value):
        """Accepts `HeadIndex`, `(layer, head)` pairs and `"L0H4"` strings."""
        if isinstance(value, HeadIndex):
            return value
        if isinstance(value, str):
            match = HEAD_RE.match(value.strip())
            if match is None:
                raise PatchSpecError(f"'{value}' is not a head, expected e.g. 'L0H4'")
            return cls(int(match.group(1)), int(match.group(2)))
        try:
            layer, head = value
        except (TypeError, ValueError):
            raise PatchSpecError(f"{value!r} is not a (layer, head) pair")
        return cls(int(layer), int(head))

    def check(self, num_layers, num_heads):
        if not (0 <= self.layer < num_layers and 0 <= self.head < num_heads):
            raise PatchIndexError(
                f"Head {self} is outside the {num_layers}x{num_heads} model"
            )


def all_heads(num_layers, num_heads):
    """Every head in layer-major, head-minor order."""
    return [HeadIndex(layer, head) for layer in range(num_layers) for head in range(num_heads)]


class AblationMode(Enum):
    ZERO = "zero"
    MEAN = "mean"

    @classmethod
    def from_string(cls, value):
        if isinstance(value, AblationMode):
            return value
        match str(value).casefold():
            case "zero":
                return cls.ZERO
            case "mean":
                return cls.MEAN
            case _:
                raise PatchSpecError(f"'{value}' is not an ablation mode, expected zero or mean")


class MeanActivations:
    """Per-head mean output vectors, keyed by HeadIndex."""

    def __init__(self, means, n_positions):
        self.means = {HeadIndex.parse(head): np.asarray(v, dtype=np.float64) for head, v in means.items()}
        self.n_positions = n_positions

    def __contains__(self, head):
        return HeadIndex.parse(head) in self.means

    def __getitem__(self, head):
        return self.means[HeadIndex.parse(head)]

    def __len__(self):
        return len(self.means)

    def to_dict(self):
        return {
            "n_positions": self.n_positions,
            "means": {str(head): self.means[head].tolist() for head in sorted(self.means)},
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["means"], data["n_positions"])


class PatchSpec:
    """Heads to ablate and how.

    An empty head set is the identity patch. Mean ablation needs a mean vector
    for every listed head; zero ablation takes none.
    """

    def __init__(self, heads=(), mode=AblationMode.ZERO, mean_stats=None):
        self.heads = tuple(sorted({HeadIndex.parse(head) for head in heads}))
        self.mode = AblationMode.from_string(mode)
        self.mean_stats = mean_stats
        if self.mode is AblationMode.MEAN:
            if mean_stats is None:
                raise PatchSpecError("Mean ablation requires mean activation stats")
            missing = [str(head) for head in self.heads if head not in mean_stats]
            if missing:
                raise PatchSpecError(f"No mean activation for head(s) {missing}")
        elif mean_stats is not None:
            raise PatchSpecError("Zero ablation does not take mean activation stats")
        self._by_layer = {}
        for head in self.heads:
            self._by_layer.setdefault(head.layer, []).append(head.head)

    @classmethod
    def single(cls, head, mode=AblationMode.ZERO, mean_stats=None):
        return cls([head], mode, mean_stats)

    def __len__(self):
        return len(self.heads)

    def __str__(self):
        return f"{self.mode.value}[{','.join(map(str, self.heads))}]"

    @property
    def is_identity(self):
        return not self.heads

    def check_bounds(self, num_layers, num_heads):
        for head in self.heads:
            head.check(num_layers, num_heads)

    def heads_in_layer(self, layer):
        return tuple(self._by_layer.get(layer, ()))

    def replacement(self, layer, head, head_dim):
        if self.mode is AblationMode.ZERO:
            return np.zeros(head_dim)
        vector = self.mean_stats[HeadIndex(layer, head)]
        if vector.shape != (head_dim,):
            raise PatchSpecError(
                f"Mean activation for L{layer}H{head} has shape {vector.shape}, expected ({head_dim},)"
            )
        return vector

    def to_dict(self):
        return {"heads": [str(head) for head in self.heads], "mode": self.mode.value}
