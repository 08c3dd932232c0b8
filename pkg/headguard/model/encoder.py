#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Post-LN transformer encoder with a single-logit toxicity head.

Each layer computes, per head, z = softmax(QK^T / sqrt(d_head) + pad_mask) V.
The head outputs `z` are the patch point: a patch replaces them after the
attention-weighted value mixing and before the shared output projection, which
removes exactly that head's additive contribution. The classifier reads the CLS
position of the last layer.
"""
import math

import numpy as np

from headguard.autodiff import ops
from headguard.autodiff.tensor import Tensor
from headguard.model.metrics import ArgumentError
from headguard.model.tokenizer import CLS_ID, PAD_ID, encode_batch, tokenize
from headguard.utils import fingerprint

LN_EPS = 1e-5
MASK_VALUE = -1e9
EMBEDDING_STD = 0.1
DEFAULT_EVAL_BATCH = 64

LAYER_PARAMETERS = (
    "wq",
    "bq",
    "wk",
    "bk",
    "wv",
    "bv",
    "wo",
    "bo",
    "ln1_gain",
    "ln1_bias",
    "w1",
    "b1",
    "w2",
    "b2",
    "ln2_gain",
    "ln2_bias",
)


class ModelConfigError(ValueError):
    pass


class ModelConfig:
    FIELDS = (
        "num_layers",
        "num_heads",
        "d_model",
        "d_ff",
        "vocab_size",
        "max_seq_len",
        "seed",
    )

    def __init__(
        self,
        num_layers=4,
        num_heads=4,
        d_model=64,
        d_ff=128,
        vocab_size=256,
        max_seq_len=32,
        seed=0,
    ):
        self.num_layers = num_layers
        self.num_heads = num_heads
        self.d_model = d_model
        self.d_ff = d_ff
        self.vocab_size = vocab_size
        self.max_seq_len = max_seq_len
        self.seed = seed

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.FIELDS)
        if unknown:
            raise ModelConfigError(f"Unknown model settings: {sorted(unknown)}")
        config = cls(**data)
        config.validate()
        return config

    def to_dict(self):
        return {field: getattr(self, field) for field in self.FIELDS}

    def fingerprint(self):
        return fingerprint(self.to_dict())

    @property
    def head_dim(self):
        return self.d_model // self.num_heads

    def validate(self):
        for field in self.FIELDS:
            value = getattr(self, field)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ModelConfigError(f"{field} must be an integer, got {value!r}")
            if field == "seed":
                if value < 0:
                    raise ModelConfigError(f"seed must be >= 0, got {value}")
            elif value < 1:
                raise ModelConfigError(f"{field} must be >= 1, got {value}")
        if self.d_model % self.num_heads != 0:
            raise ModelConfigError(
                f"d_model ({self.d_model}) must be divisible by num_heads ({self.num_heads})"
            )
        if self.vocab_size < 4:
            raise ModelConfigError("vocab_size must leave room for at least one word")
        if self.max_seq_len < 2:
            raise ModelConfigError("max_seq_len must be >= 2")

    def __eq__(self, other):
        return isinstance(other, ModelConfig) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"ModelConfig({self.to_dict()})"


def parameter_shapes(config):
    """(name, shape) of every parameter, in checkpoint order."""
    d, f = config.d_model, config.d_ff
    shapes = [
        ("token_embedding", (config.vocab_size, d)),
        ("position_embedding", (config.max_seq_len, d)),
        ("embed_ln_gain", (d,)),
        ("embed_ln_bias", (d,)),
    ]
    per_layer = {
        "wq": (d, d),
        "bq": (d,),
        "wk": (d, d),
        "bk": (d,),
        "wv": (d, d),
        "bv": (d,),
        "wo": (d, d),
        "bo": (d,),
        "ln1_gain": (d,),
        "ln1_bias": (d,),
        "w1": (d, f),
        "b1": (f,),
        "w2": (f, d),
        "b2": (d,),
        "ln2_gain": (d,),
        "ln2_bias": (d,),
    }
    for layer in range(config.num_layers):
        for name in LAYER_PARAMETERS:
            shapes.append((f"layers.{layer}.{name}", per_layer[name]))
    shapes.append(("classifier_weight", (d, 1)))
    shapes.append(("classifier_bias", (1,)))
    return shapes


def init_parameters(config):
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in parameter_shapes(config):
        short = name.rsplit(".", 1)[-1]
        if short.endswith("_gain"):
            data = np.ones(shape)
        elif len(shape) == 1:
            data = np.zeros(shape)
        elif short.endswith("_embedding"):
            data = rng.normal(0.0, EMBEDDING_STD, size=shape)
        else:
            data = rng.normal(0.0, 1.0 / math.sqrt(shape[0]), size=shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


class ActivationCache:
    """Activations of one forward pass.

    `head_outputs[(layer, head)]` is the [batch, seq, d_head] output of that
    head as used downstream: the original value for unpatched heads and the
    replacement for patched ones.
    """

    def __init__(self):
        self.head_outputs = {}
        self.resid_pre = []
        self.final_hidden = None
        self.pooled = None
        self.mask = None

    def __len__(self):
        return len(self.head_outputs)

    def head(self, layer, head):
        return self.head_outputs[(layer, head)]


class ClassifierModel:
    def __init__(self, config, vocab, params=None):
        config.validate()
        if len(vocab) != config.vocab_size:
            raise ModelConfigError(
                f"Vocabulary has {len(vocab)} tokens, config expects {config.vocab_size}"
            )
        self.config = config
        self.vocab = vocab
        self.params = params if params is not None else init_parameters(config)
        expected = dict(parameter_shapes(config))
        for name, shape in expected.items():
            if name not in self.params or self.params[name].shape != shape:
                raise ModelConfigError(f"Parameter {name} is missing or not {shape}")

    def __getitem__(self, name):
        return self.params[name]

    def layer_param(self, layer, name):
        return self.params[f"layers.{layer}.{name}"]

    def parameters(self):
        return [self.params[name] for name, _ in parameter_shapes(self.config)]

    def zero_grad(self):
        for param in self.params.values():
            param.zero_grad()

    def copy(self):
        params = {
            name: Tensor(p.data.copy(), requires_grad=True, name=name)
            for name, p in self.params.items()
        }
        return ClassifierModel(self.config, self.vocab, params)

    @property
    def embedding_table(self):
        return self.params["token_embedding"].data

    def tokenize(self, text):
        return tokenize(text, self.vocab, self.config.max_seq_len)

    def encode(self, texts):
        return encode_batch([self.tokenize(text) for text in texts])

    def embed_tokens(self, ids):
        return ops.embedding(self.params["token_embedding"], ids)

    def _check_ids(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2:
            raise ArgumentError(f"Expected a [batch, seq] id matrix, got shape {ids.shape}")
        if ids.shape[1] > self.config.max_seq_len:
            raise ArgumentError(
                f"Sequence length {ids.shape[1]} exceeds max_seq_len {self.config.max_seq_len}"
            )
        return ids

    def forward(self, ids, patch=None, input_embeddings=None):
        """Runs the encoder on an [B, T] id matrix.

        Args:
            ids: token ids; PAD positions are masked out of attention
            patch: optional object with `check_bounds(L, H)`, `heads_in_layer(layer)`
                and `replacement(layer, head, d_head)`; see `patching.spec.PatchSpec`
            input_embeddings: optional [B, T, d_model] Tensor used instead of the
                token embedding lookup (the attack differentiates through it)

        Returns:
            (Tensor of [B] toxic-class probabilities, ActivationCache)
        """
        ids = self._check_ids(ids)
        config = self.config
        batch, seq = ids.shape
        if patch is not None:
            patch.check_bounds(config.num_layers, config.num_heads)

        mask = ids != PAD_ID
        cache = ActivationCache()
        cache.mask = mask

        tokens = input_embeddings if input_embeddings is not None else self.embed_tokens(ids)
        positions = ops.embedding(self.params["position_embedding"], np.arange(seq))
        hidden = ops.layer_norm(
            ops.add(tokens, positions),
            self.params["embed_ln_gain"],
            self.params["embed_ln_bias"],
            LN_EPS,
        )

        attn_bias = np.where(mask, 0.0, MASK_VALUE)[:, None, None, :]
        for layer in range(config.num_layers):
            cache.resid_pre.append(hidden.data)
            hidden = self._layer(layer, hidden, attn_bias, patch, cache, batch, seq)

        cache.final_hidden = hidden.data
        pooled = ops.select(hidden, CLS_ID, axis=1)
        cache.pooled = pooled.data
        logits = ops.add(
            ops.matmul(pooled, self.params["classifier_weight"]),
            self.params["classifier_bias"],
        )
        probs = ops.sigmoid(ops.reshape(logits, (batch,)))
        return probs, cache

    def _split_heads(self, x, batch, seq):
        config = self.config
        x = ops.reshape(x, (batch, seq, config.num_heads, config.head_dim))
        return ops.transpose(x, (0, 2, 1, 3))

    def _layer(self, layer, hidden, attn_bias, patch, cache, batch, seq):
        config = self.config

        def p(name):
            return self.layer_param(layer, name)

        q = self._split_heads(ops.add(ops.matmul(hidden, p("wq")), p("bq")), batch, seq)
        k = self._split_heads(ops.add(ops.matmul(hidden, p("wk")), p("bk")), batch, seq)
        v = self._split_heads(ops.add(ops.matmul(hidden, p("wv")), p("bv")), batch, seq)

        scores = ops.scale(
            ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(config.head_dim)
        )
        weights = ops.softmax_lastdim(ops.add(scores, attn_bias))
        z = ops.matmul(weights, v)

        patched = patch.heads_in_layer(layer) if patch is not None else ()
        if patched:
            keep = np.ones((1, config.num_heads, 1, 1), dtype=bool)
            replacement = np.zeros((1, config.num_heads, 1, config.head_dim))
            for head in patched:
                keep[0, head] = False
                replacement[0, head, 0] = patch.replacement(layer, head, config.head_dim)
            z = ops.mask_replace(z, keep, replacement)

        for head in range(config.num_heads):
            cache.head_outputs[(layer, head)] = z.data[:, head]

        merged = ops.reshape(ops.transpose(z, (0, 2, 1, 3)), (batch, seq, config.d_model))
        attn_out = ops.add(ops.matmul(merged, p("wo")), p("bo"))
        hidden = ops.layer_norm(
            ops.add(hidden, attn_out), p("ln1_gain"), p("ln1_bias"), LN_EPS
        )
        ff = ops.gelu(ops.add(ops.matmul(hidden, p("w1")), p("b1")))
        ff = ops.add(ops.matmul(ff, p("w2")), p("b2"))
        return ops.layer_norm(ops.add(hidden, ff), p("ln2_gain"), p("ln2_bias"), LN_EPS)

    def predict_proba(self, ids, patch=None, batch_size=DEFAULT_EVAL_BATCH):
        """Probabilities for every row of `ids`, evaluated in fixed-size chunks."""
        ids = self._check_ids(ids)
        chunks = [
            self.forward(ids[start : start + batch_size], patch=patch)[0].data
            for start in range(0, len(ids), batch_size)
        ]
        return np.concatenate(chunks) if chunks else np.zeros(0)


def config_fingerprint(model):
    return fingerprint(
        {"config": model.config.to_dict(), "vocabulary": model.vocab.to_list()}
    )
