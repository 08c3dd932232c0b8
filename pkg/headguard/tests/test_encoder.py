#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import math

import numpy as np
import pytest

from headguard.autodiff.ops import sigmoid_array
from headguard.autodiff.tensor import Tensor
from headguard.model.encoder import (
    LN_EPS,
    ClassifierModel,
    ModelConfig,
    ModelConfigError,
    parameter_shapes,
)
from headguard.model.metrics import ArgumentError
from headguard.model.tokenizer import CLS_ID, Vocabulary
from headguard.patching.spec import AblationMode, MeanActivations, PatchIndexError, PatchSpec


def _ids(model, corpus, n=12):
    return model.encode(corpus.texts[:n])


def _layer_norm(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * gain + bias


def _gelu(x):
    return 0.5 * x * (1 + np.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)))


def _attention_free_forward(model, ids):
    """Forward pass that skips attention; what zero-ablating every head leaves."""
    p = {name: t.data for name, t in model.params.items()}
    seq = ids.shape[1]
    hidden = p["token_embedding"][ids] + p["position_embedding"][np.arange(seq)]
    hidden = _layer_norm(hidden, p["embed_ln_gain"], p["embed_ln_bias"])
    for layer in range(model.config.num_layers):

        def q(name):
            return p[f"layers.{layer}.{name}"]

        hidden = _layer_norm(hidden + q("bo"), q("ln1_gain"), q("ln1_bias"))
        ff = _gelu(hidden @ q("w1") + q("b1")) @ q("w2") + q("b2")
        hidden = _layer_norm(hidden + ff, q("ln2_gain"), q("ln2_bias"))
    logits = hidden[:, CLS_ID] @ p["classifier_weight"] + p["classifier_bias"]
    return sigmoid_array(logits.reshape(-1))


def test_model_config_validation():
    ModelConfig().validate()
    with pytest.raises(ModelConfigError):
        ModelConfig(d_model=30, num_heads=4).validate()
    with pytest.raises(ModelConfigError):
        ModelConfig(num_layers=0).validate()
    with pytest.raises(ModelConfigError):
        ModelConfig(num_layers="four").validate()
    with pytest.raises(ModelConfigError):
        ModelConfig.from_dict({"depth": 3})


def test_model_config_fingerprint():
    assert ModelConfig().fingerprint() == ModelConfig().fingerprint()
    assert ModelConfig().fingerprint() != ModelConfig(seed=1).fingerprint()
    assert ModelConfig(num_heads=8).head_dim == 8


def test_vocabulary_size_must_match(tiny_config):
    with pytest.raises(ModelConfigError):
        ClassifierModel(tiny_config, Vocabulary.build(["a b c"], 10))


def test_init_is_seeded(tiny_config, trained_model):
    vocab = trained_model.vocab
    a = ClassifierModel(tiny_config, vocab)
    b = ClassifierModel(tiny_config, vocab)
    for name, _ in parameter_shapes(tiny_config):
        np.testing.assert_array_equal(a[name].data, b[name].data)


def test_probabilities(trained_model, toy_corpus):
    ids = trained_model.encode(toy_corpus.texts)
    probs, _ = trained_model.forward(ids)
    assert probs.shape == (len(toy_corpus),)
    assert np.all((probs.data > 0) & (probs.data < 1))
    predicted = set((probs.data >= 0.5).astype(int).tolist())
    assert predicted == {0, 1}


def test_cache_shape(trained_model, toy_corpus, tiny_config):
    ids = _ids(trained_model, toy_corpus)
    _, cache = trained_model.forward(ids)
    assert len(cache) == tiny_config.num_layers * tiny_config.num_heads
    assert cache.head(1, 1).shape == (len(ids), ids.shape[1], tiny_config.head_dim)
    assert len(cache.resid_pre) == tiny_config.num_layers
    assert cache.pooled.shape == (len(ids), tiny_config.d_model)


def test_empty_patch_is_identity(trained_model, toy_corpus):
    ids = _ids(trained_model, toy_corpus)
    plain, _ = trained_model.forward(ids)
    patched, _ = trained_model.forward(ids, patch=PatchSpec())
    np.testing.assert_array_equal(plain.data, patched.data)


def test_patch_locality(trained_model, toy_corpus):
    ids = _ids(trained_model, toy_corpus)
    base_probs, base = trained_model.forward(ids)
    probs, cache = trained_model.forward(ids, patch=PatchSpec(["L1H0"]))

    np.testing.assert_array_equal(cache.resid_pre[0], base.resid_pre[0])
    np.testing.assert_array_equal(cache.resid_pre[1], base.resid_pre[1])
    for head in range(2):
        np.testing.assert_array_equal(cache.head(0, head), base.head(0, head))
    np.testing.assert_array_equal(cache.head(1, 1), base.head(1, 1))
    assert np.all(cache.head(1, 0) == 0)
    assert not np.array_equal(probs.data, base_probs.data)


def test_zero_ablation_matches_value_surgery(trained_model, toy_corpus, tiny_config):
    ids = _ids(trained_model, toy_corpus)
    layer, head = 0, 1
    patched, _ = trained_model.forward(ids, patch=PatchSpec([(layer, head)]))

    surgered = trained_model.copy()
    dh = tiny_config.head_dim
    cols = slice(head * dh, (head + 1) * dh)
    surgered.layer_param(layer, "wv").data[:, cols] = 0.0
    surgered.layer_param(layer, "bv").data[cols] = 0.0
    reference, _ = surgered.forward(ids)

    np.testing.assert_allclose(patched.data, reference.data, rtol=0, atol=1e-12)


def test_ablating_every_head_leaves_the_residual_path(trained_model, toy_corpus):
    ids = _ids(trained_model, toy_corpus)
    everything = PatchSpec([(layer, head) for layer in range(2) for head in range(2)])
    probs, _ = trained_model.forward(ids, patch=everything)
    np.testing.assert_allclose(
        probs.data, _attention_free_forward(trained_model, ids), rtol=0, atol=1e-12
    )


def test_mean_patch_uses_the_stored_vector(trained_model, toy_corpus, tiny_config):
    ids = _ids(trained_model, toy_corpus)
    vector = np.arange(tiny_config.head_dim, dtype=float)
    stats = MeanActivations({"L0H0": vector}, n_positions=1)
    _, cache = trained_model.forward(
        ids, patch=PatchSpec(["L0H0"], AblationMode.MEAN, stats)
    )
    assert np.all(cache.head(0, 0) == vector)


def test_patch_out_of_bounds(trained_model, toy_corpus):
    ids = _ids(trained_model, toy_corpus)
    with pytest.raises(PatchIndexError):
        trained_model.forward(ids, patch=PatchSpec(["L2H0"]))
    with pytest.raises(PatchIndexError):
        trained_model.forward(ids, patch=PatchSpec(["L0H2"]))


def test_padding_positions_are_masked(trained_model):
    seq = trained_model.tokenize("all women friends are kind")
    ids = seq.ids[None, :]
    embeddings = trained_model.embed_tokens(ids)
    probs, _ = trained_model.forward(ids, input_embeddings=embeddings)

    noisy = embeddings.data.copy()
    noisy[0, seq.length :] += np.random.default_rng(0).normal(size=noisy[0, seq.length :].shape)
    again, _ = trained_model.forward(ids, input_embeddings=Tensor(noisy))
    np.testing.assert_allclose(probs.data, again.data, rtol=0, atol=1e-12)


def test_bad_ids(trained_model, tiny_config):
    with pytest.raises(ArgumentError):
        trained_model.forward(np.zeros(4, dtype=np.int64))
    with pytest.raises(ArgumentError):
        trained_model.forward(np.zeros((1, tiny_config.max_seq_len + 1), dtype=np.int64))


def test_predict_proba_chunks(trained_model, toy_corpus):
    ids = trained_model.encode(toy_corpus.texts[:10])
    whole = trained_model.predict_proba(ids, batch_size=64)
    chunked = trained_model.predict_proba(ids, batch_size=3)
    np.testing.assert_allclose(whole, chunked, rtol=0, atol=1e-12)
