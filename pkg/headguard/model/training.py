#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Mini-batch training with Adam (adaptive moments) on the mean BCE loss.
"""
import numpy as np

from headguard.autodiff import ops
from headguard.autodiff.tensor import Tape
from headguard.logger import logger
from headguard.model.encoder import DEFAULT_EVAL_BATCH, ClassifierModel
from headguard.model.metrics import accuracy, bce_loss, check_labels
from headguard.model.tokenizer import Vocabulary
from headguard.utils import fingerprint


class TrainingError(RuntimeError):
    pass


class TrainConfig:
    FIELDS = (
        "learning_rate",
        "epochs",
        "batch_size",
        "seed",
        "beta1",
        "beta2",
        "adam_eps",
    )

    def __init__(
        self,
        learning_rate=2e-3,
        epochs=10,
        batch_size=16,
        seed=0,
        beta1=0.9,
        beta2=0.999,
        adam_eps=1e-8,
    ):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.FIELDS)
        if unknown:
            raise TrainingError(f"Unknown train settings: {sorted(unknown)}")
        config = cls(**data)
        config.validate()
        return config

    def to_dict(self):
        return {field: getattr(self, field) for field in self.FIELDS}

    def fingerprint(self):
        return fingerprint(self.to_dict())

    def validate(self):
        if not self.learning_rate > 0:
            raise TrainingError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise TrainingError("epochs and batch_size must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise TrainingError("Adam betas must be in [0, 1)")
        if not self.adam_eps > 0:
            raise TrainingError("adam_eps must be > 0")


class Adam:
    def __init__(self, params, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self):
        self.steps += 1
        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        for name, param in self.params.items():
            if param.grad is None:
                continue
            g = param.grad
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            # parameters are rebound, never written in place
            param.data = param.data - self.learning_rate * m_hat / (
                np.sqrt(v_hat) + self.eps
            )


def evaluate(model, ids, labels, patch=None, batch_size=DEFAULT_EVAL_BATCH):
    """Mean BCE and accuracy of `model` over an id matrix."""
    probs = model.predict_proba(ids, patch=patch, batch_size=batch_size)
    return bce_loss(probs, labels), accuracy(probs, labels)


def train(config, corpus, hyper, vocab=None):
    """Trains a fresh model on `corpus`.

    The vocabulary is built from the corpus texts unless given. Returns the
    model and the per-epoch curve; epoch 0 is the untrained model.
    """
    hyper.validate()
    examples = list(corpus)
    if not examples:
        raise TrainingError("Cannot train on an empty corpus")
    labels = check_labels([example.label for example in examples])
    if len(np.unique(labels)) < 2:
        raise TrainingError(
            f"Training corpus holds a single class ({int(labels[0])}), both are required"
        )

    if vocab is None:
        vocab = Vocabulary.build([example.text for example in examples], config.vocab_size)
    model = ClassifierModel(config, vocab)
    ids = model.encode([example.text for example in examples])

    optimizer = Adam(
        model.params, hyper.learning_rate, hyper.beta1, hyper.beta2, hyper.adam_eps
    )
    rng = np.random.default_rng(hyper.seed)

    loss, acc = evaluate(model, ids, labels)
    history = [{"epoch": 0, "loss": loss, "accuracy": acc}]
    logger.info(f"Training {len(examples)} examples, initial loss {loss:.4f}")

    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(len(examples))
        for start in range(0, len(order), hyper.batch_size):
            batch = order[start : start + hyper.batch_size]
            model.zero_grad()
            with Tape() as tape:
                probs, _ = model.forward(ids[batch])
                tape.backward(ops.bce(probs, labels[batch]))
            optimizer.step()

        loss, acc = evaluate(model, ids, labels)
        history.append({"epoch": epoch, "loss": loss, "accuracy": acc})
        logger.info(f"Epoch {epoch}/{hyper.epochs}: loss {loss:.4f}, accuracy {acc:.4f}")

    model.zero_grad()
    return model, history
