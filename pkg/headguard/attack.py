#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
PGD attack in embedding space.

Each token row of the input embeddings takes gradient-ascent steps on the BCE
loss and is projected back into an epsilon-ball around its starting embedding.
Every `reproject_every` iterations the rows are snapped to their nearest
vocabulary tokens (cosine similarity) and re-embedded, so the attack stays in
realizable text. CLS and PAD rows never move, and only the `max_substitutions`
positions with the largest loss gradient move at all.

Only examples the model classifies correctly are attacked by default; a success
is a flipped prediction. Successes whose sentence similarity with the original
reaches the threshold make up the adversarial corpus. Similarity is measured by
an encoder that does not see the classifier's decision unless the `model`
encoder is asked for.
"""
from collections import Counter
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from headguard.autodiff import ops
from headguard.autodiff.tensor import Tape, Tensor
from headguard.corpus.base import Corpus
from headguard.logger import logger
from headguard.model.metrics import predictions
from headguard.model.tokenizer import TokenSequence, join_words, split_words
from headguard.utils import ConcurrentTasks, derive_seed, fingerprint, run_blocking

NORMS = ("l2", "linf")
SPARSITY_FRACTION = 0.1
SIMILARITY_ENCODERS = {
    "bow": "bag-of-words count vectors over lowercased words",
    "model": "attacked-model mean-pooled final hidden states",
}
GENERATION_METHOD = "pgd"


class AttackConfigError(ValueError):
    pass


class AttackConfig:
    """PGD settings.

    `epsilon` and `step_size` may be left to None, in which case they are
    derived from the model: epsilon = relative_epsilon x median token embedding
    norm and step_size = relative_step x epsilon.
    """

    FIELDS = (
        "norm",
        "epsilon",
        "relative_epsilon",
        "step_size",
        "relative_step",
        "iterations",
        "similarity_threshold",
        "similarity_encoder",
        "reproject_every",
        "max_substitutions",
        "seed",
        "random_start",
        "skip_misclassified",
    )

    def __init__(
        self,
        norm="l2",
        epsilon=None,
        relative_epsilon=2.0,
        step_size=None,
        relative_step=0.25,
        iterations=20,
        similarity_threshold=0.95,
        similarity_encoder="bow",
        reproject_every=5,
        max_substitutions=1,
        seed=0,
        random_start=False,
        skip_misclassified=True,
    ):
        self.norm = norm
        self.epsilon = epsilon
        self.relative_epsilon = relative_epsilon
        self.step_size = step_size
        self.relative_step = relative_step
        self.iterations = iterations
        self.similarity_threshold = similarity_threshold
        self.similarity_encoder = similarity_encoder
        self.reproject_every = reproject_every
        self.max_substitutions = max_substitutions
        self.seed = seed
        self.random_start = random_start
        self.skip_misclassified = skip_misclassified

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.FIELDS)
        if unknown:
            raise AttackConfigError(f"Unknown attack settings: {sorted(unknown)}")
        config = cls(**data)
        config.validate()
        return config

    def to_dict(self):
        return {field: getattr(self, field) for field in self.FIELDS}

    def fingerprint(self):
        return fingerprint(self.to_dict())

    def validate(self):
        if self.norm not in NORMS:
            raise AttackConfigError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.epsilon is not None and self.epsilon < 0:
            raise AttackConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.relative_epsilon > 0:
            raise AttackConfigError("relative_epsilon must be > 0")
        if self.step_size is not None and not self.step_size > 0:
            raise AttackConfigError(f"step_size must be > 0, got {self.step_size}")
        if not 0 < self.relative_step <= 1:
            raise AttackConfigError("relative_step must be in (0, 1]")
        if (
            self.epsilon is not None
            and self.step_size is not None
            and self.epsilon > 0
            and self.step_size > self.epsilon
        ):
            raise AttackConfigError(
                f"step_size ({self.step_size}) must not exceed epsilon ({self.epsilon})"
            )
        if self.iterations < 1 or self.reproject_every < 1:
            raise AttackConfigError("iterations and reproject_every must be >= 1")
        if not 0 < self.similarity_threshold <= 1:
            raise AttackConfigError(
                f"similarity_threshold must be in (0, 1], got {self.similarity_threshold}"
            )
        if self.similarity_encoder not in SIMILARITY_ENCODERS:
            raise AttackConfigError(
                f"similarity_encoder must be one of {list(SIMILARITY_ENCODERS)}, "
                f"got {self.similarity_encoder!r}"
            )
        if self.max_substitutions < 1:
            raise AttackConfigError(
                f"max_substitutions must be >= 1, got {self.max_substitutions}"
            )

    def radius(self, model):
        """Concrete (epsilon, step_size) for `model`."""
        epsilon = self.epsilon
        if epsilon is None:
            table = model.embedding_table[model.vocab.candidate_ids]
            epsilon = self.relative_epsilon * float(np.median(np.linalg.norm(table, axis=1)))
        step_size = self.step_size
        if step_size is None:
            step_size = self.relative_step * epsilon
        return epsilon, step_size


class AdversarialExample:
    def __init__(
        self,
        original_id,
        original_text,
        adversarial_text,
        label,
        original_prob,
        adversarial_prob,
        similarity,
        substituted_positions,
        groups=(),
        provenance="human",
    ):
        self.original_id = original_id
        self.original_text = original_text
        self.adversarial_text = adversarial_text
        self.label = label
        self.original_prob = float(original_prob)
        self.adversarial_prob = float(adversarial_prob)
        self.similarity = float(similarity)
        self.substituted_positions = list(substituted_positions)
        self.groups = tuple(groups)
        self.provenance = provenance

    @property
    def success(self):
        return bool(predictions(self.original_prob) != predictions(self.adversarial_prob))

    def to_dict(self):
        return {
            "original_id": self.original_id,
            "original_text": self.original_text,
            "adversarial_text": self.adversarial_text,
            "label": self.label,
            "original_prob": self.original_prob,
            "adversarial_prob": self.adversarial_prob,
            "success": self.success,
            "similarity": self.similarity,
            "substituted_positions": self.substituted_positions,
        }

    def to_example(self, source):
        """The corpus entry for this attack; label and groups come from `source`."""
        return source.replace(
            id=f"{self.original_id}:adv",
            text=self.adversarial_text,
            generation_method=GENERATION_METHOD,
            metadata={
                "original_id": self.original_id,
                "similarity": self.similarity,
                "substituted_positions": self.substituted_positions,
            },
        )


def _frozen(model):
    """A copy of `model` whose parameters record no gradients."""
    if not any(p.requires_grad for p in model.params.values()):
        return model
    frozen = model.copy()
    for param in frozen.params.values():
        param.requires_grad = False
    return frozen


def _loss_gradient(model, ids, embeddings, label, loss_scale=1.0):
    inputs = Tensor(embeddings[None], requires_grad=True)
    with Tape() as tape:
        probs, _ = model.forward(ids[None], input_embeddings=inputs)
        loss = ops.bce(probs, [label])
        if loss_scale != 1.0:
            loss = ops.scale(loss, loss_scale)
        tape.backward(loss)
    return inputs.grad[0]


def embedding_gradient(model, sequence, label, loss_scale=1.0):
    """d(BCE loss) / d(input embeddings) for one sequence, PAD rows zeroed."""
    model = _frozen(model)
    embeddings = model.embedding_table[sequence.ids]
    grad = _loss_gradient(model, sequence.ids, embeddings, label, loss_scale)
    grad[~sequence.mask] = 0.0
    return Tensor(grad)


def project_to_ball(delta, epsilon, norm):
    if norm == "linf":
        return np.clip(delta, -epsilon, epsilon)
    norms = np.linalg.norm(delta, axis=-1, keepdims=True)
    factor = np.where(norms > epsilon, epsilon / np.maximum(norms, 1e-300), 1.0)
    return delta * factor


def _random_start(rng, shape, epsilon, norm):
    if norm == "linf":
        return rng.uniform(-epsilon, epsilon, size=shape)
    direction = rng.normal(size=shape)
    direction /= np.maximum(np.linalg.norm(direction, axis=-1, keepdims=True), 1e-300)
    radius = epsilon * rng.uniform(size=(shape[0], 1)) ** (1.0 / shape[1])
    return direction * radius


def movable_positions(sequence):
    movable = sequence.mask.copy()
    movable[0] = False
    return movable


def rank_positions(model, sequence, label, count):
    """Mask of the `count` movable positions with the largest gradient row norm.

    Ties go to the earlier position.
    """
    movable = movable_positions(sequence)
    norms = np.linalg.norm(embedding_gradient(model, sequence, label).data, axis=1)
    norms[~movable] = -np.inf
    order = np.argsort(-norms, kind="stable")[: min(count, int(movable.sum()))]
    chosen = np.zeros_like(movable)
    chosen[order] = True
    return chosen


def pgd_perturb(
    embeddings,
    model,
    label,
    config,
    sequence,
    iterations=None,
    rng=None,
    trace=None,
    positions=None,
):
    """Runs projected gradient ascent on the loss w.r.t. `embeddings` [T, d].

    Args:
        sequence (TokenSequence): the ids behind `embeddings`; its mask decides
            which rows may move
        iterations (int): overrides `config.iterations`
        rng: generator for the random start
        trace (callable): called as trace(iteration, delta) after every step
        positions (ndarray): boolean [T] mask further restricting the rows
            that move, all movable rows when None

    Returns:
        ndarray: the perturbed embeddings
    """
    origin = np.array(embeddings.data if isinstance(embeddings, Tensor) else embeddings)
    epsilon, step_size = config.radius(model)
    iterations = config.iterations if iterations is None else iterations
    delta = np.zeros_like(origin)
    if epsilon == 0:
        return origin

    model = _frozen(model)
    movable = movable_positions(sequence)
    if positions is not None:
        movable &= np.asarray(positions, dtype=bool)
    if config.random_start:
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        delta = _random_start(rng, origin.shape, epsilon, config.norm)
        delta[~movable] = 0.0

    for iteration in range(iterations):
        grad = _loss_gradient(model, sequence.ids, origin + delta, label)
        grad[~movable] = 0.0
        if not np.any(grad):
            logger.debug(f"Zero gradient at iteration {iteration}, stopping early")
            break
        if config.norm == "linf":
            step = step_size * np.sign(grad)
        else:
            norms = np.linalg.norm(grad, axis=-1, keepdims=True)
            step = np.where(norms > 0, step_size * grad / np.maximum(norms, 1e-300), 0.0)
        delta = project_to_ball(delta + step, epsilon, config.norm)
        delta[~movable] = 0.0
        if trace is not None:
            trace(iteration, delta)
    return origin + delta


def nearest_tokens(rows, embedding_table, candidates):
    """Candidate id with the highest cosine similarity for each row, lowest id on ties."""
    candidates = np.sort(np.asarray(candidates, dtype=np.int64))
    table = embedding_table[candidates]
    table_norms = np.linalg.norm(table, axis=1)
    row_norms = np.linalg.norm(rows, axis=1)
    scores = (rows @ table.T) / np.maximum(np.outer(row_norms, table_norms), 1e-300)
    return candidates[np.argmax(scores, axis=1)]


def project_to_tokens(perturbed, embedding_table, sequence, candidates=None, epsilon=None):
    """Maps perturbed rows back to vocabulary tokens.

    CLS and PAD positions are never substituted. A position keeps its token
    when its perturbation is zero or, given `epsilon`, smaller than epsilon / 10.
    """
    perturbed = np.asarray(perturbed.data if isinstance(perturbed, Tensor) else perturbed)
    if candidates is None:
        candidates = np.arange(3, embedding_table.shape[0])
    ids = sequence.ids.copy()
    offsets = np.linalg.norm(perturbed - embedding_table[ids], axis=1)
    threshold = SPARSITY_FRACTION * epsilon if epsilon else 0.0
    change = movable_positions(sequence) & (offsets > 0) & (offsets >= threshold)
    change &= np.linalg.norm(perturbed, axis=1) > 0
    positions = np.flatnonzero(change)
    if len(positions):
        ids[positions] = nearest_tokens(perturbed[positions], embedding_table, candidates)
    return TokenSequence(ids, sequence.words)


def _pooled(model, text):
    _, cache = model.forward(model.tokenize(text).ids[None])
    mask = cache.mask[0]
    return cache.final_hidden[0][mask].mean(axis=0)


def bag_of_words(texts):
    """Word count matrix [len(texts), V] over the union of the texts' words."""
    counts = [Counter(split_words(text)) for text in texts]
    words = sorted(set().union(*counts))
    return np.array([[count[word] for word in words] for count in counts], dtype=np.float64)


def _cosine(va, vb):
    denom = np.linalg.norm(va) * np.linalg.norm(vb)
    if denom == 0:
        return 0.0
    return float(np.clip(np.dot(va, vb) / denom, -1.0, 1.0))


def sentence_similarity(a, b, model=None, encoder="bow"):
    """Cosine similarity of `a` and `b` under `encoder`.

    `bow` compares word counts and needs no model. `model` compares the
    mean-pooled final hidden states of `model`, so it moves with the
    classifier's own decision.
    """
    if encoder == "model":
        if model is None:
            raise AttackConfigError("The model similarity encoder needs a model")
        return _cosine(_pooled(model, a), _pooled(model, b))
    if encoder != "bow":
        raise AttackConfigError(f"Unknown similarity encoder {encoder!r}")
    va, vb = bag_of_words([a, b])
    return _cosine(va, vb)


def _substitute(vocab, text, original, current):
    words = split_words(text)
    substituted = [
        position - 1
        for position in range(1, original.length)
        if current.ids[position] != original.ids[position]
    ]
    for index in substituted:
        words[index] = vocab.token_of(int(current.ids[index + 1]))
    return (join_words(words) if substituted else text), substituted


def attack_example(model, example, config, rng=None):
    """Attacks one example; success and similarity are recorded, not filtered.

    Rounds stop at the first flipped prediction. Only the positions picked by
    `rank_positions` on the original text are ever substituted.
    """
    frozen = _frozen(model)
    epsilon, _ = config.radius(frozen)
    if rng is None:
        rng = np.random.default_rng(derive_seed(config.seed, example.id))

    original = frozen.tokenize(example.text)
    original_prob = float(frozen.predict_proba(original.ids[None])[0])
    original_prediction = predictions(original_prob)
    table = frozen.embedding_table
    candidates = frozen.vocab.candidate_ids

    current = original
    adversarial_text, substituted = example.text, []
    adversarial_prob, similarity = original_prob, 1.0
    positions = None
    if epsilon > 0:
        positions = rank_positions(frozen, original, example.label, config.max_substitutions)
    remaining = config.iterations
    while remaining > 0 and epsilon > 0:
        steps = min(config.reproject_every, remaining)
        remaining -= steps
        perturbed = pgd_perturb(
            table[current.ids],
            frozen,
            example.label,
            config,
            current,
            iterations=steps,
            rng=rng,
            positions=positions,
        )
        candidate = project_to_tokens(perturbed, table, current, candidates, epsilon)
        if candidate == current:
            continue
        current = candidate
        adversarial_text, substituted = _substitute(frozen.vocab, example.text, original, current)
        adversarial_prob = float(
            frozen.predict_proba(frozen.tokenize(adversarial_text).ids[None])[0]
        )
        if predictions(adversarial_prob) != original_prediction:
            break

    if substituted:
        similarity = sentence_similarity(
            example.text, adversarial_text, frozen, config.similarity_encoder
        )
    return AdversarialExample(
        original_id=example.id,
        original_text=example.text,
        adversarial_text=adversarial_text,
        label=example.label,
        original_prob=original_prob,
        adversarial_prob=adversarial_prob,
        similarity=similarity,
        substituted_positions=substituted,
        groups=example.groups,
        provenance=example.provenance,
    )


def _counts():
    return {"n_attacked": 0, "n_success": 0, "n_filtered": 0}


def _rate(numerator, denominator):
    return numerator / denominator if denominator else 0.0


class AttackStats:
    def __init__(self, config, epsilon, step_size):
        self.config = config
        self.epsilon = epsilon
        self.step_size = step_size
        self.n_examples = 0
        self.n_skipped = 0
        self.totals = _counts()
        self.per_group = {}
        self.per_provenance = {}
        self.substitutions = Counter()

    def add(self, result, skipped=False):
        self.n_examples += 1
        if skipped:
            self.n_skipped += 1
            return
        success = result.success
        passed = success and result.similarity >= self.config.similarity_threshold
        buckets = [self.totals, self.per_provenance.setdefault(result.provenance, _counts())]
        buckets += [self.per_group.setdefault(group, _counts()) for group in result.groups]
        for bucket in buckets:
            bucket["n_attacked"] += 1
            bucket["n_success"] += int(success)
            bucket["n_filtered"] += int(passed)
        if success:
            originals = split_words(result.original_text)
            for index in result.substituted_positions:
                self.substitutions[originals[index]] += 1

    @staticmethod
    def _with_rates(bucket):
        return dict(
            bucket,
            success_rate=_rate(bucket["n_success"], bucket["n_attacked"]),
            filtered_rate=_rate(bucket["n_filtered"], bucket["n_attacked"]),
            filter_pass_rate=_rate(bucket["n_filtered"], bucket["n_success"]),
        )

    @property
    def success_rate(self):
        return _rate(self.totals["n_success"], self.totals["n_attacked"])

    @property
    def filtered_rate(self):
        return _rate(self.totals["n_filtered"], self.totals["n_attacked"])

    def to_dict(self):
        return {
            "n_examples": self.n_examples,
            "n_skipped": self.n_skipped,
            **self._with_rates(self.totals),
            "per_group": {g: self._with_rates(self.per_group[g]) for g in sorted(self.per_group)},
            "per_provenance": {
                p: self._with_rates(self.per_provenance[p]) for p in sorted(self.per_provenance)
            },
            "substitutions": dict(sorted(self.substitutions.items(), key=lambda kv: (-kv[1], kv[0]))),
            "similarity_encoder": self.config.similarity_encoder,
            "similarity_encoder_description": SIMILARITY_ENCODERS[
                self.config.similarity_encoder
            ],
            "max_substitutions": self.config.max_substitutions,
            "similarity_threshold": self.config.similarity_threshold,
            "epsilon": self.epsilon,
            "step_size": self.step_size,
            "norm": self.config.norm,
            "iterations": self.config.iterations,
            "reproject_every": self.config.reproject_every,
            "config_fingerprint": self.config.fingerprint(),
        }


async def attack_corpus(model, corpus, config, workers=1):
    """Attacks every example and keeps the filtered successes.

    Returns:
        (Corpus of adversarial examples in corpus order, AttackStats)
    """
    config.validate()
    frozen = _frozen(model)
    epsilon, step_size = config.radius(frozen)
    stats = AttackStats(config, epsilon, step_size)
    examples = list(corpus)
    if not examples:
        return Corpus(), stats

    probs = frozen.predict_proba(frozen.encode([e.text for e in examples]))
    correct = predictions(probs) == np.array([e.label for e in examples])
    results = {}

    with ThreadPoolExecutor(max_workers=workers) as executor:
        pool = ConcurrentTasks(max_concurrency=workers)

        def _job(example):
            async def _run():
                results[example.id] = await run_blocking(
                    executor, attack_example, frozen, example, config
                )

            return _run

        for example, ok in zip(examples, correct):
            if ok or not config.skip_misclassified:
                await pool.put(_job(example))
        await pool.join()

    adversarial = []
    for example in examples:
        result = results.get(example.id)
        stats.add(result, skipped=result is None)
        if result is not None and result.success and result.similarity >= config.similarity_threshold:
            adversarial.append(result.to_example(example))

    logger.info(
        f"Attacked {stats.totals['n_attacked']} examples: success rate {stats.success_rate:.4f}, "
        f"filtered rate {stats.filtered_rate:.4f} (similarity >= {config.similarity_threshold})"
    )
    return Corpus(adversarial), stats
