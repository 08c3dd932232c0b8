#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Deterministic word-level tokenizer.

Text is lowercased and split on whitespace and punctuation boundaries; every
punctuation mark is its own token. Unknown words map to `[UNK]`.
"""
import re
from collections import Counter

import numpy as np

from headguard.model.metrics import ArgumentError

CLS_TOKEN = "[CLS]"
PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
SPECIAL_TOKENS = (CLS_TOKEN, PAD_TOKEN, UNK_TOKEN)
CLS_ID, PAD_ID, UNK_ID = 0, 1, 2
UNUSED_TEMPLATE = "[unused{}]"

WORD_RE = re.compile(r"\w+|[^\w\s]")


def split_words(text):
    return WORD_RE.findall(text.lower())


def join_words(words):
    return " ".join(words)


class Vocabulary:
    """Dense token <-> id map. Ids 0, 1, 2 are CLS, PAD and UNK."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ArgumentError(
                f"Vocabulary must start with {list(SPECIAL_TOKENS)}, got {tokens[:3]}"
            )
        self.tokens = tokens
        self.ids = {token: i for i, token in enumerate(tokens)}
        if len(self.ids) != len(tokens):
            raise ArgumentError("Vocabulary contains duplicated tokens")
        self._candidates = np.array(
            [i for i, token in enumerate(tokens) if self._is_word(token)],
            dtype=np.int64,
        )

    @classmethod
    def build(cls, texts, vocab_size):
        """Most frequent words first (ties broken alphabetically), padded with
        `[unused{i}]` entries up to exactly `vocab_size`."""
        room = vocab_size - len(SPECIAL_TOKENS)
        if room < 1:
            raise ArgumentError(f"vocab_size must be > {len(SPECIAL_TOKENS)}")
        counts = Counter()
        for text in texts:
            counts.update(split_words(text))
        ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
        words = [word for word, _ in ordered[:room]]
        unused = [UNUSED_TEMPLATE.format(i) for i in range(room - len(words))]
        return cls(list(SPECIAL_TOKENS) + words + unused)

    @staticmethod
    def _is_word(token):
        return token not in SPECIAL_TOKENS and not (
            token.startswith("[unused") and token.endswith("]")
        )

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.ids

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id_of(self, token):
        return self.ids.get(token, UNK_ID)

    def token_of(self, token_id):
        return self.tokens[token_id]

    def is_candidate(self, token_id):
        """True for real words; special and reserved tokens are never substituted."""
        return self._is_word(self.tokens[token_id])

    @property
    def candidate_ids(self):
        return self._candidates

    def to_list(self):
        return list(self.tokens)


class TokenSequence:
    """Token ids of one text, CLS first, padded to a fixed length.

    `words[i]` is the word at position i + 1.
    """

    def __init__(self, ids, words):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.words = list(words)

    def __len__(self):
        return len(self.ids)

    @property
    def length(self):
        """Number of non-padding positions, CLS included."""
        return len(self.words) + 1

    @property
    def mask(self):
        return self.ids != PAD_ID

    def __eq__(self, other):
        return (
            isinstance(other, TokenSequence)
            and np.array_equal(self.ids, other.ids)
            and self.words == other.words
        )

    def __repr__(self):
        return f"TokenSequence({self.ids.tolist()})"


def tokenize(text, vocab, max_len):
    if max_len < 2:
        raise ArgumentError(f"max_len must be >= 2, got {max_len}")
    words = split_words(text)[: max_len - 1]
    ids = [CLS_ID] + [vocab.id_of(word) for word in words]
    ids += [PAD_ID] * (max_len - len(ids))
    return TokenSequence(ids, words)


def encode_batch(sequences):
    """Stacks token sequences of equal length into an [N, T] id matrix."""
    if not sequences:
        raise ArgumentError("encode_batch: empty batch")
    lengths = {len(seq) for seq in sequences}
    if len(lengths) != 1:
        raise ArgumentError(f"encode_batch: unequal sequence lengths {sorted(lengths)}")
    return np.stack([seq.ids for seq in sequences])
