#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Template-based toy toxicity corpus with a planted signal.

Toxic and non-toxic templates share their scaffolding; the label is carried by
the slot word, drawn from a fixed toxic lexicon or a neutral lexicon. Every
example mentions exactly one group token.

With `context`, each sentence is wrapped in an opening and a closing clause
drawn independently of the label, which gives 23 to 29 words per example.
"""
import numpy as np

from headguard.corpus.base import Corpus, CorpusArgumentError, Example

MIN_EXAMPLES = 50
GENERATION_METHOD = "template"

TOXIC_LEXICON = (
    "idiots",
    "imbeciles",
    "vermin",
    "disgusting",
    "worthless",
    "stupid",
    "pathetic",
    "trash",
)
NEUTRAL_LEXICON = (
    "kind",
    "friendly",
    "talented",
    "thoughtful",
    "welcoming",
    "creative",
    "honest",
    "generous",
)
NOUNS = (
    "neighbors",
    "cooks",
    "students",
    "artists",
    "coworkers",
    "friends",
    "families",
    "writers",
)
TEMPLATES = (
    "all {group} {noun} are {word}",
    "i think {group} {noun} are {word}",
    "those {group} {noun} are so {word}",
    "{group} {noun} are {word} and everyone knows it",
    "my {group} {noun} are really {word}",
)
OPENERS = (
    "yesterday after work we walked down to the old market",
    "last weekend my cousin told me this over long dinner",
    "while waiting for the bus this morning i heard people say",
    "during the town meeting on monday someone stood up and said",
    "in the comments under that video last night somebody wrote",
    "when we were talking about the news over coffee today",
)
CLOSERS = (
    "then we went back home and made some tea",
    "anyway that is what came up at lunch today",
    "and the conversation moved on to the weather after that",
    "at least that was the story going around the office",
    "before everyone left to catch the late train home",
    "so that was how the evening ended for us",
)
CONTEXT_WORDS = frozenset(" ".join(OPENERS + CLOSERS).split())


def _lexicon_for(label, group_position, group_count, group_specific):
    lexicon = TOXIC_LEXICON if label == 1 else NEUTRAL_LEXICON
    if not group_specific or label == 0 or group_count < 2:
        return lexicon
    # each group gets its own slice of the toxic lexicon
    size = max(1, len(lexicon) // group_count)
    start = (group_position * size) % len(lexicon)
    return lexicon[start : start + size]


def synthesize_toy_corpus(seed, n, groups, group_specific=False, context=False):
    """Builds `n` examples split evenly over every (group, label) cell.

    Args:
        seed (int): generator seed
        n (int): total number of examples, >= 50 and a multiple of 2 * len(groups)
        groups (list): group tags, each used verbatim as the group token
        group_specific (bool): draw toxic words from a per-group slice of the
            lexicon, so the planted signal differs between groups
        context (bool): wrap every sentence in label-independent opening and
            closing clauses
    """
    groups = list(dict.fromkeys(groups))
    if not groups:
        raise CorpusArgumentError("At least one group is required")
    if n < MIN_EXAMPLES:
        raise CorpusArgumentError(f"n must be >= {MIN_EXAMPLES}, got {n}")
    cells = 2 * len(groups)
    if n % cells != 0:
        raise CorpusArgumentError(
            f"n={n} cannot be split evenly over {cells} (group, label) cells"
        )
    if context and CONTEXT_WORDS.intersection(groups):
        raise CorpusArgumentError(
            f"Group tokens {sorted(CONTEXT_WORDS.intersection(groups))} clash with context words"
        )

    rng = np.random.default_rng(seed)
    per_cell = n // cells
    drafts = []
    for position, group in enumerate(groups):
        for label in (0, 1):
            lexicon = _lexicon_for(label, position, len(groups), group_specific)
            for _ in range(per_cell):
                template = TEMPLATES[rng.integers(len(TEMPLATES))]
                text = template.format(
                    group=group,
                    noun=NOUNS[rng.integers(len(NOUNS))],
                    word=lexicon[rng.integers(len(lexicon))],
                )
                if context:
                    opener = OPENERS[rng.integers(len(OPENERS))]
                    closer = CLOSERS[rng.integers(len(CLOSERS))]
                    text = f"{opener} {text} {closer}"
                drafts.append((text, label, group))

    order = rng.permutation(len(drafts))
    examples = [
        Example(
            id=f"syn-{i:05d}",
            text=drafts[j][0],
            label=drafts[j][1],
            groups=(drafts[j][2],),
            provenance="machine",
            generation_method=GENERATION_METHOD,
        )
        for i, j in enumerate(order)
    ]
    return Corpus(examples)
