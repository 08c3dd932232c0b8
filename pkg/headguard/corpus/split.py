#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
from enum import Enum

import numpy as np

from headguard.corpus.base import Corpus, CorpusArgumentError, StratificationError
from headguard.logger import logger


class RebalanceStrategy(Enum):
    NONE = "none"
    DOWNSAMPLE = "downsample"
    UPSAMPLE = "upsample"

    @classmethod
    def from_string(cls, value):
        match value.casefold():
            case "none":
                return cls.NONE
            case "downsample":
                return cls.DOWNSAMPLE
            case "upsample":
                return cls.UPSAMPLE
            case _:
                raise CorpusArgumentError(
                    f"'{value}' is not a rebalance strategy, expected none, downsample or upsample"
                )


def _in_order(corpus, chosen):
    chosen = set(chosen)
    return corpus.subset(lambda example: example.id in chosen)


def split(corpus, test_fraction, seed, stratify=False):
    """Seeded train/test partition, optionally stratified on (label, groups).

    Both halves keep the corpus order.
    """
    if not 0 < test_fraction < 1:
        raise CorpusArgumentError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)

    if not stratify:
        ids = [example.id for example in corpus]
        order = rng.permutation(len(ids))
        n_test = int(round(len(ids) * test_fraction))
        test_ids = [ids[i] for i in order[:n_test]]
        return (
            _in_order(corpus, set(ids) - set(test_ids)),
            _in_order(corpus, test_ids),
        )

    cells = {}
    for example in corpus:
        cells.setdefault((example.label, example.groups), []).append(example.id)
    test_ids = []
    for key in sorted(cells):
        members = cells[key]
        if len(members) < 2:
            raise StratificationError(
                f"Cannot stratify: cell label={key[0]} groups={list(key[1])} has a single example"
            )
        order = rng.permutation(len(members))
        n_test = int(round(len(members) * test_fraction))
        test_ids.extend(members[i] for i in order[:n_test])

    test = set(test_ids)
    return (
        corpus.subset(lambda example: example.id not in test),
        _in_order(corpus, test),
    )


def class_balance(corpus):
    balance = {0: 0, 1: 0}
    for example in corpus:
        balance[example.label] += 1
    return balance


def rebalance(corpus, strategy="none", seed=0):
    """Equalizes class counts by dropping majority or repeating minority examples.

    Repeated examples get `#dup{k}` id suffixes so ids stay unique.
    """
    if not isinstance(strategy, RebalanceStrategy):
        strategy = RebalanceStrategy.from_string(strategy)
    balance = class_balance(corpus)
    if strategy is RebalanceStrategy.NONE or balance[0] == balance[1] or 0 in balance.values():
        return corpus

    rng = np.random.default_rng(seed)
    minority = min(balance, key=lambda label: (balance[label], label))
    majority = 1 - minority
    by_label = {label: [e for e in corpus if e.label == label] for label in (0, 1)}

    if strategy is RebalanceStrategy.DOWNSAMPLE:
        kept = rng.choice(len(by_label[majority]), size=balance[minority], replace=False)
        keep = {by_label[majority][i].id for i in kept}
        logger.info(f"Downsampled class {majority} from {balance[majority]} to {len(keep)}")
        return corpus.subset(lambda e: e.label == minority or e.id in keep)

    extra = balance[majority] - balance[minority]
    picks = rng.choice(len(by_label[minority]), size=extra, replace=True)
    copies, duplicates = {}, []
    for i in picks:
        source = by_label[minority][i]
        copies[source.id] = copies.get(source.id, 0) + 1
        duplicates.append(source.replace(id=f"{source.id}#dup{copies[source.id]}"))
    logger.info(f"Upsampled class {minority} from {balance[minority]} to {balance[majority]}")
    return Corpus(list(corpus) + duplicates)
