#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
from headguard.corpus.base import (  # NOQA
    Corpus,
    CorpusArgumentError,
    CorpusSchemaError,
    CorpusValidationError,
    Example,
    StratificationError,
)
from headguard.corpus.readers import load_corpus, write_corpus  # NOQA
from headguard.corpus.split import class_balance, rebalance, split  # NOQA
from headguard.corpus.synthetic import synthesize_toy_corpus  # NOQA
