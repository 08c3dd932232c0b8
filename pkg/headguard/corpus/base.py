#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Labelled examples tagged with demographic groups.
"""
from headguard.utils import fingerprint

PROVENANCES = ("human", "machine")
CORE_FIELDS = ("id", "text", "label", "groups", "provenance", "generation_method")


class CorpusSchemaError(ValueError):
    def __init__(self, message, lines=()):
        super().__init__(message)
        self.lines = list(lines)


class CorpusValidationError(ValueError):
    def __init__(self, message, lines=()):
        super().__init__(message)
        self.lines = list(lines)


class StratificationError(ValueError):
    pass


class CorpusArgumentError(ValueError):
    pass


class Example:
    def __init__(
        self,
        id,
        text,
        label,
        groups=(),
        provenance="human",
        generation_method=None,
        metadata=None,
    ):
        if label not in (0, 1) or isinstance(label, bool):
            raise CorpusValidationError(f"Example {id!r}: label must be 0 or 1, got {label!r}")
        if provenance not in PROVENANCES:
            raise CorpusValidationError(
                f"Example {id!r}: provenance must be one of {PROVENANCES}, got {provenance!r}"
            )
        self.id = str(id)
        self.text = text
        self.label = int(label)
        self.groups = tuple(sorted({str(group) for group in groups}))
        self.provenance = provenance
        self.generation_method = generation_method
        self.metadata = dict(metadata or {})

    def to_dict(self):
        doc = dict(self.metadata)
        doc.update(
            {
                "id": self.id,
                "text": self.text,
                "label": self.label,
                "groups": list(self.groups),
                "provenance": self.provenance,
                "generation_method": self.generation_method,
            }
        )
        return doc

    def replace(self, **changes):
        doc = {
            "id": self.id,
            "text": self.text,
            "label": self.label,
            "groups": self.groups,
            "provenance": self.provenance,
            "generation_method": self.generation_method,
            "metadata": self.metadata,
        }
        doc.update(changes)
        return Example(**doc)

    def __eq__(self, other):
        return isinstance(other, Example) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"Example(id={self.id!r}, label={self.label}, groups={list(self.groups)})"


def build_group_index(examples):
    index = {}
    for example in examples:
        for group in example.groups:
            index.setdefault(group, []).append(example.id)
    return {group: index[group] for group in sorted(index)}


class Corpus:
    """Immutable, id-unique list of examples with a group tag -> ids index."""

    def __init__(self, examples=()):
        self.examples = tuple(examples)
        self._by_id = {}
        duplicates = []
        for example in self.examples:
            if example.id in self._by_id:
                duplicates.append(example.id)
            self._by_id[example.id] = example
        if duplicates:
            raise CorpusValidationError(f"Duplicate example ids: {sorted(set(duplicates))}")
        self.group_index = build_group_index(self.examples)

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def __getitem__(self, index):
        return self.examples[index]

    def __contains__(self, example_id):
        return example_id in self._by_id

    def __eq__(self, other):
        return isinstance(other, Corpus) and self.examples == other.examples

    def get(self, example_id):
        return self._by_id[example_id]

    @property
    def groups(self):
        return list(self.group_index)

    @property
    def texts(self):
        return [example.text for example in self.examples]

    @property
    def labels(self):
        return [example.label for example in self.examples]

    def subset(self, keep):
        """New corpus with the examples for which `keep(example)` is true, in order."""
        return Corpus([example for example in self.examples if keep(example)])

    def by_group(self, group):
        members = set(self.group_index.get(group, ()))
        return self.subset(lambda example: example.id in members)

    def by_provenance(self, provenance):
        return self.subset(lambda example: example.provenance == provenance)

    def fingerprint(self):
        return fingerprint([example.to_dict() for example in self.examples])

    def __repr__(self):
        return f"Corpus({len(self)} examples, groups={self.groups})"
