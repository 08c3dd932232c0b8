#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Corpus readers and writers.

Readers are registered by format name in the `corpus.readers` config section
as fully qualified names, e.g. `jsonl: headguard.corpus.readers:JsonlCorpusReader`.
"""
import csv
import importlib
import io
import json
import os

from headguard.corpus.base import (
    CORE_FIELDS,
    Corpus,
    CorpusArgumentError,
    CorpusSchemaError,
    CorpusValidationError,
    Example,
)
from headguard.logger import logger
from headguard.utils import atomic_write

REQUIRED_FIELDS = ("id", "text", "label")
GROUP_ALIASES = ("groups", "group", "target_group")
GROUP_DELIMITER = "|"

DEFAULT_READERS = {
    "jsonl": "headguard.corpus.readers:JsonlCorpusReader",
    "csv": "headguard.corpus.readers:CsvCorpusReader",
}


class RowError(Exception):
    def __init__(self, message, schema=False):
        super().__init__(message)
        self.schema = schema


def _parse_label(value):
    if isinstance(value, bool):
        raise RowError(f"label must be 0 or 1, got {value!r}")
    if isinstance(value, str):
        value = value.strip()
    try:
        label = int(value)
    except (TypeError, ValueError):
        raise RowError(f"label must be 0 or 1, got {value!r}")
    if label not in (0, 1) or str(label) != str(value).strip():
        raise RowError(f"label must be 0 or 1, got {value!r}")
    return label


def _check_encoding(row):
    # undecodable bytes survive the read as lone surrogates
    try:
        json.dumps(row, ensure_ascii=False).encode("utf8")
    except UnicodeEncodeError:
        raise RowError("invalid UTF-8 byte sequence")


def _parse_groups(value):
    if value is None:
        return ()
    if isinstance(value, str):
        value = value.split(GROUP_DELIMITER)
    if not isinstance(value, (list, tuple)):
        raise RowError(f"groups must be a list or a '{GROUP_DELIMITER}'-separated string")
    return tuple(tag.strip() for tag in map(str, value) if tag.strip())


class CorpusReader:
    """Base class: subclasses yield (line_number, mapping) pairs from `rows()`."""

    format = None
    extension = None

    def __init__(self, strict=True):
        self.strict = strict

    def rows(self, stream):
        raise NotImplementedError

    def serialize(self, corpus):
        raise NotImplementedError

    def parse_row(self, row):
        missing = [field for field in REQUIRED_FIELDS if row.get(field) in (None, "")]
        if missing:
            raise RowError(f"missing required field(s) {missing}", schema=True)

        groups = ()
        extra = dict(row)
        for alias in GROUP_ALIASES:
            if alias in extra:
                groups += _parse_groups(extra.pop(alias))

        provenance = extra.pop("provenance", None) or "human"
        if provenance not in ("human", "machine"):
            raise RowError(f"provenance must be human or machine, got {provenance!r}")
        generation_method = extra.pop("generation_method", None) or None

        return Example(
            id=str(extra.pop("id")),
            text=str(extra.pop("text")),
            label=_parse_label(extra.pop("label")),
            groups=groups,
            provenance=provenance,
            generation_method=generation_method,
            metadata=extra,
        )

    def load(self, path):
        if not os.path.exists(path):
            raise FileNotFoundError(f"Corpus file {path} does not exist")

        examples, errors, seen = [], [], set()
        with open(path, encoding="utf8", errors="surrogateescape", newline="") as f:
            for line, row in self.rows(f):
                try:
                    if isinstance(row, RowError):
                        raise row
                    _check_encoding(row)
                    example = self.parse_row(row)
                    if example.id in seen:
                        raise RowError(f"duplicate id {example.id!r}")
                except RowError as e:
                    errors.append((line, str(e), e.schema))
                    continue
                seen.add(example.id)
                examples.append(example)

        if errors:
            lines = [line for line, _, _ in errors]
            details = "; ".join(f"line {line}: {message}" for line, message, _ in errors[:10])
            if self.strict:
                if any(schema for _, _, schema in errors):
                    raise CorpusSchemaError(f"{path}: {details}", lines)
                raise CorpusValidationError(f"{path}: {details}", lines)
            for line, message, _ in errors:
                logger.warning(f"{path}: skipping line {line}: {message}")

        if not examples and not errors:
            logger.warning(f"Corpus file {path} is empty")
        return Corpus(examples)

    def write(self, corpus, path):
        return atomic_write(path, self.serialize(corpus))


class JsonlCorpusReader(CorpusReader):
    """One JSON object per line."""

    format = "jsonl"
    extension = ".jsonl"

    def rows(self, stream):
        for number, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                yield number, RowError(f"invalid JSON: {e.msg}")
                continue
            if not isinstance(row, dict):
                yield number, RowError("expected a JSON object", schema=True)
                continue
            yield number, row

    def serialize(self, corpus):
        return "".join(
            json.dumps(example.to_dict(), sort_keys=True, ensure_ascii=False) + "\n"
            for example in corpus
        )


class CsvCorpusReader(CorpusReader):
    """Header row required; the groups column is `|`-delimited."""

    format = "csv"
    extension = ".csv"

    def rows(self, stream):
        reader = csv.DictReader(stream)
        if reader.fieldnames is None:
            return
        missing = [field for field in REQUIRED_FIELDS if field not in reader.fieldnames]
        if missing:
            raise CorpusSchemaError(f"CSV header lacks required column(s) {missing}", [1])
        for row in reader:
            if None in row:
                yield reader.line_num, RowError("more values than header columns")
                continue
            yield reader.line_num, {
                key: value for key, value in row.items() if value is not None
            }

    def serialize(self, corpus):
        extra = sorted({key for example in corpus for key in example.metadata})
        columns = list(CORE_FIELDS) + extra
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for example in corpus:
            doc = example.to_dict()
            doc["groups"] = GROUP_DELIMITER.join(example.groups)
            doc["generation_method"] = example.generation_method or ""
            writer.writerow({key: doc.get(key, "") for key in columns})
        return buffer.getvalue()


def get_reader_klass(fqn):
    """Converts a Fully Qualified Name into a class."""
    module_name, klass_name = fqn.split(":")
    module = importlib.import_module(module_name)
    return getattr(module, klass_name)


def get_reader(format, strict=True, readers=None):
    readers = readers or DEFAULT_READERS
    if format not in readers:
        raise CorpusArgumentError(
            f"Unknown corpus format {format!r}, expected one of {sorted(readers)}"
        )
    return get_reader_klass(readers[format])(strict=strict)


def infer_format(path):
    extension = os.path.splitext(path)[-1].lower().lstrip(".")
    return "jsonl" if extension in ("jsonl", "json", "ndjson") else extension


def load_corpus(path, format=None, strict=True, readers=None):
    reader = get_reader(format or infer_format(path), strict=strict, readers=readers)
    corpus = reader.load(path)
    logger.info(f"Loaded {len(corpus)} examples from {path}")
    return corpus


def write_corpus(corpus, path, format=None, readers=None):
    reader = get_reader(format or infer_format(path), readers=readers)
    return reader.write(corpus, path)
