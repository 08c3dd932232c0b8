#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Run summary: one JSON document pointing at every artifact of a run.

Artifact paths are stored relative to the workdir. `write_summary` refuses to
write a summary whose references dangle or that does not match SUMMARY_SCHEMA.
"""
import json
import os
import re

import fastjsonschema

from headguard.logger import logger
from headguard.report.sweep_io import write_artifact

SUMMARY_SCHEMA_VERSION = 1
SECTIONS = ("train", "attack", "sweeps", "heads", "best_heads", "mitigation", "groups")
SHA256_RE = re.compile(r"^[0-9a-f]{64}$")
HEAD_FORMAT_RE = re.compile(r"^L\d+H\d+$")
HEAD_ITEM = {"type": "string", "format": "head"}

SUMMARY_DEFINITION = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SUMMARY_SCHEMA_VERSION},
        "fingerprints": {
            "type": "object",
            "additionalProperties": {"type": "string", "format": "sha256"},
        },
        "artifacts": {
            "type": "object",
            "additionalProperties": {"type": "string", "minLength": 1},
        },
        "train": {"type": "object"},
        "attack": {"type": "object"},
        "sweeps": {"type": "object"},
        "heads": {
            "type": "object",
            "properties": {
                "crucial": {"type": "array", "items": HEAD_ITEM},
                "vulnerable": {"type": "array", "items": HEAD_ITEM},
                "intersection": {"type": "array", "items": HEAD_ITEM},
            },
        },
        "best_heads": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "properties": {"head": HEAD_ITEM, "gain": {"type": "number"}},
                "required": ["head", "gain"],
            },
        },
        "mitigation": {"type": "object"},
        "groups": {"type": "object"},
    },
    "required": ["schema_version", "fingerprints", "artifacts", *SECTIONS],
    "additionalProperties": False,
}

CUSTOM_FORMATS = {
    "sha256": lambda value: SHA256_RE.match(value) is not None,
    "head": lambda value: HEAD_FORMAT_RE.match(value) is not None,
}

SUMMARY_SCHEMA = fastjsonschema.compile(definition=SUMMARY_DEFINITION, formats=CUSTOM_FORMATS)


class IntegrityError(RuntimeError):
    pass


class RunSummary:
    """Machine-readable record of a run. Sections a run did not reach stay empty."""

    def __init__(self, fingerprints=None, artifacts=None, **sections):
        unknown = set(sections) - set(SECTIONS)
        if unknown:
            raise ValueError(f"Unknown summary section(s): {sorted(unknown)}")
        self.fingerprints = dict(fingerprints or {})
        self.artifacts = dict(artifacts or {})
        self.sections = {name: dict(sections.get(name) or {}) for name in SECTIONS}

    def __getattr__(self, name):
        sections = self.__dict__.get("sections", {})
        if name in sections:
            return sections[name]
        raise AttributeError(name)

    def add_artifact(self, name, path):
        self.artifacts[name] = path

    def to_dict(self):
        return {
            "schema_version": SUMMARY_SCHEMA_VERSION,
            "fingerprints": dict(sorted(self.fingerprints.items())),
            "artifacts": dict(sorted(self.artifacts.items())),
            **self.sections,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data.get("fingerprints"),
            data.get("artifacts"),
            **{name: data.get(name) for name in SECTIONS},
        )


def missing_artifacts(summary, workdir):
    return sorted(
        name
        for name, path in summary.artifacts.items()
        if not os.path.isfile(os.path.join(workdir, path))
    )


def validate_summary(doc):
    try:
        SUMMARY_SCHEMA(doc)
    except fastjsonschema.JsonSchemaValueException as e:
        raise IntegrityError(f"Summary does not match schema v{SUMMARY_SCHEMA_VERSION}: {e.message}")
    return doc


def write_summary(summary, path, workdir=None):
    """Checks the summary against its schema and the artifacts on disk, then writes it."""
    if workdir is None:
        workdir = os.path.dirname(os.path.abspath(path))
    missing = missing_artifacts(summary, workdir)
    if missing:
        raise IntegrityError(
            "Summary references missing artifact(s): "
            + ", ".join(f"{name} ({summary.artifacts[name]})" for name in missing)
        )
    doc = validate_summary(summary.to_dict())
    logger.debug(f"Summary references {len(summary.artifacts)} artifact(s)")
    return write_artifact(path, json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n")
