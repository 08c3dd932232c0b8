#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Sweep CSV / JSON files.

CSV rows come in layer-major, head-minor order. Floats are written with
`repr`, which round-trips exactly.
"""
import csv
import io
import json

import numpy as np

from headguard.patching.sweep import SweepResult
from headguard.utils import atomic_write

SWEEP_COLUMNS = (
    "layer",
    "head",
    "delta_loss",
    "delta_accuracy",
    "dataset_tag",
    "group_tag",
    "n_examples",
)
SWEEP_FORMAT_VERSION = 1


class ReportFileError(OSError):
    pass


def write_artifact(path, content, mode="w"):
    try:
        return atomic_write(path, content, mode)
    except OSError as e:
        raise ReportFileError(f"Could not write {path}: {e}") from e


def sweep_csv(sweep):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for head, delta_loss, delta_acc in sweep.cells():
        writer.writerow(
            [
                head.layer,
                head.head,
                repr(delta_loss),
                repr(delta_acc),
                sweep.dataset_tag,
                sweep.group_tag or "",
                sweep.n_examples,
            ]
        )
    return buffer.getvalue()


def export_sweep_csv(sweep, path):
    return write_artifact(path, sweep_csv(sweep))


def read_sweep_csv(path):
    """Reads a sweep CSV back into its matrices.

    Returns:
        dict with `delta_loss` and `delta_accuracy` ndarrays plus the tags
    """
    try:
        with open(path, encoding="utf8", newline="") as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        raise ReportFileError(f"Could not read {path}: {e}") from e
    if not rows:
        raise ReportFileError(f"{path} holds no sweep rows")

    num_layers = max(int(row["layer"]) for row in rows) + 1
    num_heads = max(int(row["head"]) for row in rows) + 1
    delta_loss = np.full((num_layers, num_heads), np.nan)
    delta_acc = np.full((num_layers, num_heads), np.nan)
    for row in rows:
        cell = int(row["layer"]), int(row["head"])
        delta_loss[cell] = float(row["delta_loss"])
        delta_acc[cell] = float(row["delta_accuracy"])
    if np.isnan(delta_loss).any():
        raise ReportFileError(f"{path} does not cover a full layer x head grid")
    return {
        "delta_loss": delta_loss,
        "delta_accuracy": delta_acc,
        "dataset_tag": rows[0]["dataset_tag"],
        "group_tag": rows[0]["group_tag"] or None,
        "n_examples": int(rows[0]["n_examples"]),
    }


def export_sweep_json(sweep, path, config_fingerprint=None):
    doc = dict(sweep.to_dict(), format_version=SWEEP_FORMAT_VERSION)
    doc["config_fingerprint"] = config_fingerprint
    return write_artifact(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_sweep_json(path):
    try:
        with open(path, encoding="utf8") as f:
            doc = json.load(f)
    except OSError as e:
        raise ReportFileError(f"Could not read {path}: {e}") from e
    doc.pop("format_version", None)
    doc.pop("config_fingerprint", None)
    return SweepResult.from_dict(doc)
