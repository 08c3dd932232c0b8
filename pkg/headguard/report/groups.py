#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Adversarial accuracy per demographic group, with and without the group's best
head zero-ablated.

Every number comes from `run_with_patch`, so the table can be recomputed from
the model and the adversarial corpus alone.
"""
import csv
import io

from headguard.logger import logger
from headguard.model.encoder import DEFAULT_EVAL_BATCH
from headguard.patching.spec import HeadIndex, PatchSpec
from headguard.patching.sweep import run_with_patch
from headguard.report.svg import render_group_bars_svg
from headguard.report.sweep_io import write_artifact

GROUP_COLUMNS = (
    "group",
    "head",
    "n_examples",
    "baseline_accuracy",
    "ablated_accuracy",
    "gain",
)


def _head_of(entry):
    # best_head_per_group gives (head, gain) pairs, config files give plain heads
    if isinstance(entry, tuple) and len(entry) == 2 and not isinstance(entry[0], int):
        return HeadIndex.parse(entry[0])
    return HeadIndex.parse(entry)


def _spread(values):
    return max(values) - min(values) if values else 0.0


def _accuracy_row(model, corpus, group, head, batch_size):
    _, baseline = run_with_patch(model, corpus, None, batch_size)
    _, ablated = run_with_patch(model, corpus, PatchSpec.single(head), batch_size)
    return {
        "group": group,
        "head": str(head),
        "n_examples": len(corpus),
        "baseline_accuracy": baseline,
        "ablated_accuracy": ablated,
        "gain": ablated - baseline,
    }


class GroupReport:
    def __init__(self, rows, by_provenance=None):
        self.rows = rows
        self.by_provenance = by_provenance or {}

    @property
    def groups(self):
        return [row["group"] for row in self.rows]

    def row(self, group):
        for row in self.rows:
            if row["group"] == group:
                return row
        raise KeyError(group)

    @property
    def baseline_gap(self):
        """Spread of baseline adversarial accuracy across groups."""
        return _spread([row["baseline_accuracy"] for row in self.rows])

    @property
    def gain_gap(self):
        """Spread of best-head gains across groups."""
        return _spread([row["gain"] for row in self.rows])

    def to_csv(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(GROUP_COLUMNS)
        for row in self.rows:
            writer.writerow(
                [
                    row["group"],
                    row["head"],
                    row["n_examples"],
                    repr(row["baseline_accuracy"]),
                    repr(row["ablated_accuracy"]),
                    repr(row["gain"]),
                ]
            )
        return buffer.getvalue()

    def to_dict(self):
        return {
            "rows": self.rows,
            "by_provenance": self.by_provenance,
            "fairness": {
                "baseline_accuracy_gap": self.baseline_gap,
                "gain_gap": self.gain_gap,
            },
        }


def group_accuracy_report(
    model,
    adv_corpus,
    best_heads,
    csv_path=None,
    svg_path=None,
    batch_size=DEFAULT_EVAL_BATCH,
):
    """Builds the per-group table and optionally writes it as CSV and bar chart.

    Args:
        best_heads: {group: head} or the {group: (head, gain)} map of
            `best_head_per_group`
    Returns:
        GroupReport with rows sorted by group
    """
    rows = []
    by_provenance = {}
    present = set(adv_corpus.groups)
    for group in sorted(best_heads):
        if group not in present:
            logger.warning(f"Group '{group}' has no adversarial examples, omitted from the report")
            continue
        head = _head_of(best_heads[group])
        members = adv_corpus.by_group(group)
        rows.append(_accuracy_row(model, members, group, head, batch_size))

        for provenance in sorted({example.provenance for example in members}):
            subset = members.by_provenance(provenance)
            by_provenance.setdefault(provenance, []).append(
                _accuracy_row(model, subset, group, head, batch_size)
            )
        logger.debug(f"Group '{group}': {rows[-1]}")

    report = GroupReport(rows, by_provenance)
    if rows:
        logger.info(
            f"Group report over {len(rows)} group(s): baseline gap {report.baseline_gap:.4f}, "
            f"gain gap {report.gain_gap:.4f}"
        )
    if csv_path is not None:
        write_artifact(csv_path, report.to_csv())
    if svg_path is not None:
        render_group_bars_svg(rows, svg_path)
    return report
