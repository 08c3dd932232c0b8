#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Report stage: figures plus a run summary that only points at files on disk.

Stages that did not run leave their summary section empty. Artifacts are keyed
by file name in the summary.
"""
import hashlib

import numpy as np

from headguard.corpus.readers import load_corpus
from headguard.logger import logger
from headguard.report.groups import group_accuracy_report
from headguard.report.summary import IntegrityError, RunSummary, write_summary
from headguard.report.svg import render_heatmap_svg
from headguard.report.sweep_io import read_sweep_csv, read_sweep_json
from headguard.services.base import (
    ADVERSARIAL,
    ATTACK_STATS,
    BEST_HEADS,
    CHECKPOINT,
    DATASETS,
    GROUP_CSV,
    GROUP_SVG,
    HEADS,
    MITIGATION,
    SUMMARY,
    TEST_SPLIT,
    TRAIN_METRICS,
    TRAIN_SPLIT,
    BaseService,
    sweep_files,
    sweep_index,
)

TRAIN_FIELDS = ("train_loss", "train_accuracy", "test_loss", "test_accuracy", "n_train", "n_test")
ATTACK_FIELDS = (
    "n_examples",
    "n_attacked",
    "n_success",
    "n_filtered",
    "success_rate",
    "filtered_rate",
    "filter_pass_rate",
    "clean_accuracy",
    "adversarial_accuracy",
    "similarity_encoder",
)


def file_digest(path):
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


class ReportService(BaseService):
    stage = "report"

    def __init__(self, config, args=None):
        super().__init__(config, args)
        self.summary = RunSummary(fingerprints=config.fingerprints())

    def reference(self, *names):
        for name in names:
            self.summary.add_artifact(name, name)

    def check_sweep_csv(self, sweep, csv_name):
        # a missing CSV is reported by write_summary
        if not self.workdir.exists(csv_name):
            return
        table = read_sweep_csv(self.workdir.path(csv_name))
        if not (
            np.array_equal(table["delta_loss"], sweep.delta_loss)
            and np.array_equal(table["delta_accuracy"], sweep.delta_accuracy)
        ):
            raise IntegrityError(f"{csv_name} disagrees with its JSON sweep record")

    def sweep_section(self, dataset_tag):
        csv_name, json_name, svg_name = sweep_files(dataset_tag)
        if not self.workdir.exists(json_name):
            dependents = [name for name in (csv_name, HEADS) if self.workdir.exists(name)]
            if dependents:
                raise IntegrityError(f"{json_name} is missing but {dependents} depend on it")
            logger.warning(f"No {dataset_tag} sweep found ({json_name}), leaving it out of the summary")
            return None
        sweep = read_sweep_json(self.workdir.path(json_name))
        self.check_sweep_csv(sweep, csv_name)
        render_heatmap_svg(sweep, self.workdir.path(svg_name))
        self.reference(csv_name, json_name, svg_name)

        groups = {}
        if self.workdir.exists(sweep_index(dataset_tag)):
            index = self.workdir.read_json(sweep_index(dataset_tag))
            self.reference(sweep_index(dataset_tag))
            for group in sorted(index["groups"]):
                files = index["groups"][group]
                self.reference(files["csv"], files["json"], files["svg"])
                if not self.workdir.exists(files["json"]):
                    continue
                group_sweep = read_sweep_json(self.workdir.path(files["json"]))
                self.check_sweep_csv(group_sweep, files["csv"])
                groups[group] = {
                    "baseline_loss": group_sweep.baseline_loss,
                    "baseline_accuracy": group_sweep.baseline_accuracy,
                    "n_examples": group_sweep.n_examples,
                }
        return {
            "mode": sweep.mode,
            "baseline_loss": sweep.baseline_loss,
            "baseline_accuracy": sweep.baseline_accuracy,
            "n_examples": sweep.n_examples,
            "groups": groups,
        }

    async def _run(self):
        workdir = self.workdir
        model = self.load_model()
        self.summary.fingerprints["checkpoint"] = file_digest(workdir.path(CHECKPOINT))
        self.reference(CHECKPOINT)

        if workdir.exists(TRAIN_METRICS):
            metrics = workdir.read_json(TRAIN_METRICS)
            self.summary.train.update({field: metrics.get(field) for field in TRAIN_FIELDS})
            self.summary.train["epochs"] = len(metrics["history"]) - 1
            self.reference(TRAIN_METRICS, TRAIN_SPLIT, TEST_SPLIT)

        if workdir.exists(ATTACK_STATS):
            stats = workdir.read_json(ATTACK_STATS)
            self.summary.attack.update({field: stats.get(field) for field in ATTACK_FIELDS})
            self.reference(ATTACK_STATS, ADVERSARIAL)

        for dataset_tag in DATASETS:
            section = self.sweep_section(dataset_tag)
            if section is not None:
                self.summary.sweeps[dataset_tag] = section

        if workdir.exists(HEADS):
            heads = workdir.read_json(HEADS)
            self.summary.heads.update(
                {key: heads[key] for key in ("tau_c", "crucial", "vulnerable", "intersection")}
            )
            self.reference(HEADS)

        if workdir.exists(MITIGATION):
            self.summary.mitigation.update(workdir.read_json(MITIGATION))
            self.reference(MITIGATION)

        if workdir.exists(BEST_HEADS):
            best_heads = workdir.read_json(BEST_HEADS)
            self.summary.best_heads.update(best_heads)
            self.reference(BEST_HEADS)
            if best_heads and workdir.exists(ADVERSARIAL):
                adversarial = load_corpus(workdir.path(ADVERSARIAL), format="jsonl")
                report = group_accuracy_report(
                    model,
                    adversarial,
                    {group: entry["head"] for group, entry in best_heads.items()},
                    csv_path=workdir.path(GROUP_CSV),
                    svg_path=workdir.path(GROUP_SVG),
                    batch_size=self.config.sweep.batch_size,
                )
                self.summary.groups.update(report.to_dict())
                self.reference(GROUP_CSV, GROUP_SVG)

        path = write_summary(self.summary, workdir.path(SUMMARY), workdir.root)
        logger.info(f"Wrote {path} ({len(self.summary.artifacts)} artifacts)")
        return self.summary
