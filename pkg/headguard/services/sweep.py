#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Sweep stage: every head ablated in turn on the clean or the adversarial set,
overall and per group.
"""
from headguard.config import ConfigError
from headguard.logger import logger
from headguard.patching.spec import AblationMode
from headguard.patching.sweep import mean_activation_stats, sweep_heads_by_group
from headguard.report.svg import render_heatmap_svg
from headguard.report.sweep_io import export_sweep_csv, export_sweep_json
from headguard.services.base import (
    DATASETS,
    MEAN_STATS,
    TRAIN_SPLIT,
    BaseService,
    sweep_files,
    sweep_index,
)


class SweepService(BaseService):
    stage = "sweep"

    def __init__(self, config, args=None, dataset_tag=None):
        super().__init__(config, args)
        self.dataset_tag = dataset_tag or getattr(args, "dataset", None) or "clean"
        self.stage = f"sweep {self.dataset_tag}"

    def mean_stats(self, model):
        """Mean head outputs over the clean training split, for mean ablation."""
        if AblationMode.from_string(self.config.sweep.mode) is not AblationMode.MEAN:
            return None
        train_set = self.workdir.load_dataset(TRAIN_SPLIT, "training split")
        stats = mean_activation_stats(model, train_set, self.config.sweep.batch_size)
        self.workdir.write_json(MEAN_STATS, stats.to_dict())
        return stats

    def export(self, sweep):
        csv_name, json_name, svg_name = sweep_files(sweep.dataset_tag, sweep.group_tag)
        export_sweep_csv(sweep, self.workdir.path(csv_name))
        export_sweep_json(
            sweep, self.workdir.path(json_name), self.config.fingerprints()["sweep"]
        )
        render_heatmap_svg(sweep, self.workdir.path(svg_name))
        return {"csv": csv_name, "json": json_name, "svg": svg_name}

    async def _run(self):
        if self.dataset_tag not in DATASETS:
            raise ConfigError(
                f"Unknown dataset {self.dataset_tag!r}, expected one of {sorted(DATASETS)}"
            )
        model = self.load_model()
        dataset = self.workdir.load_dataset(
            DATASETS[self.dataset_tag], f"{self.dataset_tag} dataset"
        )
        settings = self.config.sweep
        sweeps = await sweep_heads_by_group(
            model,
            dataset,
            mode=settings.mode,
            mean_stats=self.mean_stats(model),
            workers=self.config.workers,
            dataset_tag=self.dataset_tag,
            batch_size=settings.batch_size,
        )

        files = self.export(sweeps[0])
        logger.info(f"Wrote {files['csv']}, {files['json']} and {files['svg']}")
        index = {sweep.group_tag: self.export(sweep) for sweep in sweeps[1:]}
        self.workdir.write_json(
            sweep_index(self.dataset_tag), {"dataset_tag": self.dataset_tag, "groups": index}
        )
        return sweeps
