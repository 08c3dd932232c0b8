#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
from headguard.report.groups import GroupReport, group_accuracy_report  # NOQA
from headguard.report.summary import (  # NOQA
    IntegrityError,
    RunSummary,
    validate_summary,
    write_summary,
)
from headguard.report.svg import render_group_bars_svg, render_heatmap_svg  # NOQA
from headguard.report.sweep_io import (  # NOQA
    ReportFileError,
    export_sweep_csv,
    export_sweep_json,
    read_sweep_csv,
    read_sweep_json,
)
