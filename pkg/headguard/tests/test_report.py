#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import csv
import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from headguard.corpus.base import Corpus, Example
from headguard.patching.spec import HeadIndex, PatchSpec
from headguard.patching.sweep import SweepResult, run_with_patch
from headguard.report import (
    IntegrityError,
    ReportFileError,
    RunSummary,
    export_sweep_csv,
    export_sweep_json,
    group_accuracy_report,
    read_sweep_csv,
    read_sweep_json,
    render_heatmap_svg,
    validate_summary,
    write_summary,
)
from headguard.report.svg import diverging_color, group_bars_svg, heatmap_svg

SVG_NS = "{http://www.w3.org/2000/svg}"


def _sweep(delta_acc=None, group_tag=None):
    if delta_acc is None:
        delta_acc = [[0.0, -0.25, 0.1], [0.05, 0.0, -0.1 / 3]]
    delta_acc = np.asarray(delta_acc, dtype=np.float64)
    return SweepResult(
        baseline_loss=0.4,
        baseline_accuracy=0.9,
        delta_loss=delta_acc * -2.0,
        delta_accuracy=delta_acc,
        dataset_tag="clean",
        group_tag=group_tag,
        n_examples=40,
    )


def _cells(svg):
    root = ET.fromstring(svg)
    return {
        rect.get("id"): rect
        for rect in root.iter(f"{SVG_NS}rect")
        if rect.get("class") == "cell"
    }


def test_sweep_csv(tmp_path):
    sweep = _sweep(group_tag="women")
    path = str(tmp_path / "sweep.csv")
    export_sweep_csv(sweep, path)

    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 6
    assert [(r["layer"], r["head"]) for r in rows] == [
        ("0", "0"),
        ("0", "1"),
        ("0", "2"),
        ("1", "0"),
        ("1", "1"),
        ("1", "2"),
    ]
    assert rows[1]["delta_accuracy"] == "-0.25"
    assert rows[1]["group_tag"] == "women"
    assert rows[0]["n_examples"] == "40"

    back = read_sweep_csv(path)
    np.testing.assert_array_equal(back["delta_accuracy"], sweep.delta_accuracy)
    np.testing.assert_array_equal(back["delta_loss"], sweep.delta_loss)
    assert back["group_tag"] == "women"


def test_sweep_csv_without_group(tmp_path):
    path = str(tmp_path / "sweep.csv")
    export_sweep_csv(_sweep(), path)
    assert read_sweep_csv(path)["group_tag"] is None


def test_sweep_csv_incomplete(tmp_path):
    path = tmp_path / "sweep.csv"
    export_sweep_csv(_sweep(), str(path))
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ReportFileError):
        read_sweep_csv(str(path))
    path.write_text(lines[0] + "\n")
    with pytest.raises(ReportFileError):
        read_sweep_csv(str(path))
    with pytest.raises(ReportFileError):
        read_sweep_csv(str(tmp_path / "missing.csv"))


def test_sweep_json(tmp_path):
    sweep = _sweep()
    path = str(tmp_path / "sweep.json")
    export_sweep_json(sweep, path, config_fingerprint="abc")
    with open(path) as f:
        doc = json.load(f)
    assert doc["format_version"] == 1
    assert doc["config_fingerprint"] == "abc"
    assert read_sweep_json(path) == sweep


def test_heatmap_cells(tmp_path):
    sweep = _sweep()
    path = str(tmp_path / "heatmap.svg")
    render_heatmap_svg(sweep, path)
    with open(path) as f:
        cells = _cells(f.read())

    assert len(cells) == 6
    for head, _, delta_acc in sweep.cells():
        rect = cells[f"cell-L{head.layer}-H{head.head}"]
        assert float(rect.get("data-value")) == delta_acc
    # the most negative cell is saturated cool, zero cells are neutral
    assert cells["cell-L0-H1"].get("fill") == "#3b4cc0"
    assert cells["cell-L0-H0"].get("fill") == "#f2f2f2"


def test_heatmap_is_byte_stable():
    assert heatmap_svg(_sweep()) == heatmap_svg(_sweep())


def test_heatmap_degenerate():
    svg = heatmap_svg(_sweep(np.zeros((2, 2))))
    root = ET.fromstring(svg)
    notes = [t for t in root.iter(f"{SVG_NS}text") if t.get("id") == "degenerate-note"]
    assert len(notes) == 1
    assert "all cells equal" in notes[0].text
    assert {rect.get("fill") for rect in _cells(svg).values()} == {"#f2f2f2"}

    assert not any(
        t.get("id") == "degenerate-note" for t in ET.fromstring(heatmap_svg(_sweep())).iter()
    )


def test_heatmap_palette():
    with pytest.raises(ValueError):
        heatmap_svg(_sweep(), palette="viridis")
    cells = _cells(heatmap_svg(_sweep(), palette="bluered"))
    assert cells["cell-L0-H1"].get("fill") == "#2166ac"


def test_diverging_color():
    assert diverging_color(1.0, 1.0) == "#b40426"
    assert diverging_color(5.0, 1.0) == "#b40426"
    assert diverging_color(-1.0, 1.0) == "#3b4cc0"
    assert diverging_color(0.3, 0.0) == "#f2f2f2"


def test_group_bars():
    rows = [
        {"group": "a&b", "baseline_accuracy": 0.5, "ablated_accuracy": 0.75, "gain": 0.25},
        {"group": "c", "baseline_accuracy": 1.0, "ablated_accuracy": 0.0, "gain": -1.0},
    ]
    root = ET.fromstring(group_bars_svg(rows))
    bars = {r.get("id"): r for r in root.iter(f"{SVG_NS}rect") if r.get("class") == "bar"}
    assert len(bars) == 4
    assert float(bars["bar-a&b-ablated"].get("data-value")) == 0.75
    assert float(bars["bar-c-baseline"].get("height")) == 200.0
    assert float(bars["bar-c-ablated"].get("height")) == 0.0


def _adversarial(toy_corpus):
    return Corpus([e.replace(id=f"{e.id}:adv") for e in list(toy_corpus)[:30]])


def test_group_report(trained_model, toy_corpus, tmp_path, patch_logger):
    adversarial = _adversarial(toy_corpus)
    best = {"women": (HeadIndex(0, 1), 0.1), "muslim": "L1H0", "jewish": "L0H0"}
    csv_path = str(tmp_path / "groups.csv")
    svg_path = str(tmp_path / "groups.svg")
    report = group_accuracy_report(trained_model, adversarial, best, csv_path, svg_path)

    assert report.groups == ["muslim", "women"]
    patch_logger.assert_present("Group 'jewish' has no adversarial examples")

    row = report.row("women")
    members = adversarial.by_group("women")
    _, baseline = run_with_patch(trained_model, members)
    _, ablated = run_with_patch(trained_model, members, PatchSpec.single("L0H1"))
    assert row["head"] == "L0H1"
    assert row["n_examples"] == len(members)
    assert row["baseline_accuracy"] == baseline
    assert row["ablated_accuracy"] == ablated
    assert row["gain"] == ablated - baseline

    with open(csv_path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["group"] for r in rows] == ["muslim", "women"]
    assert float(rows[1]["gain"]) == row["gain"]
    assert os.path.isfile(svg_path)

    data = report.to_dict()
    assert set(data["by_provenance"]) == {"machine"}
    gains = [r["gain"] for r in report.rows]
    assert data["fairness"]["gain_gap"] == max(gains) - min(gains)


def test_group_report_empty(trained_model):
    report = group_accuracy_report(trained_model, Corpus(), {"women": "L0H0"})
    assert report.rows == []
    assert report.baseline_gap == 0.0


def test_group_report_by_provenance(trained_model):
    examples = [
        Example(id="1", text="all women cooks are trash", label=1, groups=["women"]),
        Example(
            id="2",
            text="all women cooks are kind",
            label=0,
            groups=["women"],
            provenance="machine",
        ),
    ]
    report = group_accuracy_report(trained_model, Corpus(examples), {"women": "L0H0"})
    assert set(report.by_provenance) == {"human", "machine"}
    assert report.by_provenance["human"][0]["n_examples"] == 1


def _summary(workdir):
    os.makedirs(workdir, exist_ok=True)
    with open(os.path.join(workdir, "model.ckpt"), "wb") as f:
        f.write(b"x")
    return RunSummary(
        fingerprints={"model": "a" * 64},
        artifacts={"checkpoint": "model.ckpt"},
        train={"accuracy": 1.0},
        heads={"crucial": ["L0H1"], "vulnerable": [], "intersection": []},
        best_heads={"women": {"head": "L0H1", "gain": 0.25}},
    )


def test_write_summary(tmp_path):
    workdir = str(tmp_path)
    path = os.path.join(workdir, "summary.json")
    write_summary(_summary(workdir), path)
    with open(path) as f:
        doc = json.load(f)
    assert doc["schema_version"] == 1
    assert doc["attack"] == {}
    assert doc["artifacts"] == {"checkpoint": "model.ckpt"}
    assert RunSummary.from_dict(doc).to_dict() == doc


def test_summary_missing_artifact(tmp_path):
    workdir = str(tmp_path)
    summary = _summary(workdir)
    summary.add_artifact("sweep_clean_csv", "sweep_clean.csv")
    with pytest.raises(IntegrityError) as e:
        write_summary(summary, os.path.join(workdir, "summary.json"))
    assert "sweep_clean_csv" in str(e.value)
    assert not os.path.exists(os.path.join(workdir, "summary.json"))


def test_summary_schema(tmp_path):
    doc = _summary(str(tmp_path)).to_dict()
    validate_summary(doc)
    for broken in (
        dict(doc, heads={"crucial": ["layer0"]}),
        dict(doc, fingerprints={"model": "xyz"}),
        dict(doc, extra={}),
        dict(doc, best_heads={"women": {"head": "L0H1"}}),
        {k: v for k, v in doc.items() if k != "groups"},
    ):
        with pytest.raises(IntegrityError):
            validate_summary(broken)


def test_summary_sections():
    with pytest.raises(ValueError):
        RunSummary(plots={})
    assert RunSummary(train={"loss": 0.1}).train == {"loss": 0.1}
