#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Byte-stable SVG figures.

Heatmap cells carry `id="cell-L{l}-H{h}"` and the exact CSV value in
`data-value`; the visible annotation is that value rounded for display.
"""
import html

from headguard.report.sweep_io import write_artifact

# (cool, center, warm)
PALETTES = {
    "coolwarm": ((59, 76, 192), (242, 242, 242), (180, 4, 38)),
    "bluered": ((33, 102, 172), (247, 247, 247), (178, 24, 43)),
}
CELL = 56
MARGIN_LEFT = 70
MARGIN_TOP = 50
LEGEND_WIDTH = 120
BAR_WIDTH = 22
BAR_HEIGHT = 200
BASELINE_COLOR = "#9e9e9e"
ABLATED_COLOR = "#2166ac"
SERIES = (("baseline", BASELINE_COLOR), ("ablated", ABLATED_COLOR))


def _hex(rgb):
    return "#{:02x}{:02x}{:02x}".format(*(int(round(c)) for c in rgb))


def diverging_color(value, bound, palette="coolwarm"):
    """Color of `value` on a palette centered at 0 and saturated at +/- bound."""
    cool, center, warm = PALETTES[palette]
    if bound <= 0 or value == 0:
        return _hex(center)
    t = min(abs(value) / bound, 1.0)
    end = warm if value > 0 else cool
    return _hex([c + (e - c) * t for c, e in zip(center, end)])


def _text(x, y, content, anchor="middle", size=11, extra=""):
    return (
        f'<text x="{x:.1f}" y="{y:.1f}" text-anchor="{anchor}" font-family="monospace" '
        f'font-size="{size}"{extra}>{html.escape(str(content))}</text>'
    )


def heatmap_svg(sweep, palette="coolwarm", metric="delta_accuracy", title=None):
    if palette not in PALETTES:
        raise ValueError(f"Unknown palette {palette!r}, expected one of {sorted(PALETTES)}")
    values = getattr(sweep, metric)
    num_layers, num_heads = values.shape
    low, high = float(values.min()), float(values.max())
    bound = max(abs(low), abs(high))
    width = MARGIN_LEFT + num_heads * CELL + LEGEND_WIDTH
    height = MARGIN_TOP + num_layers * CELL + 60

    if title is None:
        group = f" / {sweep.group_tag}" if sweep.group_tag else ""
        title = f"{metric} by attention head ({sweep.dataset_tag}{group})"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        _text(width / 2, 20, title, size=13),
        _text(MARGIN_LEFT + num_heads * CELL / 2, height - 12, "Head", size=12),
        _text(
            16,
            MARGIN_TOP + num_layers * CELL / 2,
            "Layer",
            size=12,
            extra=f' transform="rotate(-90 16 {MARGIN_TOP + num_layers * CELL / 2:.1f})"',
        ),
    ]
    for head in range(num_heads):
        parts.append(_text(MARGIN_LEFT + (head + 0.5) * CELL, MARGIN_TOP - 6, head))
    for layer in range(num_layers):
        parts.append(
            _text(MARGIN_LEFT - 8, MARGIN_TOP + (layer + 0.5) * CELL + 4, layer, anchor="end")
        )

    parts.append('<g id="cells">')
    for layer in range(num_layers):
        for head in range(num_heads):
            value = float(values[layer, head])
            x, y = MARGIN_LEFT + head * CELL, MARGIN_TOP + layer * CELL
            parts.append(
                f'<rect id="cell-L{layer}-H{head}" class="cell" x="{x}" y="{y}" '
                f'width="{CELL}" height="{CELL}" fill="{diverging_color(value, bound, palette)}" '
                f'stroke="#ffffff" data-value="{value!r}"/>'
            )
            parts.append(_text(x + CELL / 2, y + CELL / 2 + 4, f"{value:+.3f}", size=10))
    parts.append("</g>")

    legend_x = MARGIN_LEFT + num_heads * CELL + 20
    parts.append('<g id="legend">')
    for i, (label, value) in enumerate((("max", high), ("0", 0.0), ("min", low))):
        y = MARGIN_TOP + i * 28
        parts.append(
            f'<rect id="legend-{label}" x="{legend_x}" y="{y}" width="18" height="18" '
            f'fill="{diverging_color(value, bound, palette)}" data-value="{value!r}"/>'
        )
        parts.append(_text(legend_x + 24, y + 13, f"{label} {value:+.3f}", anchor="start", size=10))
    parts.append("</g>")

    if low == high:
        parts.append(
            _text(
                width / 2,
                MARGIN_TOP + num_layers * CELL + 30,
                f"all cells equal {low:+.3f}",
                size=10,
                extra=' id="degenerate-note"',
            )
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_heatmap_svg(sweep, path, palette="coolwarm", metric="delta_accuracy", title=None):
    return write_artifact(path, heatmap_svg(sweep, palette, metric, title))


def group_bars_svg(rows, title="Adversarial accuracy by group, with and without ablation"):
    """Paired bars per group: baseline accuracy and accuracy with the best head ablated."""
    width = MARGIN_LEFT + max(1, len(rows)) * (3 * BAR_WIDTH) + LEGEND_WIDTH
    height = MARGIN_TOP + BAR_HEIGHT + 70
    floor = MARGIN_TOP + BAR_HEIGHT
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        _text(width / 2, 20, title, size=13),
        f'<line x1="{MARGIN_LEFT}" y1="{floor}" x2="{width - LEGEND_WIDTH}" y2="{floor}" stroke="#333333"/>',
        _text(
            20,
            MARGIN_TOP + BAR_HEIGHT / 2,
            "Accuracy",
            size=12,
            extra=f' transform="rotate(-90 20 {MARGIN_TOP + BAR_HEIGHT / 2:.1f})"',
        ),
    ]
    for tick in (0.0, 0.5, 1.0):
        y = floor - tick * BAR_HEIGHT + 4
        parts.append(_text(MARGIN_LEFT - 6, y, f"{tick:.1f}", anchor="end", size=10))

    for i, row in enumerate(rows):
        x0 = MARGIN_LEFT + i * 3 * BAR_WIDTH + BAR_WIDTH / 2
        group = html.escape(str(row["group"]), quote=True)
        for j, (kind, color) in enumerate(SERIES):
            value = float(row[f"{kind}_accuracy"])
            bar = value * BAR_HEIGHT
            parts.append(
                f'<rect id="bar-{group}-{kind}" class="bar" x="{x0 + j * BAR_WIDTH:.1f}" '
                f'y="{floor - bar:.1f}" width="{BAR_WIDTH}" height="{bar:.1f}" fill="{color}" '
                f'data-value="{value!r}"/>'
            )
        parts.append(_text(x0 + BAR_WIDTH, floor + 16, row["group"], size=10))
        parts.append(_text(x0 + BAR_WIDTH, floor + 30, f"{row['gain']:+.3f}", size=9))

    legend_x = width - LEGEND_WIDTH + 16
    for j, (kind, color) in enumerate(SERIES):
        y = MARGIN_TOP + j * 22
        parts.append(f'<rect x="{legend_x}" y="{y}" width="14" height="14" fill="{color}"/>')
        parts.append(_text(legend_x + 20, y + 11, kind, anchor="start", size=10))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_group_bars_svg(rows, path, title=None):
    if title is None:
        return write_artifact(path, group_bars_svg(rows))
    return write_artifact(path, group_bars_svg(rows, title))

