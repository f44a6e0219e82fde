"""SVG timelines: ground truth band above, prediction band below."""

from __future__ import annotations

import warnings
import xml.etree.ElementTree as ET

from .metrics import extract_segments

BACKGROUND_COLOR = "#9e9e9e"
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#17becf", "#bcbd22", "#393b79", "#637939", "#843c39",
)


def class_colors(k):
    """Color per class index; background grey, actions cycle the palette."""
    if k - 1 > len(PALETTE):
        warnings.warn(f"{k - 1} action classes exceed the {len(PALETTE)}-color palette; colors repeat",
                      stacklevel=2)
    return [BACKGROUND_COLOR] + [PALETTE[i % len(PALETTE)] for i in range(k - 1)]


def _band(labels, colors, px_per_frame, height):
    g = ET.Element("g")
    for seg in extract_segments(labels):
        ET.SubElement(g, "rect", x=f"{seg.start * px_per_frame:g}", y="0",
                      width=f"{seg.length * px_per_frame:g}", height=f"{height:g}",
                      fill=colors[seg.cls])
    return g


def timeline_svg(gt, pred, k, class_names=None, px_per_frame=2.0, band_height=24.0, title=None):
    if len(gt) != len(pred):
        raise ValueError(f"ground truth has {len(gt)} frames, prediction {len(pred)}")
    colors = class_colors(k)
    names = class_names or [str(i) for i in range(k)]
    label_w = 90.0
    width = label_w + len(gt) * px_per_frame + 10
    top = 24.0 if title else 8.0
    gap = 8.0
    legend_y = top + 2 * band_height + gap + 16
    rows = (k + 5) // 6
    height = legend_y + rows * 18 + 8

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                     width=f"{width:g}", height=f"{height:g}", viewBox=f"0 0 {width:g} {height:g}")
    svg.set("font-family", "sans-serif")
    svg.set("font-size", "11")
    if title:
        ET.SubElement(svg, "text", x="4", y="15").text = title
    for i, (name, labels) in enumerate((("ground truth", gt), ("prediction", pred))):
        y = top + i * (band_height + gap)
        ET.SubElement(svg, "text", x="4", y=f"{y + band_height / 2 + 4:g}").text = name
        band = _band(labels, colors, px_per_frame, band_height)
        band.set("transform", f"translate({label_w:g},{y:g})")
        band.set("class", "gt" if i == 0 else "pred")
        svg.append(band)

    for c in range(k):
        x = 4 + (c % 6) * 110
        y = legend_y + (c // 6) * 18
        ET.SubElement(svg, "rect", x=f"{x:g}", y=f"{y - 10:g}", width="12", height="12", fill=colors[c])
        ET.SubElement(svg, "text", x=f"{x + 16:g}", y=f"{y:g}").text = names[c]
    return ET.tostring(svg, encoding="unicode")


def write_timeline(path, gt, pred, k, class_names=None, **kwargs):
    with open(path, "w") as fh:
        fh.write('<?xml version="1.0" encoding="UTF-8"?>\n')
        fh.write(timeline_svg(gt, pred, k, class_names, **kwargs))
        fh.write("\n")
