"""SVG line plots of diagnostic time series."""

from __future__ import annotations

import xml.etree.ElementTree as ET

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# keeps log plots finite when a series decays to exact zero
LOG_FLOOR = 1e-300
# SVG ids of data lines; matplotlib's own groups are named line2d_*, patch_*, ...
GID_PREFIX = "series:"


def plot_lines(path, t, series: dict, title: str = "", logy: bool = False, xlabel: str = "t"):
    """One line per entry of ``series``; each line carries its label as SVG id."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for label, values in series.items():
        y = np.asarray(values, dtype=float)
        if logy:
            y = np.maximum(np.abs(y), LOG_FLOOR)
        (line,) = ax.plot(t, y, lw=1.2, label=label)
        line.set_gid(GID_PREFIX + label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    if series:
        ax.legend(fontsize=8, loc="best")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def svg_line_ids(path) -> list:
    """Series labels of the plotted lines in an SVG written by :func:`plot_lines`."""
    ids = []
    for elem in ET.parse(path).iter():
        gid = elem.get("id") or ""
        if elem.tag.endswith("}g") and gid.startswith(GID_PREFIX) and any(
                child.tag.endswith("}path") for child in elem):
            ids.append(gid[len(GID_PREFIX):])
    return ids
