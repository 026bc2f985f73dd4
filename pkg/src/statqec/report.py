"""Report rendering: delimited experiment records and companion figures.

Numbers arrive finished; this module only lays them out.  The delimited
text (CSV or JSON lines) is the artifact of record and stays byte
stable across reruns.  Figures rendered next to it use the Agg backend
so headless pipelines can produce them without a display.
"""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be picked first
import numpy as np  # noqa: E402

from .errors import InvalidInput  # noqa: E402
from .sweep import BoundaryFit, BoundaryScan, cells_to_csv  # noqa: E402

FORMATS = ("csv", "json-lines")

_AXIS_LABELS = {
    "p_bf": "bitflip rate",
    "p_m": "readout error rate",
    "length": "L",
    "t_f": "rounds",
}


def cells_to_json_lines(cells) -> str:
    """One JSON object per line, fields matching the CSV columns."""
    lines = []
    for c in cells:
        lines.append(json.dumps({
            "p_bf": c.p_bf, "p_m": c.p_m, "L": c.length, "t_f": c.t_f,
            "trials": c.trials, "failures": c.failures, "rate": c.rate,
            "err_low": c.err_low, "err_high": c.err_high,
            "decoder": c.decoder, "seed": c.seed,
        }, sort_keys=True))
    return "\n".join(lines) + "\n"


def render_cells(cells, fmt: str = "csv") -> str:
    if fmt == "csv":
        return cells_to_csv(cells)
    if fmt == "json-lines":
        return cells_to_json_lines(cells)
    raise InvalidInput(f"unknown output format {fmt!r}, want one of {FORMATS}")


def write_cells(cells, path, fmt: str = "csv") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(render_cells(cells, fmt))


def _finish(ax):
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    ax.figure.tight_layout()


def failure_curves_figure(cells, x_field: str = "p_bf",
                          group_field: str = "length", logy: bool = False):
    """Failure rate against one noise axis, one errorbar line per group."""
    cells = list(cells)
    if not cells:
        raise InvalidInput("no cells to plot")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for g in sorted({getattr(c, group_field) for c in cells}):
        col = sorted((c for c in cells if getattr(c, group_field) == g),
                     key=lambda c: getattr(c, x_field))
        xs = [getattr(c, x_field) for c in col]
        rates = [c.rate for c in col]
        below = [max(c.rate - c.err_low, 0.0) for c in col]
        above = [max(c.err_high - c.rate, 0.0) for c in col]
        name = _AXIS_LABELS.get(group_field, group_field)
        ax.errorbar(xs, rates, yerr=[below, above], marker="o", capsize=2,
                    label=f"{name}={g}")
    ax.set_xlabel(_AXIS_LABELS.get(x_field, x_field))
    ax.set_ylabel("failure rate")
    if logy:
        ax.set_yscale("log")
    _finish(ax)
    return fig


def decay_figure(cells, reference=None):
    """Failure decay against the number of rounds on a log scale.

    reference: optional (t_f, rate) pairs for an exact curve to draw
    under the sampled points.
    """
    fig = failure_curves_figure(cells, x_field="t_f", logy=True)
    if reference:
        ax = fig.axes[0]
        xs, ys = zip(*sorted(reference))
        ax.plot(xs, ys, "k--", label="exact")
        _finish(ax)
    return fig


def bound_overlay_figure(cells, bound_points, x_field: str = "p_bf"):
    """Sampled failure rates with a closed-form envelope drawn over them."""
    fig = failure_curves_figure(cells, x_field=x_field)
    ax = fig.axes[0]
    xs, ys = zip(*sorted(bound_points))
    ax.plot(xs, ys, "k--", label="cluster bound")
    _finish(ax)
    return fig


def boundary_figure(scan: BoundaryScan, fit: BoundaryFit | None = None):
    """Detected jump locations over the bitflip axis, with optional fits.

    Columns without a confirmed jump sit on the axis as open markers so
    the covered grid stays visible.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    detected = [p for p in scan.boundary if p.p_m is not None]
    missing = [p for p in scan.boundary if p.p_m is None]
    if detected:
        yerr = [[p.p_m - p.bracket[0] for p in detected],
                [p.bracket[1] - p.p_m for p in detected]]
        ax.errorbar([p.p_bf for p in detected], [p.p_m for p in detected],
                    yerr=yerr, fmt="o", capsize=3, label="detected jump")
    if missing:
        ax.plot([p.p_bf for p in missing], [0.0] * len(missing), "v",
                mfc="none", label="no jump found")
    if fit is not None:
        hi = max(p.p_bf for p in scan.boundary)
        xs = np.linspace(0.0, 1.05 * hi, 256)
        ax.plot(xs, 0.5 - fit.c * np.sqrt(xs), "-",
                label=f"1/2 - {fit.c:.3f} sqrt(p)")
        ax.plot(xs, 0.5 - fit.linear_slope * xs, "--",
                label=f"1/2 - {fit.linear_slope:.2f} p")
    ax.set_xlabel("bitflip rate")
    ax.set_ylabel("readout error rate at the jump")
    ax.set_ylim(0.0, 0.55)
    _finish(ax)
    return fig


def save_figure(fig, path, dpi: int = 150) -> None:
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
