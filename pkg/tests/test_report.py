import json

import pytest

from statqec.errors import InvalidInput
from statqec.report import (
    FORMATS,
    bound_overlay_figure,
    boundary_figure,
    cells_to_json_lines,
    decay_figure,
    failure_curves_figure,
    render_cells,
    save_figure,
    write_cells,
)
from statqec.sweep import (
    BoundaryFit,
    BoundaryPoint,
    BoundaryScan,
    BoundaryScanConfig,
    SweepCell,
    cells_to_csv,
)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def cell(**kw):
    base = dict(p_bf=0.1, p_m=0.05, length=5, t_f=2, trials=100, failures=7,
                rate=0.07, decoder="mwpm", seed=0)
    base.update(kw)
    base.setdefault("err_low", max(base["rate"] - 0.05, 0.0))
    base.setdefault("err_high", min(base["rate"] + 0.05, 1.0))
    return SweepCell(**base)


CELLS = (
    cell(p_bf=0.1, length=5),
    cell(p_bf=0.2, length=5, failures=20, rate=0.2),
    cell(p_bf=0.1, length=7, failures=4, rate=0.04),
    cell(p_bf=0.2, length=7, failures=25, rate=0.25),
)

SCAN = BoundaryScan(
    config=BoundaryScanConfig(length=9, p_bf_columns=(0.01, 0.05)),
    cells=CELLS,
    boundary=(
        BoundaryPoint(p_bf=0.01, t_f=25, level=0.02, p_m=None, bracket=None),
        BoundaryPoint(p_bf=0.05, t_f=19, level=0.08, p_m=0.33,
                      bracket=(0.3, 0.36)),
    ),
)

FIT = BoundaryFit(c=0.7, sqrt_ssr=1e-4, linear_slope=2.5, linear_ssr=2e-3,
                  free_slope=-1.0, free_intercept=0.4, free_ssr=2e-4,
                  window=(0.05,))


class TestFormats:
    def test_csv_delegates_to_sweep_schema(self):
        assert render_cells(CELLS, "csv") == cells_to_csv(CELLS)

    def test_json_lines_roundtrip(self):
        text = cells_to_json_lines(CELLS)
        rows = [json.loads(line) for line in text.splitlines()]
        assert len(rows) == len(CELLS)
        assert rows[0]["L"] == 5 and rows[0]["rate"] == 0.07
        assert rows[0]["err_low"] == pytest.approx(0.02)
        assert rows[-1]["decoder"] == "mwpm"
        assert text.endswith("\n")

    def test_unknown_format_rejected(self):
        with pytest.raises(InvalidInput):
            render_cells(CELLS, "parquet")
        assert "csv" in FORMATS and "json-lines" in FORMATS

    def test_write_cells(self, tmp_path):
        out = tmp_path / "cells.csv"
        write_cells(CELLS, out)
        assert out.read_text() == cells_to_csv(CELLS)
        out2 = tmp_path / "cells.jsonl"
        write_cells(CELLS, out2, fmt="json-lines")
        assert out2.read_text() == cells_to_json_lines(CELLS)


class TestFigures:
    def test_failure_curves_grouping(self, tmp_path):
        fig = failure_curves_figure(CELLS)
        ax = fig.axes[0]
        labels = ax.get_legend_handles_labels()[1]
        assert labels == ["L=5", "L=7"]
        assert ax.get_xlabel() == "bitflip rate"
        path = tmp_path / "curves.png"
        save_figure(fig, path)
        assert path.read_bytes()[:8] == PNG_MAGIC

    def test_empty_cells_rejected(self):
        with pytest.raises(InvalidInput):
            failure_curves_figure([])

    def test_decay_with_reference(self, tmp_path):
        cells = [cell(t_f=t, p_m=0.1, rate=r, failures=int(100 * r))
                 for t, r in [(2, 0.2), (4, 0.1), (8, 0.03)]]
        fig = decay_figure(cells, reference=[(2, 0.18), (4, 0.09), (8, 0.025)])
        ax = fig.axes[0]
        assert ax.get_yscale() == "log"
        assert "exact" in ax.get_legend_handles_labels()[1]
        save_figure(fig, tmp_path / "decay.png")

    def test_bound_overlay(self, tmp_path):
        fig = bound_overlay_figure(CELLS, [(0.1, 0.3), (0.2, 0.6)])
        labels = fig.axes[0].get_legend_handles_labels()[1]
        assert "cluster bound" in labels
        save_figure(fig, tmp_path / "bound.png")

    def test_boundary_figure(self, tmp_path):
        fig = boundary_figure(SCAN, fit=FIT)
        labels = fig.axes[0].get_legend_handles_labels()[1]
        assert "detected jump" in labels
        assert "no jump found" in labels
        assert any("sqrt" in lab for lab in labels)
        save_figure(fig, tmp_path / "boundary.png")
        assert (tmp_path / "boundary.png").stat().st_size > 0

    def test_boundary_figure_without_fit(self, tmp_path):
        fig = boundary_figure(SCAN)
        labels = fig.axes[0].get_legend_handles_labels()[1]
        assert not any("sqrt" in lab for lab in labels)
        save_figure(fig, tmp_path / "plain.png")
