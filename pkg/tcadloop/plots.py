"""
Plot files for a finished or running optimization.

Every plot is written twice: a CSV with the plotted numbers and an SVG
rendered by matplotlib. Non-convergent iterations leave empty CSV cells and
NaN gaps in the lines.
"""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Any, Sequence, Tuple

import numpy as np
from matplotlib.figure import Figure

from .history import IterationRecord
from .params import SpecTargets
from .surrogate import BandDiagram, IVCurve

log = logging.getLogger(__name__)

PLOT_KINDS = ("trajectory", "iv", "bands")

TARGET_STYLE = {"color": "tab:red", "linestyle": "--", "linewidth": 1}
BAND_COLORS = {"ON": "tab:red", "OFF": "tab:blue"}

# (metric attribute, axis label, target attribute, log scale)
TRAJECTORY_PANELS = (
    ("ss", "SS (mV/dec)", "ss_max", False),
    ("ioff", "Ioff (A/um)", "ioff_max", True),
    ("ion", "Ion (A/um)", "ion_min", True),
    ("onoff", "log10(Ion/Ioff)", "onoff_min", False),
)


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write(out: Path, csv_text: str, fig: Figure) -> Tuple[Path, Path]:
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path, svg_path = out.with_suffix(".csv"), out.with_suffix(".svg")
    csv_path.write_text(csv_text, encoding="utf-8")
    fig.savefig(svg_path, format="svg")
    log.info("plot written csv=%s svg=%s", csv_path, svg_path)
    return csv_path, svg_path


# ---------------------------------------------------------------------------
# Trajectory
# ---------------------------------------------------------------------------

TRAJECTORY_HEADER = ("index", "status", "ss_mv_dec", "ioff_a_per_um", "ion_a_per_um", "onoff_log10", "meets_all", "recovery")


def trajectory_csv(history: Sequence[IterationRecord]) -> str:
    rows = []
    for r in history:
        if r.metrics is None:
            rows.append([r.index, "non-convergent", "", "", "", "", "", str(r.recovery).lower()])
        else:
            m = r.metrics
            rows.append(
                [r.index, "converged", repr(m.ss), repr(m.ioff), repr(m.ion), repr(m.onoff), str(m.meets_all).lower(), str(r.recovery).lower()]
            )
    return _csv(TRAJECTORY_HEADER, rows)


def trajectory_figure(history: Sequence[IterationRecord], targets: SpecTargets, title: str = "Optimization trajectory") -> Figure:
    """SS, Ioff, Ion and the on-off ratio against the iteration, target as a dashed line."""
    idx = np.array([r.index for r in history])
    fig = Figure(figsize=(9, 6))
    axes = fig.subplots(2, 2, sharex=True)
    for ax, (attr, label, target_key, log_y) in zip(axes.flat, TRAJECTORY_PANELS):
        values = np.array([np.nan if r.metrics is None else getattr(r.metrics, attr) for r in history])
        ax.plot(idx, values, marker="o", markersize=3, label=attr)
        ax.axhline(getattr(targets, target_key), label="target", **TARGET_STYLE)
        if log_y:
            ax.set_yscale("log")
        ax.set_ylabel(label)
    for ax in axes[1]:
        ax.set_xlabel("iteration")
    fig.suptitle(title)
    fig.tight_layout()
    return fig


def plot_trajectory(history: Sequence[IterationRecord], targets: SpecTargets, out: str | Path) -> Tuple[Path, Path]:
    return _write(Path(out), trajectory_csv(history), trajectory_figure(history, targets))


# ---------------------------------------------------------------------------
# I-V and bands
# ---------------------------------------------------------------------------


def iv_figure(iv: IVCurve) -> Figure:
    """Id-Vg on a log current axis."""
    fig = Figure(figsize=(6, 4))
    ax = fig.subplots()
    ax.plot(iv.vg, iv.id, label="id")
    ax.set_yscale("log")
    ax.set_xlabel("Vg (V)")
    ax.set_ylabel("Id (A/um)")
    ax.set_title(f"Id-Vg at Vd = {iv.vd:g} V")
    fig.tight_layout()
    return fig


def plot_iv(iv: IVCurve, out: str | Path) -> Tuple[Path, Path]:
    csv_text = _csv(("vg", "id"), [(repr(v), repr(i)) for v, i in iv.points])
    return _write(Path(out), csv_text, iv_figure(iv))


def bands_figure(on: BandDiagram, off: BandDiagram) -> Figure:
    """Conduction and valence band along the channel for both bias points."""
    fig = Figure(figsize=(6, 4))
    ax = fig.subplots()
    for diagram in (on, off):
        color = BAND_COLORS[diagram.bias]
        ax.plot(diagram.position, diagram.ec, color=color, label=f"Ec {diagram.bias}")
        ax.plot(diagram.position, diagram.ev, color=color, linestyle=":", label=f"Ev {diagram.bias}")
    ax.set_xlabel("position (um)")
    ax.set_ylabel("energy (eV)")
    ax.set_title("Band diagram")
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    return fig


def plot_bands(on: BandDiagram, off: BandDiagram, out: str | Path) -> Tuple[Path, Path]:
    rows = []
    for diagram in (on, off):
        for x, ec, ev, efn, efp in zip(diagram.position, diagram.ec, diagram.ev, diagram.efn, diagram.efp):
            rows.append((diagram.bias, repr(x), repr(ec), repr(ev), repr(efn), repr(efp)))
    csv_text = _csv(("bias", "x", "ec", "ev", "efn", "efp"), rows)
    return _write(Path(out), csv_text, bands_figure(on, off))
