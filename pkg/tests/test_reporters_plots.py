import json
import xml.etree.ElementTree as ET

import numpy as np

from conftest import converged_record, failed_record
from tcadloop.plots import bands_figure, iv_figure, plot_bands, plot_iv, plot_trajectory, trajectory_csv, trajectory_figure
from tcadloop.postproc import PerformanceMetrics
from tcadloop.reporters import metrics_document, summary_table, table_rows, write_json, write_markdown
from tcadloop.surrogate import simulate_iv

SVG = "{http://www.w3.org/2000/svg}"


def _history(r1, targets):
    return [
        converged_record(0, r1.replace(gate_length=10.0), 4.23e-3, 3.40e-5, 286.72, targets),
        converged_record(1, r1.replace(gate_length=12.0), 3.0e-3, 1.0e-7, 90.0, targets),
        failed_record(2, r1.replace(gate_length=8.0), recovery=False),
        converged_record(3, r1, 2.31e-3, 8.26e-9, 60.38, targets, recovery=True),
    ]


def _report(targets):
    def summary(index, ion, ioff, ss):
        return {"index": index, "params": {"gate_length": 14.0}, "metrics": PerformanceMetrics.from_currents(ion, ioff, ss).judged(targets).to_dict()}

    return {
        "termination": "SUCCESS",
        "agent": "llm",
        "guidance": "quantitative",
        "iterations": 4,
        "best_index": 3,
        "score_explanation": ["score total = 0.0000"],
        "non_convergent": [2],
        "recovery": [3],
        "targets": targets.to_dict(),
        "before": summary(0, 4.23e-3, 3.40e-5, 286.72),
        "after": summary(3, 2.31e-3, 8.26e-9, 60.38),
    }


def test_trajectory_csv_leaves_gaps(r1, targets):
    lines = trajectory_csv(_history(r1, targets)).splitlines()
    assert lines[0] == "index,status,ss_mv_dec,ioff_a_per_um,ion_a_per_um,onoff_log10,meets_all,recovery"
    assert lines[3] == "2,non-convergent,,,,,,false"
    assert lines[4].startswith("3,converged,60.38,")
    assert lines[4].endswith(",true,true")


def test_trajectory_figure_breaks_lines_at_failures(r1, targets):
    fig = trajectory_figure(_history(r1, targets), targets)
    assert [ax.get_ylabel() for ax in fig.axes] == ["SS (mV/dec)", "Ioff (A/um)", "Ion (A/um)", "log10(Ion/Ioff)"]
    assert [ax.get_yscale() for ax in fig.axes] == ["linear", "log", "log", "linear"]
    for ax, target in zip(fig.axes, (targets.ss_max, targets.ioff_max, targets.ion_min, targets.onoff_min)):
        data, limit = ax.get_lines()
        assert list(data.get_xdata()) == [0, 1, 2, 3]
        ys = np.asarray(data.get_ydata(), dtype=float)
        assert np.isnan(ys[2]) and not np.isnan(ys[[0, 1, 3]]).any()
        assert list(limit.get_ydata()) == [target, target]
    assert list(fig.axes[0].get_lines()[0].get_ydata()[[0, 3]]) == [286.72, 60.38]


def test_trajectory_files(tmp_path, r1, targets):
    csv_path, svg_path = plot_trajectory(_history(r1, targets), targets, tmp_path / "plots" / "trajectory")
    assert csv_path.name == "trajectory.csv"
    assert ET.fromstring(svg_path.read_bytes()).tag == f"{SVG}svg"


def test_iv_plot(tmp_path, r1, idvg):
    iv = simulate_iv(r1, idvg).iv
    (line,) = iv_figure(iv).axes[0].get_lines()
    assert len(line.get_xdata()) == len(iv.vg)
    assert line.get_ydata()[-1] == iv.id[-1]

    csv_path, svg_path = plot_iv(iv, tmp_path / "iv")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "vg,id"
    assert len(lines) == len(iv.vg) + 1
    assert float(lines[-1].split(",")[1]) == iv.id[-1]
    assert svg_path.is_file()


def test_band_plot(tmp_path, r1, idvg):
    outcome = simulate_iv(r1, idvg)
    lines = bands_figure(outcome.bands_on, outcome.bands_off).axes[0].get_lines()
    assert [l.get_label() for l in lines] == ["Ec ON", "Ev ON", "Ec OFF", "Ev OFF"]
    assert all(len(l.get_xdata()) == 201 for l in lines)
    assert list(lines[0].get_ydata()) == list(outcome.bands_on.ec)

    csv_path, _ = plot_bands(outcome.bands_on, outcome.bands_off, tmp_path / "bands")
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "bias,x,ec,ev,efn,efp"
    assert len(rows) == 1 + 2 * 201
    assert rows[1].startswith("ON,") and rows[-1].startswith("OFF,")


def test_summary_table(targets):
    rows = table_rows(_report(targets))
    assert rows[0] == ["SS (mV/dec)", "<= 72.00", "286.72", "60.38", "pass"]
    assert rows[1][1] == "<= 1.00e-8"
    text = summary_table(_report(targets))
    header, rule = text.splitlines()[:2]
    assert header.split() == ["metric", "spec", "before", "after", "meets", "spec"]
    assert set(rule.replace(" ", "")) == {"-"}
    assert len(text.splitlines()) == 6


def test_summary_without_converged_design(targets):
    report = dict(_report(targets), after=None)
    assert [row[-1] for row in table_rows(report)] == ["n/a"] * 4


def test_markdown_report(tmp_path, targets):
    path = write_markdown(_report(targets), tmp_path / "out" / "report.md")
    text = path.read_text()
    assert text.startswith("# TCAD Optimization Report")
    assert "**Termination:** `SUCCESS`" in text
    assert "| On-off ratio | >= 4.90 | 2.09 | 5.45 | pass |" in text
    assert "- non-convergent iterations: 2" in text
    assert "- recovery proposals: 3" in text


def test_json_report_is_sorted(tmp_path):
    path = write_json({"b": 1, "a": [1, 2]}, tmp_path / "r.json")
    assert path.read_text().index('"a"') < path.read_text().index('"b"')
    assert json.loads(metrics_document({"ss_mv_dec": 65.0}, {"vdd": 0.65})) == {"ss_mv_dec": 65.0, "vdd": 0.65}
