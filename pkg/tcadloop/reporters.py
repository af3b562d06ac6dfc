from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from .agent.prompts import sci

# (metric key in PerformanceMetrics.to_dict, label, target key, comparison, formatter)
TABLE_ROWS = (
    ("ss_mv_dec", "SS (mV/dec)", "ss_max", "<=", lambda v: f"{v:.2f}"),
    ("ioff_a_per_um", "Ioff (A/um)", "ioff_max", "<=", lambda v: sci(v, 2)),
    ("ion_a_per_um", "Ion (A/um)", "ion_min", ">=", lambda v: sci(v, 2)),
    ("onoff_log10", "On-off ratio", "onoff_min", ">=", lambda v: f"{v:.2f}"),
)

VERDICT_KEYS = {"ss_mv_dec": "ss", "ioff_a_per_um": "ioff", "ion_a_per_um": "ion", "onoff_log10": "onoff"}


def write_json(report: Mapping[str, Any], out_path: str | Path) -> Path:
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def _cell(record: Optional[Mapping[str, Any]], key: str, fmt) -> str:
    if record is None or record.get("metrics") is None:
        return "n/a"
    return fmt(record["metrics"][key])


def _verdict(record: Optional[Mapping[str, Any]], key: str) -> str:
    if record is None or record.get("metrics") is None:
        return "n/a"
    return "pass" if record["metrics"]["verdicts"][VERDICT_KEYS[key]] else "fail"


def table_rows(report: Mapping[str, Any]) -> List[List[str]]:
    """Metric, spec, before, after, meets-spec, one row per metric."""
    targets = report["targets"]
    before, after = report.get("before"), report.get("after")
    rows = []
    for key, label, target_key, op, fmt in TABLE_ROWS:
        rows.append([label, f"{op} {fmt(targets[target_key])}", _cell(before, key, fmt), _cell(after, key, fmt), _verdict(after, key)])
    return rows


def summary_table(report: Mapping[str, Any]) -> str:
    header = ["metric", "spec", "before", "after", "meets spec"]
    rows = [header] + table_rows(report)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def write_markdown(report: Mapping[str, Any], out_path: str | Path) -> Path:
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)

    lines = []
    lines.append("# TCAD Optimization Report")
    lines.append("")
    lines.append(f"**Termination:** `{report.get('termination')}`")
    lines.append(f"**Agent:** `{report.get('agent')}` ({report.get('guidance')} guidance)")
    lines.append(f"**Iterations:** `{report.get('iterations')}`, best at `{report.get('best_index')}`")
    lines.append("")

    lines.append("## Before / after")
    lines.append("| metric | spec | before | after | meets spec |")
    lines.append("|---|---|---|---|---|")
    for row in table_rows(report):
        lines.append("| " + " | ".join(row) + " |")
    lines.append("")

    after = report.get("after")
    if after is not None:
        lines.append("## Best design")
        for k, v in after["params"].items():
            lines.append(f"- **{k}**: `{v}`")
        lines.append("")

    explanation = report.get("score_explanation", [])
    if explanation:
        lines.append("## Score")
        for n in explanation:
            lines.append(f"- {n}")
        lines.append("")

    skipped = report.get("non_convergent", [])
    if skipped:
        lines.append("## Notes")
        lines.append(f"- non-convergent iterations: {', '.join(str(i) for i in skipped)}")
        lines.append(f"- recovery proposals: {', '.join(str(i) for i in report.get('recovery', [])) or 'none'}")
        lines.append("")

    out.write_text("\n".join(lines), encoding="utf-8")
    return out


def metrics_document(metrics: Mapping[str, Any], extra: Optional[Dict[str, Any]] = None) -> str:
    doc = dict(metrics)
    doc.update(extra or {})
    return json.dumps(doc, indent=2, sort_keys=True)
