"""
Prompt text for the reasoning agent.

Two guidance modes: ``quantitative`` spells out every target and the current
gap to it, ``qualitative`` only names the directions to move in and never
prints a target value.
"""

from __future__ import annotations

import math
from typing import List, Literal, Optional, Sequence, Tuple

from ..backend import tail
from ..errors import EmptyHistory
from ..history import IterationRecord, last_converged
from ..params import FIELD_ORDER, FIELD_UNITS, DesignParams, ParamSpace, SpecTargets
from ..postproc import PerformanceMetrics
from .proposal import params_block

GuidanceMode = Literal["qualitative", "quantitative"]
GUIDANCE_MODES: Tuple[str, ...] = ("qualitative", "quantitative")

HISTORY_WINDOW = 5
DIAGNOSTIC_LINES = 50

ROLE = (
    "You are an expert in semiconductor device physics and TCAD-based design-technology "
    "co-optimization. You are tuning an n-type stacked nanosheet FET through repeated device "
    "simulation: each round you see the simulated performance and propose the next design."
)

METRIC_DEFINITIONS = """\
## Metric definitions
- Ion (A/um): on-state drive current at Vg = Vd = Vdd. It determines switching speed and drive strength; more is better.
- Ioff (A/um): leakage current in the closed state, Vg = 0 and Vd = Vdd. It sets standby power; less is better.
- SS (mV/dec): subthreshold swing, the gate voltage needed to change the current by one decade below threshold. It quantifies the sharpness of the switching transition; the thermionic floor is about 60 mV/dec at room temperature, lower is better.
- On-off ratio: log10(Ion/Ioff), the switching window; higher is better.
Shorter gates, thicker gate oxide and lower channel doping weaken gate control (worse SS, more leakage, stronger drain-induced barrier lowering). A higher gate workfunction raises the threshold voltage, trading Ion for lower Ioff. More or wider sheets raise the current per footprint."""

OUTPUT_CONTRACT = """\
## Output format
Reply with a single JSON object and nothing else. It must contain exactly these keys:
{keys}
each a plain number in the units of the parameter table, plus "rationale", a short string explaining the change.
Do not use units inside the numbers, do not omit keys, do not add other keys."""

FORMAT_REMINDER = (
    "Your previous reply could not be used. Reply again with exactly one JSON object holding every "
    "design parameter key as a plain number and a \"rationale\" string. No other text."
)


def sci(value: float, digits: int) -> str:
    """Scientific notation without exponent padding: sci(1e-8, 1) == '1.0e-8'."""
    mantissa, exponent = f"{value:.{digits}e}".split("e")
    return f"{mantissa}e{int(exponent)}"


def _fmt_value(name: str, value: float) -> str:
    if name in ("channel_doping", "sd_doping"):
        return sci(value, 3)
    return f"{value:g}"


def parameter_table(space: ParamSpace) -> str:
    lines = [
        "## Design parameter space",
        "| parameter | unit | lower | upper | scale |",
        "|---|---|---|---|---|",
    ]
    for name in FIELD_ORDER:
        b = space.bounds[name]
        scale = "integer" if b.integer else b.scale
        lines.append(
            f"| {name} | {FIELD_UNITS[name]} | {_fmt_value(name, b.lower)} | {_fmt_value(name, b.upper)} | {scale} |"
        )
    return "\n".join(lines)


def metrics_line(m: PerformanceMetrics) -> str:
    return (
        f"Ion = {sci(m.ion, 3)} A/um, Ioff = {sci(m.ioff, 3)} A/um, "
        f"SS = {m.ss:.2f} mV/dec, on-off ratio = {m.onoff:.3f}"
    )


def _record_block(record: IterationRecord, include_bands: bool) -> List[str]:
    lines = [f"### Iteration {record.index}", "Parameters:", "```json", params_block(record.params), "```"]
    if record.metrics is not None:
        lines.append(f"Metrics: {metrics_line(record.metrics)}")
        if include_bands and getattr(record.outcome, "bands_on", None) is not None:
            on, off = record.outcome.bands_on, record.outcome.bands_off
            lines.append(
                f"Conduction-band barrier: ON {on.barrier_height:.3f} eV, OFF {off.barrier_height:.3f} eV"
            )
    else:
        first = record.outcome.diagnostic.strip().splitlines()[:1]
        lines.append(f"Outcome: non-convergent ({first[0] if first else 'no diagnostic'})")
    return lines


def _gap_lines(m: PerformanceMetrics, t: SpecTargets) -> List[str]:
    lines = []

    diff = m.ss - t.ss_max
    state = "fail" if diff > 0 else "pass"
    where = "above" if diff > 0 else "below"
    lines.append(
        f"- SS: current {m.ss:.2f} mV/dec, target <= {t.ss_max:g} mV/dec, "
        f"gap {abs(diff):.2f} mV/dec {where} target ({state})"
    )

    dec = math.log10(m.ioff / t.ioff_max)
    state = "fail" if dec > 0 else "pass"
    where = "above" if dec > 0 else "below"
    lines.append(
        f"- Ioff: current {sci(m.ioff, 3)} A/um, target <= {sci(t.ioff_max, 1)} A/um, "
        f"gap {abs(dec):.2f} decades {where} target ({state})"
    )

    dec = math.log10(m.ion / t.ion_min)
    state = "pass" if dec >= 0 else "fail"
    where = "above" if dec >= 0 else "below"
    lines.append(
        f"- Ion: current {sci(m.ion, 3)} A/um, target >= {sci(t.ion_min, 2)} A/um, "
        f"gap {abs(dec):.2f} decades {where} target ({state})"
    )

    diff = m.onoff - t.onoff_min
    state = "pass" if diff >= 0 else "fail"
    where = "above" if diff >= 0 else "below"
    lines.append(
        f"- On-off ratio: current {m.onoff:.2f}, target >= {t.onoff_min:.2f}, "
        f"gap {abs(diff):.2f} {where} target ({state})"
    )
    return lines


def _objective(history: Sequence[IterationRecord], targets: SpecTargets, mode: str) -> List[str]:
    lines = ["## Objective"]
    if mode == "quantitative":
        lines.append("Meet every specification target at the same time. Numeric targets and current gaps:")
        latest = last_converged(history)
        if latest is None or latest.metrics is None:
            lines.append(
                f"- SS <= {targets.ss_max:g} mV/dec; Ioff <= {sci(targets.ioff_max, 1)} A/um; "
                f"Ion >= {sci(targets.ion_min, 2)} A/um; on-off ratio >= {targets.onoff_min:.2f}"
            )
            lines.append("No design has converged yet.")
        else:
            lines.append(f"(measured at iteration {latest.index})")
            lines.extend(_gap_lines(latest.metrics, targets))
        lines.append("Close the largest gaps first, but do not give away a target that already passes.")
    elif mode == "qualitative":
        lines.append(
            "Improve the device in these directions: increase Ion, decrease Ioff, reduce SS and "
            "widen the on-off ratio. Balance the trade-offs between drive current and leakage."
        )
    else:
        raise ValueError(f"unknown guidance mode {mode!r}, expected one of {list(GUIDANCE_MODES)}")
    return lines


def output_contract() -> str:
    return OUTPUT_CONTRACT.format(keys=", ".join(FIELD_ORDER))


def build_prompt(
    history: Sequence[IterationRecord],
    space: ParamSpace,
    targets: SpecTargets,
    mode: str,
    *,
    window: int = HISTORY_WINDOW,
    include_bands: bool = False,
) -> str:
    if not history:
        raise EmptyHistory("the prompt needs at least one evaluated design")

    recent = list(history)[-window:]
    lines = [ROLE, "", parameter_table(space), ""]
    lines.append(f"## Recent iterations (last {len(recent)} of {len(history)})")
    for record in recent:
        lines.extend(_record_block(record, include_bands))
        lines.append("")
    lines.append(METRIC_DEFINITIONS)
    lines.append("")
    lines.extend(_objective(history, targets, mode))
    lines.append("")
    lines.append(output_contract())
    return "\n".join(lines) + "\n"


def build_recovery_prompt(
    last_good: Optional[IterationRecord],
    failed: DesignParams,
    diagnostic: str,
    space: ParamSpace,
    *,
    seed: Optional[DesignParams] = None,
    failed_index: Optional[int] = None,
) -> str:
    """
    Ask for a design between the failed point and the last convergent one.

    With no convergent record yet, the seed design stands in for it.
    """
    which = "The last proposed design" if failed_index is None else f"The design of iteration {failed_index}"
    if last_good is not None:
        good_params = last_good.params
        good_title = f"## Last convergent design (iteration {last_good.index})"
    elif seed is not None:
        good_params = seed
        good_title = "## Last convergent design (none converged yet; initial seed design)"
    else:
        raise ValueError("recovery needs a convergent record or the seed design")

    lines = [
        ROLE,
        "",
        f"{which} did not converge in the device simulator. Recover from it.",
        "",
        good_title,
        "```json",
        params_block(good_params),
        "```",
    ]
    if last_good is not None and last_good.metrics is not None:
        lines.append(f"Metrics: {metrics_line(last_good.metrics)}")
    lines += [
        "",
        "## Failed design",
        "```json",
        params_block(failed),
        "```",
        "",
        f"## Simulator diagnostic (last {DIAGNOSTIC_LINES} lines)",
        "```",
        tail(diagnostic, DIAGNOSTIC_LINES),
        "```",
        "",
        "## Task",
        "Propose a design between the failed design and the last convergent design: move the parameters "
        "that changed back toward their convergent values, far enough to restore convergence, while keeping "
        "the improvement the failed design was aiming for.",
        "",
        parameter_table(space),
        "",
        output_contract(),
    ]
    return "\n".join(lines) + "\n"
