"""
Figures of merit from a transfer curve, spec verdicts, and the JSON result
document handed to the optimization agent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .errors import DegenerateCurve, InvariantError, NonMonotonic, RangeError, SchemaError
from .params import SpecTargets
from .surrogate import BandDiagram, IVCurve

SCHEMA_VERSION = "tcadloop.result.v1"
SCHEMA_PATH = Path(__file__).parent / "schemas" / "result.v1.json"

# subthreshold window: id in [WINDOW_LOW * ioff, ion / WINDOW_HIGH]
WINDOW_LOW = 3.0
WINDOW_HIGH = 30.0
MIN_WINDOW_POINTS = 3

METRIC_NAMES = ("ss", "ioff", "ion", "onoff")


def onoff_ratio(ion: float, ioff: float) -> float:
    """On-off ratio as log10(Ion/Ioff)."""
    return math.log10(ion / ioff)


@dataclass(frozen=True)
class PerformanceMetrics:
    ion: float  # A/um
    ioff: float  # A/um
    ss: float  # mV/dec
    onoff: float  # log10(ion/ioff)
    verdicts: Mapping[str, bool] = field(default_factory=dict)
    meets_all: bool = False

    def __post_init__(self) -> None:
        if not (self.ion > 0 and self.ioff > 0):
            raise InvariantError(f"currents must be > 0, got ion={self.ion!r} ioff={self.ioff!r}")
        if not self.ion > self.ioff:
            raise InvariantError(f"ion {self.ion:.3e} must exceed ioff {self.ioff:.3e}")
        if not self.ss > 0:
            raise InvariantError(f"ss must be > 0, got {self.ss!r}")

    @classmethod
    def from_currents(cls, ion: float, ioff: float, ss: float) -> "PerformanceMetrics":
        return cls(ion=ion, ioff=ioff, ss=ss, onoff=onoff_ratio(ion, ioff))

    def judged(self, targets: SpecTargets) -> "PerformanceMetrics":
        verdict = check_spec(self, targets)
        return PerformanceMetrics(self.ion, self.ioff, self.ss, self.onoff, verdict.verdicts, verdict.meets_all)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ion_a_per_um": self.ion,
            "ioff_a_per_um": self.ioff,
            "ss_mv_dec": self.ss,
            "onoff_log10": self.onoff,
            "verdicts": dict(self.verdicts),
            "meets_all": self.meets_all,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PerformanceMetrics":
        return cls(
            ion=data["ion_a_per_um"],
            ioff=data["ioff_a_per_um"],
            ss=data["ss_mv_dec"],
            onoff=data["onoff_log10"],
            verdicts=dict(data.get("verdicts") or {}),
            meets_all=bool(data.get("meets_all", False)),
        )


@dataclass(frozen=True)
class SpecVerdict:
    verdicts: Mapping[str, bool]
    meets_all: bool


def check_spec(m: PerformanceMetrics, t: SpecTargets) -> SpecVerdict:
    """Inclusive comparison against every target, each judged on its own."""
    verdicts = {
        "ss": m.ss <= t.ss_max,
        "ioff": m.ioff <= t.ioff_max,
        "ion": m.ion >= t.ion_min,
        "onoff": m.onoff >= t.onoff_min,
    }
    return SpecVerdict(verdicts, all(verdicts.values()))


# bias readings within this of a grid point count as on the grid
BIAS_TOL = 1e-9


def _value_at(vg: np.ndarray, current: np.ndarray, x: float) -> float:
    exact = np.flatnonzero(np.abs(vg - x) <= BIAS_TOL)
    if exact.size:
        return float(current[exact[0]])
    if not vg[0] < x < vg[-1]:
        raise RangeError(f"vg={x:g} V lies outside the sweep {vg[0]:g}..{vg[-1]:g} V")
    # exponential below threshold, so interpolate log10(id)
    return float(10.0 ** np.interp(x, vg, np.log10(current)))


def extract_metrics(iv: IVCurve, vdd: float, targets: Optional[SpecTargets] = None) -> PerformanceMetrics:
    """
    Ioff at vg = 0, Ion at vg = vdd, SS as the smallest local swing inside the
    subthreshold window id in [3 Ioff, Ion/30].

    Verdicts are filled against ``targets`` (IRDS-2024 defaults when omitted).
    """
    vg = np.asarray(iv.vg, dtype=float)
    current = np.asarray(iv.id, dtype=float)
    if vg[0] > BIAS_TOL or vg[-1] < vdd - BIAS_TOL:
        raise RangeError(f"sweep {vg[0]:g}..{vg[-1]:g} V does not cover 0..{vdd:g} V")
    if not math.isclose(iv.vd, vdd, rel_tol=0.0, abs_tol=1e-9):
        raise RangeError(f"curve drain bias {iv.vd:g} V differs from vdd {vdd:g} V")

    ioff = _value_at(vg, current, 0.0)
    ion = _value_at(vg, current, vdd)
    if not ion > ioff:
        raise DegenerateCurve(f"ion {ion:.3e} does not exceed ioff {ioff:.3e}")

    window = (current >= WINDOW_LOW * ioff) & (current <= ion / WINDOW_HIGH)
    count = int(window.sum())
    if count < MIN_WINDOW_POINTS:
        raise DegenerateCurve(
            f"subthreshold window [{WINDOW_LOW:g} ioff, ion/{WINDOW_HIGH:g}] holds {count} points, "
            f"need {MIN_WINDOW_POINTS}"
        )

    wv = vg[window]
    dlog = np.diff(np.log10(current[window]))
    if np.any(dlog <= 0):
        bad = float(wv[int(np.argmax(dlog <= 0))])
        raise NonMonotonic(f"current does not increase inside the subthreshold window near vg={bad:g} V")
    swings = np.diff(wv) / dlog * 1000.0
    if np.any(swings <= 0):
        raise NonMonotonic("non-positive local swing inside the subthreshold window")

    metrics = PerformanceMetrics(ion=ion, ioff=ioff, ss=float(swings.min()), onoff=onoff_ratio(ion, ioff))
    return metrics.judged(targets if targets is not None else SpecTargets())


# ---------------------------------------------------------------------------
# Result document
# ---------------------------------------------------------------------------


def _band_summary(on: BandDiagram, off: BandDiagram) -> Dict[str, Any]:
    return {
        "barrier_on_ev": on.barrier_height,
        "barrier_off_ev": off.barrier_height,
        "on": on.to_dict(),
        "off": off.to_dict(),
    }


def package_results(
    m: PerformanceMetrics,
    iv: IVCurve,
    bands: Optional[Tuple[BandDiagram, BandDiagram]] = None,
    targets: Optional[SpecTargets] = None,
) -> Dict[str, Any]:
    """``bands`` is (ON, OFF), or None when the backend has no band data."""
    doc: Dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    doc.update(m.to_dict())
    doc["targets"] = None if targets is None else targets.to_dict()
    doc["iv"] = iv.to_dict()
    doc["bands"] = None if bands is None else _band_summary(*bands)
    return doc


@dataclass(frozen=True)
class LoadedResults:
    metrics: PerformanceMetrics
    iv: IVCurve
    bands: Optional[Tuple[BandDiagram, BandDiagram]]


def load_results(source: Any) -> LoadedResults:
    """Read a result document from a dict, a JSON string or a path."""
    if isinstance(source, Mapping):
        doc = dict(source)
    elif isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        doc = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        doc = json.loads(source)

    errors = validate_result_document(doc)
    if errors:
        raise SchemaError("; ".join(errors))
    bands = None
    if doc["bands"] is not None:
        bands = (BandDiagram.from_dict(doc["bands"]["on"]), BandDiagram.from_dict(doc["bands"]["off"]))
    return LoadedResults(PerformanceMetrics.from_dict(doc), IVCurve.from_dict(doc["iv"]), bands)


def load_schema() -> Dict[str, Any]:
    return json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))


_TYPES = {
    "object": dict,
    "array": list,
    "string": str,
    "boolean": bool,
    "null": type(None),
    "number": (int, float),
    "integer": int,
}


def _is_type(value: Any, name: str) -> bool:
    if name in ("number", "integer") and isinstance(value, bool):
        return False
    return isinstance(value, _TYPES[name])


def _check(node: Any, schema: Mapping[str, Any], path: str, errors: List[str], root: Mapping[str, Any]) -> None:
    if "$ref" in schema:
        ref = schema["$ref"]
        if not ref.startswith("#/definitions/"):
            raise ValueError(f"unsupported schema reference {ref!r}")
        schema = root["definitions"][ref.rsplit("/", 1)[-1]]
    types = schema.get("type")
    if types is not None:
        names = [types] if isinstance(types, str) else list(types)
        if not any(_is_type(node, n) for n in names):
            errors.append(f"{path or '$'} must be {' or '.join(names)}")
            return
    if "const" in schema and node != schema["const"]:
        errors.append(f"{path} must equal {schema['const']!r}")
    if "exclusiveMinimum" in schema and isinstance(node, (int, float)) and not node > schema["exclusiveMinimum"]:
        errors.append(f"{path} must be > {schema['exclusiveMinimum']}")
    if "minItems" in schema and isinstance(node, list) and len(node) < schema["minItems"]:
        errors.append(f"{path} needs at least {schema['minItems']} items")
    if isinstance(node, dict):
        for key in schema.get("required", []):
            if key not in node:
                errors.append(f"missing required key {path + '.' if path else ''}{key}")
        for key, sub in schema.get("properties", {}).items():
            if key in node:
                _check(node[key], sub, f"{path}.{key}" if path else key, errors, root)
    if isinstance(node, list) and "items" in schema:
        for i, item in enumerate(node):
            _check(item, schema["items"], f"{path}[{i}]", errors, root)


def validate_result_document(doc: Any, schema: Optional[Mapping[str, Any]] = None) -> List[str]:
    """
    Check a result document against the shipped schema.

    Covers the schema keywords the document uses (type, required, properties,
    items, const, exclusiveMinimum, minItems); unknown extra keys are allowed
    so the format can grow. Returns the list of problems, empty when valid.
    """
    errors: List[str] = []
    root = schema if schema is not None else load_schema()
    _check(doc, root, "", errors, root)
    return errors
