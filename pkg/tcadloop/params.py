"""
Design-point, parameter-space and specification types.

A DesignParams is the flat JSON object agents read and write: snake_case
keys, lengths in nm, doping in cm^-3, workfunction in eV, vdd in V.
ParamSpace bounds every field; SpecTargets holds the IRDS-2024 figures the
loop optimizes against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Mapping, Optional, Tuple

from .errors import ConfigError, SchemaError, UnrepairableParams

FIELD_ORDER: Tuple[str, ...] = (
    "gate_length",
    "sheet_width",
    "sheet_thickness",
    "num_sheets",
    "vertical_pitch",
    "eot",
    "gate_workfunction",
    "channel_doping",
    "sd_doping",
    "spacer_length",
    "vdd",
)

FIELD_UNITS: Dict[str, str] = {
    "gate_length": "nm",
    "sheet_width": "nm",
    "sheet_thickness": "nm",
    "num_sheets": "count",
    "vertical_pitch": "nm",
    "eot": "nm",
    "gate_workfunction": "eV",
    "channel_doping": "cm^-3",
    "sd_doping": "cm^-3",
    "spacer_length": "nm",
    "vdd": "V",
}

# clamp() repairs a collapsed sheet stack to this sheet-to-sheet clearance
PITCH_CLEARANCE_NM = 1.0
# ... and a source/drain doping that does not exceed the channel to this ratio
SD_OVER_CHANNEL_REPAIR = 10.0

ONOFF_CONSISTENCY_TOL = 0.01


@dataclass(frozen=True)
class DesignParams:
    """One nanosheet-FET candidate (n-type)."""

    gate_length: float
    sheet_width: float
    sheet_thickness: float
    num_sheets: int  # agents may hand back a float; clamp() rounds it
    vertical_pitch: float
    eot: float
    gate_workfunction: float
    channel_doping: float
    sd_doping: float
    spacer_length: float
    vdd: float

    def to_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in FIELD_ORDER}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DesignParams":
        if not isinstance(data, Mapping):
            raise SchemaError("design parameters must be a JSON object")

        missing = [k for k in FIELD_ORDER if k not in data]
        extra = sorted(k for k in data if k not in FIELD_ORDER)
        if missing:
            raise SchemaError(f"missing fields: {', '.join(missing)}")
        if extra:
            raise SchemaError(f"unknown fields: {', '.join(extra)}")

        values: Dict[str, Any] = {}
        for name in FIELD_ORDER:
            v = data[name]
            # bool is an int subclass; "14 nm" and friends are rejected, not guessed
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SchemaError(f"{name} must be a number, got {v!r}")
            if not math.isfinite(v):
                raise SchemaError(f"{name} must be finite, got {v!r}")
            values[name] = v
        return cls(**values)

    def replace(self, **changes: Any) -> "DesignParams":
        return replace(self, **changes)

    def key(self) -> Tuple[float, ...]:
        return tuple(float(getattr(self, name)) for name in FIELD_ORDER)

    @property
    def w_eff_um(self) -> float:
        """Gate-all-around effective width, num_sheets * 2 * (W + T), in um."""
        return self.num_sheets * 2.0 * (self.sheet_width + self.sheet_thickness) * 1e-3


@dataclass(frozen=True)
class Bound:
    lower: float
    upper: float
    scale: str = "linear"  # linear | log10
    integer: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {"lower": self.lower, "upper": self.upper, "scale": self.scale, "integer": self.integer}


@dataclass(frozen=True)
class ParamSpace:
    bounds: Mapping[str, Bound]

    def __post_init__(self) -> None:
        missing = [k for k in FIELD_ORDER if k not in self.bounds]
        extra = sorted(k for k in self.bounds if k not in FIELD_ORDER)
        if missing or extra:
            raise ConfigError(f"parameter space mismatch: missing={missing} unknown={extra}")
        for name, b in self.bounds.items():
            if b.scale not in ("linear", "log10"):
                raise ConfigError(f"{name}: unknown scale {b.scale!r}")
            if not (b.lower < b.upper):
                raise ConfigError(f"{name}: lower bound {b.lower} must be < upper bound {b.upper}")
            if b.lower <= 0:
                raise ConfigError(f"{name}: bounds must be strictly positive, got lower={b.lower}")
            if b.integer and math.ceil(b.lower) > math.floor(b.upper):
                raise ConfigError(f"{name}: integer axis has no integer inside [{b.lower}, {b.upper}]")

    @classmethod
    def default(cls) -> "ParamSpace":
        return cls(bounds=dict(DEFAULT_BOUNDS))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ParamSpace":
        bounds: Dict[str, Bound] = {}
        for name, raw in data.items():
            try:
                bounds[name] = Bound(
                    lower=float(raw["lower"]),
                    upper=float(raw["upper"]),
                    scale=str(raw.get("scale", "linear")),
                    integer=bool(raw.get("integer", False)),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad bound for {name}: {raw!r}") from exc
        return cls(bounds=bounds)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: self.bounds[name].to_dict() for name in FIELD_ORDER}

    def normalize(self, name: str, value: float) -> float:
        """Map a raw value onto [0, 1] (log10 axes in decades)."""
        b = self.bounds[name]
        if b.scale == "log10":
            return (math.log10(value) - math.log10(b.lower)) / (math.log10(b.upper) - math.log10(b.lower))
        return (value - b.lower) / (b.upper - b.lower)

    def denormalize(self, name: str, u: float) -> float:
        b = self.bounds[name]
        if b.scale == "log10":
            lo, hi = math.log10(b.lower), math.log10(b.upper)
            return 10.0 ** (lo + u * (hi - lo))
        return b.lower + u * (b.upper - b.lower)


DEFAULT_BOUNDS: Dict[str, Bound] = {
    "gate_length": Bound(8.0, 30.0),
    "sheet_width": Bound(10.0, 50.0),
    "sheet_thickness": Bound(3.0, 8.0),
    "num_sheets": Bound(1, 5, integer=True),
    "vertical_pitch": Bound(9.0, 20.0),
    "eot": Bound(0.5, 1.5),
    "gate_workfunction": Bound(4.2, 4.9),
    "channel_doping": Bound(1e15, 1e18, scale="log10"),
    "sd_doping": Bound(1e19, 1e21, scale="log10"),
    "spacer_length": Bound(3.0, 10.0),
    "vdd": Bound(0.60, 0.70),
}


@dataclass(frozen=True)
class SpecTargets:
    """IRDS-2024 high-performance logic targets for the 2 nm node."""

    ss_max: float = 72.0  # mV/dec, lower is better
    ioff_max: float = 1.0e-8  # A/um, lower is better
    ion_min: float = 7.87e-4  # A/um, higher is better
    onoff_min: float = 4.90  # log10(Ion/Ioff), higher is better
    vdd: float = 0.65
    temperature: float = 300.0

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"spec target {f.name} must be strictly positive, got {v!r}")
        ceiling = math.log10(self.ion_min / self.ioff_max)
        if self.onoff_min > ceiling + ONOFF_CONSISTENCY_TOL:
            raise ConfigError(
                f"onoff_min {self.onoff_min} is unreachable: log10(ion_min/ioff_max) = {ceiling:.3f}"
            )

    def to_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "SpecTargets":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(k for k in data if k not in known)
        if unknown:
            raise ConfigError(f"unknown spec target fields: {', '.join(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Violation:
    field: str
    value: float
    lower: Optional[float]
    upper: Optional[float]
    reason: str

    def __str__(self) -> str:
        if self.lower is None:
            return f"{self.field}={self.value}: {self.reason}"
        return f"{self.field}={self.value}: {self.reason} [{self.lower}, {self.upper}]"


@dataclass(frozen=True)
class ValidationResult:
    violations: Tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def in_bounds(self) -> bool:
        return not self.violations

    def fields(self) -> Tuple[str, ...]:
        return tuple(v.field for v in self.violations)


def structural_violations(params: DesignParams) -> Tuple[Violation, ...]:
    """Invariants that hold regardless of the parameter space."""
    out = []
    for name in FIELD_ORDER:
        v = getattr(params, name)
        if not math.isfinite(v):
            out.append(Violation(name, v, None, None, "not a finite number"))
        elif name == "num_sheets":
            if v < 1 or v != int(v):
                out.append(Violation(name, v, None, None, "must be an integer >= 1"))
        elif name != "gate_workfunction" and v <= 0:
            out.append(Violation(name, v, None, None, "must be strictly positive"))
    if not params.vertical_pitch > params.sheet_thickness:
        out.append(
            Violation("vertical_pitch", params.vertical_pitch, None, None, "must exceed sheet_thickness")
        )
    if not params.sd_doping > params.channel_doping:
        out.append(Violation("sd_doping", params.sd_doping, None, None, "must exceed channel_doping"))
    return tuple(out)


def validate(params: DesignParams, space: ParamSpace) -> ValidationResult:
    violations = []
    for name in FIELD_ORDER:
        b = space.bounds[name]
        v = getattr(params, name)
        if not math.isfinite(v):
            continue  # reported by structural_violations
        if v < b.lower:
            violations.append(Violation(name, v, b.lower, b.upper, "below lower bound"))
        elif v > b.upper:
            violations.append(Violation(name, v, b.lower, b.upper, "above upper bound"))
        if b.integer and v != int(v):
            violations.append(Violation(name, v, b.lower, b.upper, "must be an integer"))
    violations.extend(structural_violations(params))
    return ValidationResult(tuple(violations))


def round_half_up(x: float) -> int:
    """Half-up integer rounding: 2.5 -> 3, where round() gives 2."""
    return int(math.floor(x + 0.5))


def clamp(params: DesignParams, space: ParamSpace) -> DesignParams:
    """
    Project every field into its bounds and repair the structural invariants.

    Integer axes are rounded half-up, then clipped to the integers inside the
    bound. A collapsed sheet stack gets its pitch raised to
    sheet_thickness + PITCH_CLEARANCE_NM; a source/drain doping at or below
    the channel doping is raised to SD_OVER_CHANNEL_REPAIR times the channel.
    Raises UnrepairableParams when the bounds leave no valid repair.
    """
    values: Dict[str, Any] = {}
    for name in FIELD_ORDER:
        b = space.bounds[name]
        v = getattr(params, name)
        if not math.isfinite(v):
            raise UnrepairableParams(f"{name}={v!r} cannot be projected into bounds")
        if b.integer:
            values[name] = min(max(round_half_up(v), math.ceil(b.lower)), math.floor(b.upper))
        else:
            values[name] = min(max(v, b.lower), b.upper)

    if not values["vertical_pitch"] > values["sheet_thickness"]:
        b = space.bounds["vertical_pitch"]
        repaired = values["sheet_thickness"] + PITCH_CLEARANCE_NM
        if repaired > b.upper:
            raise UnrepairableParams(
                f"vertical_pitch cannot exceed sheet_thickness={values['sheet_thickness']} "
                f"within its upper bound {b.upper}"
            )
        values["vertical_pitch"] = max(repaired, b.lower)

    if not values["sd_doping"] > values["channel_doping"]:
        b = space.bounds["sd_doping"]
        repaired = values["channel_doping"] * SD_OVER_CHANNEL_REPAIR
        if repaired > b.upper:
            raise UnrepairableParams(
                f"sd_doping cannot exceed channel_doping={values['channel_doping']:g} "
                f"within its upper bound {b.upper:g}"
            )
        values["sd_doping"] = max(repaired, b.lower)

    out = DesignParams(**values)
    verdict = validate(out, space)
    if not verdict.in_bounds:
        raise UnrepairableParams("; ".join(str(v) for v in verdict.violations))
    return out


# Plausible 2 nm-node nanosheet; passes every IRDS-2024 target on the surrogate.
REFERENCE_DESIGN = DesignParams(
    gate_length=14.0,
    sheet_width=25.0,
    sheet_thickness=5.0,
    num_sheets=3,
    vertical_pitch=10.0,
    eot=0.7,
    gate_workfunction=4.6,
    channel_doping=1e16,
    sd_doping=1e20,
    spacer_length=5.0,
    vdd=0.65,
)

# Short gate, thick oxide, low workfunction: Ion passes, SS / Ioff / ratio fail.
BAD_SEED_DESIGN = REFERENCE_DESIGN.replace(gate_length=10.0, eot=1.0, gate_workfunction=4.55)
