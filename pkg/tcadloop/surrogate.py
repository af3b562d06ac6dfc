"""
Analytic nanosheet-FET compact model.

Stands in for the device simulator at desk scale: an electrostatic scale
length sets the short-channel swing degradation and DIBL, a threshold built
from workfunction and channel doping positions the curve, and a single
EKV-style smooth interpolation carries the drain current from the
exponential subthreshold regime into a power-law on-regime. Band diagrams
along source-channel-drain are smooth piecewise profiles around a gate
barrier whose height follows the gate overdrive.

Non-convergence is emulated with three deterministic rules (see
``convergence_failure``) so the recovery path can be exercised.

Every coefficient lives in ``SurrogateCoefficients``; the shipped values come
from ``scripts/calibrate_surrogate.py``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import constants

from .deckgen.sweep import SweepConfig
from .errors import InvalidParams, InvariantError, NonConvergentParams, UnsupportedSweep
from .params import DesignParams, structural_violations

log = logging.getLogger(__name__)

ON = "ON"
OFF = "OFF"


def thermal_voltage(temperature: float = 300.0) -> float:
    """kT/q in V."""
    return constants.k * temperature / constants.e


@dataclass(frozen=True)
class SurrogateCoefficients:
    c1: float = 1.25  # scale length prefactor
    c2: float = 2.0  # swing degradation amplitude
    c3: float = 8.0  # DIBL amplitude
    c4: float = 0.05  # V per decade of channel doping
    wf_ref: float = 4.29  # eV, workfunction giving Vth = 0 at n_ref
    n_ref: float = 1e16  # cm^-3
    alpha: float = 1.5  # on-regime power law
    k_on: float = 0.105  # A/um per V^alpha per (1/nm) of inversion capacitance
    t_inv: float = 0.4  # nm, inversion-layer capacitance thickness
    l_sat: float = 10.0  # nm, velocity-saturation length
    c5: float = 0.1  # eV, Ec - EFn in the degenerate n+ regions
    c6: float = 1.0  # barrier lowering per volt of gate overdrive
    phi0: float = 0.45  # eV, barrier at vg = Vth
    phi_res: float = 0.02  # eV, residual barrier at strong inversion
    bandgap: float = 1.12  # eV, silicon
    l_sd: float = 10.0  # nm, source/drain segment in band diagrams
    band_points: int = 201
    # non-convergence rules
    min_aspect: float = 2.0  # gate_length / sheet_thickness
    min_eot: float = 0.4  # nm
    min_doping_ratio: float = 10.0  # sd_doping / channel_doping

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


COEFFICIENTS = SurrogateCoefficients()


# ---------------------------------------------------------------------------
# Result types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IVCurve:
    """Transfer characteristic at fixed drain bias; currents in A per um of footprint."""

    vd: float
    vg: Tuple[float, ...]
    id: Tuple[float, ...]
    temperature: float = 300.0
    w_eff_um: Optional[float] = None

    MIN_POINTS = 2  # parsed curves; the surrogate always emits a full sweep

    def __post_init__(self) -> None:
        if len(self.vg) != len(self.id):
            raise InvariantError(f"vg has {len(self.vg)} points but id has {len(self.id)}")
        if len(self.vg) < self.MIN_POINTS:
            raise InvariantError(f"an I-V curve needs >= {self.MIN_POINTS} points, got {len(self.vg)}")
        for a, b in zip(self.vg, self.vg[1:]):
            if not b > a:
                raise InvariantError(f"vg must be strictly increasing, got {a} then {b}")
        for v, i in zip(self.vg, self.id):
            if not (math.isfinite(i) and i > 0):
                raise InvariantError(f"id must be finite and > 0, got {i!r} at vg={v}")

    @classmethod
    def from_arrays(
        cls,
        vd: float,
        vg: Sequence[float],
        current: Sequence[float],
        temperature: float = 300.0,
        w_eff_um: Optional[float] = None,
    ) -> "IVCurve":
        return cls(
            vd=float(vd),
            vg=tuple(float(v) for v in vg),
            id=tuple(float(i) for i in current),
            temperature=float(temperature),
            w_eff_um=None if w_eff_um is None else float(w_eff_um),
        )

    @property
    def points(self) -> Tuple[Tuple[float, float], ...]:
        return tuple(zip(self.vg, self.id))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "vd": self.vd,
            "temperature": self.temperature,
            "w_eff_um": self.w_eff_um,
            "vg": list(self.vg),
            "id": list(self.id),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "IVCurve":
        return cls.from_arrays(
            data["vd"], data["vg"], data["id"], data.get("temperature", 300.0), data.get("w_eff_um")
        )

    def to_csv(self) -> str:
        return "vg,id\n" + "".join(f"{v:.10e},{i:.10e}\n" for v, i in zip(self.vg, self.id))

    def sidecar(self) -> Dict[str, Any]:
        return {"vd": self.vd, "temperature": self.temperature, "w_eff_um": self.w_eff_um}


@dataclass(frozen=True)
class BandDiagram:
    bias: str  # ON | OFF
    position: Tuple[float, ...]  # um along source-channel-drain
    ec: Tuple[float, ...]
    ev: Tuple[float, ...]
    efn: Tuple[float, ...]
    efp: Tuple[float, ...]

    def __post_init__(self) -> None:
        if self.bias not in (ON, OFF):
            raise InvariantError(f"bias must be ON or OFF, got {self.bias!r}")
        n = len(self.position)
        if any(len(a) != n for a in (self.ec, self.ev, self.efn, self.efp)):
            raise InvariantError("band arrays must all have the same length")
        if any(not b > a for a, b in zip(self.position, self.position[1:])):
            raise InvariantError("band positions must be strictly increasing")
        gaps = np.asarray(self.ec) - np.asarray(self.ev)
        if n and (gaps.min() <= 0 or not np.allclose(gaps, gaps[0], rtol=0.0, atol=1e-12)):
            raise InvariantError("Ec - Ev must be one positive constant")

    @property
    def barrier_height(self) -> float:
        """Highest conduction-band point above the source conduction band, eV."""
        return float(max(self.ec) - self.ec[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bias": self.bias,
            "position": list(self.position),
            "ec": list(self.ec),
            "ev": list(self.ev),
            "efn": list(self.efn),
            "efp": list(self.efp),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BandDiagram":
        return cls(
            bias=data["bias"],
            position=tuple(float(x) for x in data["position"]),
            ec=tuple(float(x) for x in data["ec"]),
            ev=tuple(float(x) for x in data["ev"]),
            efn=tuple(float(x) for x in data["efn"]),
            efp=tuple(float(x) for x in data["efp"]),
        )

    def to_csv(self) -> str:
        rows = zip(self.position, self.ec, self.ev, self.efn, self.efp)
        return "x,ec,ev,efn,efp\n" + "".join(",".join(f"{v:.10e}" for v in row) + "\n" for row in rows)


@dataclass(frozen=True)
class Converged:
    iv: IVCurve
    bands_on: Optional[BandDiagram] = None  # the external backend has no band data
    bands_off: Optional[BandDiagram] = None

    converged = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": "converged",
            "iv": self.iv.to_dict(),
            "bands_on": None if self.bands_on is None else self.bands_on.to_dict(),
            "bands_off": None if self.bands_off is None else self.bands_off.to_dict(),
        }


@dataclass(frozen=True)
class NonConvergent:
    diagnostic: str

    converged = False

    def to_dict(self) -> Dict[str, Any]:
        return {"status": "non_convergent", "diagnostic": self.diagnostic}


SimulationOutcome = Union[Converged, NonConvergent]


def outcome_from_dict(data: Mapping[str, Any]) -> SimulationOutcome:
    status = data.get("status")
    if status == "converged":
        return Converged(
            iv=IVCurve.from_dict(data["iv"]),
            bands_on=None if data.get("bands_on") is None else BandDiagram.from_dict(data["bands_on"]),
            bands_off=None if data.get("bands_off") is None else BandDiagram.from_dict(data["bands_off"]),
        )
    if status == "non_convergent":
        return NonConvergent(str(data["diagnostic"]))
    raise ValueError(f"unknown outcome status {status!r}")


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeviceFigures:
    """Closed-form electrostatics of one design at one drain bias."""

    scale_length_nm: float
    swing_factor: float
    ss_mv_dec: float
    dibl_v: float
    vth: float
    smoothing_v: float  # alpha * n * kT/q


def convergence_failure(params: DesignParams, coefficients: SurrogateCoefficients = COEFFICIENTS) -> Optional[str]:
    c = coefficients
    if params.gate_length < c.min_aspect * params.sheet_thickness:
        return (
            f"aspect rule: gate_length {params.gate_length:g} nm < "
            f"{c.min_aspect:g} x sheet_thickness {params.sheet_thickness:g} nm; "
            "Poisson solve diverged at the first bias point"
        )
    if params.eot < c.min_eot:
        return f"oxide rule: eot {params.eot:g} nm < {c.min_eot:g} nm; gate tunnelling made the solve unstable"
    ratio = params.sd_doping / params.channel_doping
    if ratio < c.min_doping_ratio:
        return (
            f"doping rule: sd_doping/channel_doping = {ratio:.3g} < {c.min_doping_ratio:g}; "
            "junction too weak, Newton iterations did not converge"
        )
    return None


def device_figures(
    params: DesignParams,
    vd: float,
    temperature: float = 300.0,
    coefficients: SurrogateCoefficients = COEFFICIENTS,
) -> DeviceFigures:
    c = coefficients
    vt = thermal_voltage(temperature)
    lam = c.c1 * math.sqrt(params.sheet_thickness * params.eot)
    n = 1.0 + c.c2 * math.exp(-params.gate_length / (2.0 * lam))
    dibl = c.c3 * math.exp(-params.gate_length / lam) * vd
    vth = (params.gate_workfunction - c.wf_ref) + c.c4 * math.log10(params.channel_doping / c.n_ref) - dibl
    return DeviceFigures(
        scale_length_nm=lam,
        swing_factor=n,
        ss_mv_dec=n * vt * math.log(10.0) * 1000.0,
        dibl_v=dibl,
        vth=vth,
        smoothing_v=c.alpha * n * vt,
    )


def drain_current(
    params: DesignParams,
    vg: Union[float, np.ndarray],
    vd: float,
    temperature: float = 300.0,
    coefficients: SurrogateCoefficients = COEFFICIENTS,
) -> np.ndarray:
    """
    Id(vg) in A/um.

    V_eff = m ln(1 + exp((vg - Vth)/m)) with m = alpha n kT/q, and
    Id = k_on W_eff C_inv vsat V_eff^alpha. Below threshold this reduces to
    I0 W_eff 10^((vg - Vth)/SS) with I0 = k_on C_inv vsat m^alpha; above it to
    the power law in the overdrive.
    """
    c = coefficients
    f = device_figures(params, vd, temperature, c)
    m = f.smoothing_v
    v_eff = m * np.logaddexp(0.0, (np.asarray(vg, dtype=float) - f.vth) / m)
    c_inv = 1.0 / (params.eot + c.t_inv)
    vsat = 1.0 / (1.0 + params.gate_length / c.l_sat)
    return c.k_on * params.w_eff_um * c_inv * vsat * v_eff ** c.alpha


def _check(params: DesignParams) -> None:
    violations = structural_violations(params)
    if violations:
        raise InvalidParams("; ".join(str(v) for v in violations))


def simulate_iv(
    params: DesignParams,
    sweep: SweepConfig,
    *,
    temperature: float = 300.0,
    coefficients: SurrogateCoefficients = COEFFICIENTS,
) -> SimulationOutcome:
    _check(params)
    if sweep.kind != "IdVg":
        raise UnsupportedSweep(f"the surrogate only simulates IdVg sweeps, got {sweep.kind!r}")

    failure = convergence_failure(params, coefficients)
    if failure is not None:
        log.info("surrogate non-convergent reason=%s", failure.split(":", 1)[0])
        return NonConvergent(failure)

    vd = sweep.fixed_bias
    vg = sweep.grid()
    current = drain_current(params, vg, vd, temperature, coefficients)
    iv = IVCurve.from_arrays(vd, vg, current, temperature, params.w_eff_um)
    return Converged(
        iv=iv,
        bands_on=band_diagram(params, ON, vd=vd, temperature=temperature, coefficients=coefficients),
        bands_off=band_diagram(params, OFF, vd=vd, temperature=temperature, coefficients=coefficients),
    )


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def barrier_height(
    params: DesignParams,
    vg: float,
    vd: float,
    temperature: float = 300.0,
    coefficients: SurrogateCoefficients = COEFFICIENTS,
) -> float:
    """phi0 - c6 (vg - Vth), softly clamped from below at the residual barrier."""
    c = coefficients
    vt = thermal_voltage(temperature)
    f = device_figures(params, vd, temperature, c)
    raw = c.phi0 - c.c6 * (vg - f.vth)
    return c.phi_res + vt * float(np.logaddexp(0.0, (raw - c.phi_res) / vt))


def band_diagram(
    params: DesignParams,
    bias: str,
    *,
    vd: Optional[float] = None,
    temperature: float = 300.0,
    coefficients: SurrogateCoefficients = COEFFICIENTS,
) -> BandDiagram:
    """
    Ec, Ev, EFn, EFp along source/spacer/gate/spacer/drain, source Fermi level at 0 eV.

    OFF is vg = 0, ON is vg = vdd; the drain sits at vd (vdd by default) in
    both. EFp follows EFn at OFF and stays at the source level at ON, so the
    quasi-Fermi levels split by vd across the drain junction.
    """
    if bias not in (ON, OFF):
        raise ValueError(f"bias must be {ON!r} or {OFF!r}, got {bias!r}")
    _check(params)
    c = coefficients
    failure = convergence_failure(params, c)
    if failure is not None:
        raise NonConvergentParams(failure)

    vd = params.vdd if vd is None else vd
    vg = params.vdd if bias == ON else 0.0
    f = device_figures(params, vd, temperature, c)
    phi = barrier_height(params, vg, vd, temperature, c)

    lg, sp = params.gate_length, params.spacer_length
    total = lg + 2.0 * sp + 2.0 * c.l_sd
    x = np.linspace(0.0, total, c.band_points)
    gate_start = c.l_sd + sp
    gate_end = gate_start + lg
    w = min(f.scale_length_nm, sp, lg / 4.0)

    rise = _smoothstep((x - (gate_start - w)) / (2.0 * w))
    fall = _smoothstep((x - (gate_end - w)) / (2.0 * w))
    bump = rise * (1.0 - fall)
    drop = fall  # drain potential falls across the drain-side edge

    ec = -c.c5 + phi * bump - vd * drop
    ev = ec - c.bandgap
    efn = -vd * drop
    efp = efn if bias == OFF else np.zeros_like(x)

    return BandDiagram(
        bias=bias,
        position=tuple(float(v) for v in x * 1e-3),
        ec=tuple(float(v) for v in ec),
        ev=tuple(float(v) for v in ev),
        efn=tuple(float(v) for v in efn),
        efp=tuple(float(v) for v in efp),
    )
