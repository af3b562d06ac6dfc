"""
SDE structure scripts and SDevice command files, rendered from the Jinja2
templates shipped in ``tcadloop/deckgen/templates``.

Rendering is a pure function of its arguments: the header binds one named
constant per DesignParams field, every number is written with
``format_number`` and nothing time- or host-dependent reaches the text.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from jinja2 import Environment, PackageLoader, StrictUndefined

from ..errors import InvalidParams, SchemaError, UnsupportedSweep
from ..params import FIELD_ORDER, DesignParams, ParamSpace, structural_violations, validate
from .sweep import SweepConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeshSpacing:
    channel: int  # channel refinement = sheet_thickness / channel
    sd: int


MESH_TAGS: Dict[str, MeshSpacing] = {
    "coarse": MeshSpacing(channel=4, sd=1),
    "default": MeshSpacing(channel=6, sd=2),
    "fine": MeshSpacing(channel=8, sd=3),
}

MODEL_TAGS = ("drift-diffusion", "dd+quantum")
DOPING_PROFILES = ("constant", "gaussian")

# family -> (template, dimensionality)
FAMILIES: Dict[str, Tuple[str, int]] = {
    "nsfet": ("sde_nsfet.cmd.j2", 3),
    "planar2d": ("sde_planar2d.cmd.j2", 2),
    "finfet": ("sde_finfet.cmd.j2", 3),
}

SDEVICE_TEMPLATES: Dict[str, str] = {
    "IdVg": "sdevice_idvg.cmd.j2",
    "IdVd": "sdevice_idvd.cmd.j2",
    "CV": "sdevice_cv.cmd.j2",
}

SDE_SUFFIX = "_dvs.cmd"
SDEVICE_SUFFIX = "_des.cmd"
DEFAULT_DECK_NAME = "device"

_env = Environment(
    loader=PackageLoader("tcadloop.deckgen", "templates"),
    undefined=StrictUndefined,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
    autoescape=False,
)


def format_number(value: Any) -> str:
    """Shortest text that reads back to the same number (ints stay ints)."""
    if isinstance(value, bool):
        raise TypeError("booleans are not deck numbers")
    if isinstance(value, int):
        return str(value)
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"cannot write non-finite number {value!r} into a deck")
    return repr(v)


def _header(params: DesignParams) -> List[Tuple[str, str]]:
    values = params.to_dict()
    values["num_sheets"] = int(values["num_sheets"])
    return [(name, format_number(values[name])) for name in FIELD_ORDER]


def _check(params: DesignParams, space: Optional[ParamSpace]) -> None:
    violations = list(structural_violations(params))
    if space is not None:
        violations = list(validate(params, space).violations)
    if violations:
        raise InvalidParams("; ".join(str(v) for v in violations))


def generate_sde(
    params: DesignParams,
    mesh: str = "default",
    *,
    family: str = "nsfet",
    doping: str = "constant",
    name: str = DEFAULT_DECK_NAME,
    space: Optional[ParamSpace] = None,
) -> str:
    """
    Render the structure script for one design.

    Order inside the script: parameter header, region construction, doping,
    contacts, mesh refinement. The mesh tag only changes the two
    ``mesh_*_divisor`` constants. ``space`` adds a bounds check on top of the
    structural one.
    """
    if mesh not in MESH_TAGS:
        raise ValueError(f"unknown mesh tag {mesh!r}, expected one of {sorted(MESH_TAGS)}")
    if family not in FAMILIES:
        raise ValueError(f"unknown device family {family!r}, expected one of {sorted(FAMILIES)}")
    if doping not in DOPING_PROFILES:
        raise ValueError(f"unknown doping profile {doping!r}, expected one of {list(DOPING_PROFILES)}")
    _check(params, space)

    template = _env.get_template(FAMILIES[family][0])
    return template.render(
        header=_header(params),
        num_sheets=int(params.num_sheets),
        spacing=MESH_TAGS[mesh],
        doping=doping,
        name=name,
    )


def generate_sdevice(
    params: DesignParams,
    sweep: SweepConfig,
    models: str = "drift-diffusion",
    *,
    name: str = DEFAULT_DECK_NAME,
    space: Optional[ParamSpace] = None,
) -> str:
    if sweep.kind not in SDEVICE_TEMPLATES:
        raise UnsupportedSweep(f"no SDevice template for sweep kind {sweep.kind!r}")
    if models not in MODEL_TAGS:
        raise ValueError(f"unknown model tag {models!r}, expected one of {list(MODEL_TAGS)}")
    _check(params, space)

    points = sweep.num_points
    header = _header(params) + [
        ("drain_bias" if sweep.kind != "IdVd" else "gate_bias", format_number(sweep.fixed_bias)),
        ("sweep_start", format_number(sweep.start)),
        ("sweep_stop", format_number(sweep.stop)),
        ("sweep_step", format_number(sweep.step)),
        ("sweep_points", format_number(points)),
    ]
    template = _env.get_template(SDEVICE_TEMPLATES[sweep.kind])
    return template.render(
        header=header,
        name=name,
        sweep=sweep,
        models=models,
        workfunction=format_number(params.gate_workfunction),
        fixed_bias=format_number(sweep.fixed_bias),
        start=format_number(float(sweep.start)),
        stop=format_number(float(sweep.stop)),
        points=points,
        intervals=points - 1,
        time_step=format_number(1.0 / (points - 1)),
    )


@dataclass(frozen=True)
class DeckPair:
    sde_script: str
    sdevice_script: str
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.sde_script.strip() or not self.sdevice_script.strip():
            raise ValueError("deck pair scripts must be non-empty")

    def to_dict(self) -> Dict[str, Any]:
        return {"sde": self.sde_script, "sdevice": self.sdevice_script, "metadata": dict(self.metadata)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DeckPair":
        try:
            return cls(str(data["sde"]), str(data["sdevice"]), dict(data.get("metadata") or {}))
        except KeyError as exc:
            raise SchemaError(f"deck pair is missing {exc.args[0]!r}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DeckPair":
        return cls.from_dict(json.loads(text))


def deck_metadata(
    params: DesignParams,
    sweep: SweepConfig,
    *,
    family: str = "nsfet",
    mesh: str = "default",
    models: str = "drift-diffusion",
    doping: str = "constant",
) -> Dict[str, Any]:
    return {
        "family": family,
        "dimensionality": FAMILIES[family][1],
        "sweep_kind": sweep.kind,
        "sweep": sweep.to_dict(),
        "mesh": mesh,
        "models": models,
        "doping": doping,
        "params": params.to_dict(),
    }


def build_deck_pair(
    params: DesignParams,
    sweep: SweepConfig,
    *,
    family: str = "nsfet",
    mesh: str = "default",
    models: str = "drift-diffusion",
    doping: str = "constant",
    name: str = DEFAULT_DECK_NAME,
    space: Optional[ParamSpace] = None,
) -> DeckPair:
    return DeckPair(
        sde_script=generate_sde(params, mesh, family=family, doping=doping, name=name, space=space),
        sdevice_script=generate_sdevice(params, sweep, models, name=name, space=space),
        metadata=deck_metadata(params, sweep, family=family, mesh=mesh, models=models, doping=doping),
    )


def write_deck_pair(pair: DeckPair, directory: str | Path, name: str = DEFAULT_DECK_NAME) -> Tuple[Path, Path]:
    """Write ``<name>_dvs.cmd`` and ``<name>_des.cmd`` (plus a metadata JSON) into directory."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    sde_path = out / f"{name}{SDE_SUFFIX}"
    sdevice_path = out / f"{name}{SDEVICE_SUFFIX}"
    sde_path.write_text(pair.sde_script, encoding="utf-8")
    sdevice_path.write_text(pair.sdevice_script, encoding="utf-8")
    (out / f"{name}_meta.json").write_text(
        json.dumps(dict(pair.metadata), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    log.debug("decks written dir=%s name=%s", out, name)
    return sde_path, sdevice_path
