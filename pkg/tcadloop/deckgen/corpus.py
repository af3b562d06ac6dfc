"""
Parameter-variation expansion and query/deck corpus construction.

A corpus is JSONL, one record per (variant, sweep) pair, with keys
``query``, ``sde``, ``sdevice`` and ``metadata``. Queries come from
``string.Template`` phrasings picked by a per-record seeded RNG, so the same
seed always yields the same bytes whatever the worker count.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from string import Template
from typing import Any, Dict, Iterable, List, Mapping, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy.stats import qmc

from ..errors import ConfigError, EmptySelection, InvalidParams, InvariantError, TcadLoopError
from ..params import FIELD_ORDER, DesignParams, ParamSpace, clamp, validate
from .emit import DeckPair, build_deck_pair
from .sweep import SweepConfig

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Variant expansion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridStrategy:
    """Cartesian product; each axis gets ``levels`` evenly spaced values, bounds included."""

    levels: Mapping[str, int]


@dataclass(frozen=True)
class LatinHypercubeStrategy:
    n: int
    seed: int = 0
    axes: Optional[Tuple[str, ...]] = None  # None: every field


Strategy = Union[GridStrategy, LatinHypercubeStrategy]


def _axis_value(space: ParamSpace, name: str, u: float) -> float:
    b = space.bounds[name]
    if u <= 0.0:
        return b.lower
    if u >= 1.0:
        return b.upper
    return space.denormalize(name, u)


def _check_axes(axes: Iterable[str]) -> List[str]:
    axes = list(axes)
    if not axes:
        raise EmptySelection("no axes selected for variation")
    unknown = sorted(set(axes) - set(FIELD_ORDER))
    if unknown:
        raise ConfigError(f"unknown variation axes: {', '.join(unknown)}")
    return [name for name in FIELD_ORDER if name in axes]


def expand_variants(base: DesignParams, space: ParamSpace, strategy: Strategy) -> List[DesignParams]:
    verdict = validate(base, space)
    if not verdict.in_bounds:
        raise InvalidParams("; ".join(str(v) for v in verdict.violations))

    if isinstance(strategy, GridStrategy):
        axes = _check_axes(strategy.levels)
        columns = []
        for name in axes:
            levels = int(strategy.levels[name])
            if levels < 1:
                raise ConfigError(f"{name}: grid needs at least one level, got {levels}")
            us = np.linspace(0.0, 1.0, levels) if levels > 1 else [space.normalize(name, getattr(base, name))]
            columns.append([_axis_value(space, name, float(u)) for u in us])
        points = [dict(zip(axes, combo)) for combo in itertools.product(*columns)]
    elif isinstance(strategy, LatinHypercubeStrategy):
        axes = _check_axes(FIELD_ORDER if strategy.axes is None else strategy.axes)
        if strategy.n < 1:
            raise ConfigError(f"latin hypercube needs n >= 1, got {strategy.n}")
        # unit-cube samples; denormalize applies each axis' linear or log10 scale
        sampler = qmc.LatinHypercube(d=len(axes), seed=strategy.seed)
        samples = sampler.random(strategy.n)
        points = [{name: _axis_value(space, name, float(u)) for name, u in zip(axes, row)} for row in samples]
    else:
        raise ConfigError(f"unknown expansion strategy {strategy!r}")

    variants: List[DesignParams] = []
    seen = set()
    for changes in points:
        try:
            variant = clamp(base.replace(**changes), space)
        except TcadLoopError as exc:
            raise InvalidParams(f"variant {changes} cannot be made valid: {exc}") from exc
        if variant.key() in seen:
            continue  # integer axes can collapse neighbouring levels
        seen.add(variant.key())
        variants.append(variant)
    log.info("variants expanded strategy=%s count=%d", type(strategy).__name__, len(variants))
    return variants


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

_NUMBER = re.compile(r"(?<![\w.])[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")

FAMILY_NAMES = {
    "nsfet": ("stacked nanosheet FET", "gate-all-around nanosheet transistor", "nanosheet FET"),
    "finfet": ("FinFET", "fin field-effect transistor"),
    "planar2d": ("planar MOSFET", "planar bulk transistor"),
}

SWEEP_PHRASES = {
    "IdVg": (
        "an Id-Vg transfer sweep of the gate from $start V to $stop V at a drain bias of $bias V",
        "the transfer characteristic, gate $start V to $stop V in $step V steps, drain held at $bias V",
    ),
    "IdVd": (
        "an Id-Vd output sweep of the drain from $start V to $stop V with the gate at $bias V",
        "the output characteristic, drain $start V to $stop V in $step V steps, gate held at $bias V",
    ),
    "CV": (
        "a C-V sweep of the gate from $start V to $stop V at a drain bias of $bias V",
        "the gate capacitance versus voltage from $start V to $stop V, drain held at $bias V",
    ),
}

DEFAULT_QUERIES = (
    "Generate SDE and SDevice scripts for a $family with gate length $gate_length nm, "
    "$num_sheets channels of width $sheet_width nm and thickness $sheet_thickness nm, "
    "EOT $eot nm and gate workfunction $gate_workfunction eV, then simulate $sweep.",
    "I need a TCAD deck for a $family: Lg = $gate_length nm, spacer $spacer_length nm, "
    "channel doping $channel_doping /cm3, source/drain doping $sd_doping /cm3. Please run $sweep.",
    "Build the structure and device command files of a $family (gate length $gate_length nm, "
    "vertical pitch $vertical_pitch nm, EOT $eot nm) and set up $sweep.",
    "Set up $sweep for a $family whose gate length is $gate_length nm and whose supply is $vdd V.",
)


def query_number(value: Any) -> str:
    """Render a number so that it reads back to exactly the metadata value."""
    v = float(value)
    if v.is_integer() and abs(v) < 1e6:
        return str(int(v))
    return repr(v)


def numbers_in_text(text: str) -> List[float]:
    return [float(m) for m in _NUMBER.findall(text)]


def _metadata_numbers(obj: Any) -> List[float]:
    if isinstance(obj, bool):
        return []
    if isinstance(obj, (int, float)):
        return [float(obj)]
    if isinstance(obj, Mapping):
        return [x for v in obj.values() for x in _metadata_numbers(v)]
    if isinstance(obj, (list, tuple)):
        return [x for v in obj for x in _metadata_numbers(v)]
    return []


def query_consistent(query: str, metadata: Mapping[str, Any]) -> bool:
    """Every number mentioned in the query must appear somewhere in the metadata."""
    known = _metadata_numbers(metadata)
    return all(any(math.isclose(q, k, rel_tol=1e-12, abs_tol=0.0) for k in known) for q in numbers_in_text(query))


@dataclass(frozen=True)
class QueryTemplateSet:
    templates: Tuple[str, ...] = DEFAULT_QUERIES

    def __post_init__(self) -> None:
        if not self.templates:
            raise ConfigError("query template set is empty")

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> "QueryTemplateSet":
        return cls(tuple(line.strip() for line in lines if line.strip() and not line.lstrip().startswith("#")))

    def render(self, params: DesignParams, sweep: SweepConfig, family: str, rng: random.Random) -> str:
        template = rng.choice(self.templates)
        sweep_phrase = Template(rng.choice(SWEEP_PHRASES.get(sweep.kind, SWEEP_PHRASES["IdVg"]))).substitute(
            start=query_number(sweep.start),
            stop=query_number(sweep.stop),
            step=query_number(sweep.step),
            bias=query_number(sweep.fixed_bias),
        )
        values: Dict[str, str] = {name: query_number(getattr(params, name)) for name in FIELD_ORDER}
        values["family"] = rng.choice(FAMILY_NAMES[family])
        values["sweep"] = sweep_phrase
        return Template(template).substitute(values)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusRecord:
    query: str
    deck: DeckPair
    provenance: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.query.strip():
            raise InvariantError("corpus query is empty")
        if not query_consistent(self.query, self.metadata):
            raise InvariantError(f"query mentions numbers missing from the metadata: {self.query!r}")

    @property
    def metadata(self) -> Dict[str, Any]:
        return {**dict(self.deck.metadata), "provenance": dict(self.provenance)}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "query": self.query,
            "sde": self.deck.sde_script,
            "sdevice": self.deck.sdevice_script,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CorpusRecord":
        metadata = dict(data["metadata"])
        provenance = metadata.pop("provenance", {})
        return cls(str(data["query"]), DeckPair(data["sde"], data["sdevice"], metadata), provenance)


def _variation(base: Optional[DesignParams], variant: DesignParams) -> Dict[str, Any]:
    if base is None:
        return {}
    return {name: getattr(variant, name) for name in FIELD_ORDER if getattr(variant, name) != getattr(base, name)}


def build_corpus(
    variants: Sequence[DesignParams],
    sweeps: Sequence[SweepConfig],
    query_templates: QueryTemplateSet,
    seed: int,
    *,
    base: Optional[DesignParams] = None,
    base_id: str = "base",
    family: str = "nsfet",
    mesh: str = "default",
    models: str = "drift-diffusion",
    doping: str = "constant",
    workers: int = 1,
) -> List[CorpusRecord]:
    """
    One record per (variant, sweep). Record ``i`` draws its phrasing from
    ``random.Random(f"{seed}:{i}")``. A record whose deck cannot be generated
    is logged and skipped; the rest of the batch carries on.
    """
    if not query_templates.templates:
        raise ConfigError("query template set is empty")

    jobs = [(i * len(sweeps) + j, v, s) for i, v in enumerate(variants) for j, s in enumerate(sweeps)]

    def make(job: Tuple[int, DesignParams, SweepConfig]) -> Optional[CorpusRecord]:
        index, variant, sweep = job
        rng = random.Random(f"{seed}:{index}")
        try:
            deck = build_deck_pair(variant, sweep, family=family, mesh=mesh, models=models, doping=doping)
            query = query_templates.render(variant, sweep, family, rng)
            provenance = {"base_id": base_id, "record_index": index, "variation": _variation(base, variant)}
            return CorpusRecord(query=query, deck=deck, provenance=provenance)
        except (TcadLoopError, ValueError, KeyError) as exc:
            log.warning("corpus record skipped index=%d error=%s", index, exc)
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            made = list(pool.map(make, jobs))
    else:
        made = [make(job) for job in jobs]

    records = [r for r in made if r is not None]
    log.info("corpus built records=%d skipped=%d", len(records), len(made) - len(records))
    return records


def to_jsonl(records: Iterable[CorpusRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for r in records)


def write_corpus(records: Iterable[CorpusRecord], path: str | Path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(to_jsonl(records), encoding="utf-8")
    return out


def read_corpus(path: str | Path) -> List[CorpusRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [CorpusRecord.from_dict(json.loads(line)) for line in lines if line.strip()]


# ---------------------------------------------------------------------------
# Optional LLM query augmentation
# ---------------------------------------------------------------------------

DATASET_PROMPT = """\
You are an expert in TCAD simulation and in prompt engineering.

Context: the records you receive describe Sentaurus device simulations of
advanced logic transistors (nanosheet FETs, FinFETs and planar MOSFETs). Each
record pairs a structure script (SDE) and a device command file (SDevice)
with the metadata that produced them.

Task: read the simulation type and the metadata, then write exactly one
concise, natural user query that a device engineer would type to obtain
these scripts.

Rules:
- Mention only parameter values that appear in the metadata, written exactly as given.
- Vary the phrasing: ask, instruct or describe, but keep the engineering intent clear.
- Do not explain, do not add options, do not include code.
- Output format: the query on a single line, nothing else.

Examples:
Generate SDE and SDevice scripts for a nanosheet FET with gate length 14 nm and 3 sheets, then run an Id-Vg sweep up to 0.65 V.
Set up the output characteristic of a FinFET with a 12 nm gate, drain from 0 V to 0.7 V with the gate at 0.7 V.
"""


class ChatCompleter(Protocol):
    def complete(self, messages: List[Dict[str, str]]) -> str: ...


def augment_queries(records: Sequence[CorpusRecord], client: ChatCompleter) -> List[CorpusRecord]:
    """
    Ask a chat model for a more natural phrasing of each query.

    A rewritten query that mentions a number absent from the record's
    metadata is discarded and the template query kept.
    """
    out: List[CorpusRecord] = []
    kept = 0
    for record in records:
        messages = [
            {"role": "system", "content": DATASET_PROMPT},
            {
                "role": "user",
                "content": (
                    f"Simulation type: {record.deck.metadata.get('sweep_kind', 'IdVg')}\n"
                    f"Metadata:\n{json.dumps(record.metadata, indent=2, sort_keys=True)}\n"
                    f"Current query: {record.query}"
                ),
            },
        ]
        try:
            reply = client.complete(messages)
        except TcadLoopError as exc:
            log.warning("query augmentation failed error=%s", exc)
            out.append(record)
            continue
        candidate = next((line.strip() for line in reply.splitlines() if line.strip()), "")
        if candidate and query_consistent(candidate, record.metadata):
            out.append(CorpusRecord(candidate, record.deck, record.provenance))
        else:
            kept += 1
            out.append(record)
    log.info("queries augmented total=%d kept_template=%d", len(out), kept)
    return out
