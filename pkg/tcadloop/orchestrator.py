"""
The closed loop: write decks, run the backend, extract metrics, ask the
agent for the next design, repeat until the targets are met or the
iteration budget is spent.

Run directory layout::

    config.json          resolved RunConfig
    trajectory.jsonl     one IterationRecord per line, fsynced before the next iteration
    transcript.jsonl     LLM request/response pairs (LLM agents only)
    decks/iter_<i>/      deck pair of iteration i
    results/iter_<i>.json  result document of each converged iteration
    report.json, report.md written once the run terminates

The seed design is evaluated as iteration 0 and every attempted iteration,
convergent or not, counts against ``max_iterations``.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import yaml

from . import backend as backends
from .agent.baseline import DEFAULT_STEPS, BaselineAgent, best_record, record_score, score_breakdown
from .agent.llm import LLMAgent, LLMConfig, OpenAIChatClient, TranscriptClient
from .agent.prompts import GUIDANCE_MODES
from .agent.proposal import Agent, Proposal
from .backend import BackendConfig
from .deckgen.emit import build_deck_pair, write_deck_pair
from .deckgen.sweep import SweepConfig
from .errors import (
    ConfigError,
    CorruptTrajectory,
    ExhaustedSpace,
    MetricsError,
    ProposalError,
    SchemaError,
    TcadLoopError,
    TransportError,
)
from .history import IterationRecord, last_converged
from .params import DesignParams, ParamSpace, SpecTargets, validate
from .postproc import PerformanceMetrics, extract_metrics, package_results
from .reporters import write_json, write_markdown
from .surrogate import Converged, NonConvergent, SimulationOutcome

log = logging.getLogger(__name__)

__all__ = [
    "AGENT_KINDS",
    "BaselineConfig",
    "IterationRecord",
    "RunConfig",
    "RunReport",
    "build_agent",
    "load_config",
    "load_trajectory",
    "resume",
    "run_loop",
]

AGENT_KINDS = ("llm", "baseline", "llm-with-baseline-fallback")

SUCCESS = "SUCCESS"
BUDGET = "BUDGET"
EXHAUSTED = "EXHAUSTED"
TERMINATIONS = (SUCCESS, BUDGET, EXHAUSTED)

CONFIG_FILE = "config.json"
TRAJECTORY_FILE = "trajectory.jsonl"
TRANSCRIPT_FILE = "transcript.jsonl"
REPORT_JSON = "report.json"
REPORT_MD = "report.md"

# consecutive ProposalErrors before the fallback agent steps in
FALLBACK_AFTER = 2


@dataclass(frozen=True)
class BaselineConfig:
    steps: Tuple[float, ...] = DEFAULT_STEPS
    shuffle: bool = False  # shuffle polls with the run seed before ranking

    def to_dict(self) -> Dict[str, Any]:
        return {"steps": list(self.steps), "shuffle": self.shuffle}

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "BaselineConfig":
        data = dict(data or {})
        unknown = sorted(set(data) - {"steps", "shuffle"})
        if unknown:
            raise ConfigError(f"unknown baseline fields: {', '.join(unknown)}")
        steps = tuple(float(s) for s in data.get("steps", DEFAULT_STEPS))
        if not steps or any(not 0 < s <= 1 for s in steps):
            raise ConfigError(f"baseline steps must be fractions in (0, 1], got {list(steps)}")
        return cls(steps=steps, shuffle=bool(data.get("shuffle", False)))


@dataclass(frozen=True)
class RunConfig:
    seed_design: DesignParams
    space: ParamSpace = field(default_factory=ParamSpace.default)
    targets: SpecTargets = field(default_factory=SpecTargets)
    backend: BackendConfig = field(default_factory=BackendConfig)
    agent: str = "baseline"
    guidance: str = "quantitative"
    max_iterations: int = 25
    sweep: SweepConfig = field(default_factory=SweepConfig)
    run_dir: str = "runs/latest"
    seed: int = 0
    llm: LLMConfig = field(default_factory=LLMConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    include_bands: bool = False

    def __post_init__(self) -> None:
        if self.agent not in AGENT_KINDS:
            raise ConfigError(f"agent must be one of {list(AGENT_KINDS)}, got {self.agent!r}")
        if self.guidance not in GUIDANCE_MODES:
            raise ConfigError(f"guidance must be one of {list(GUIDANCE_MODES)}, got {self.guidance!r}")
        if isinstance(self.max_iterations, bool) or not isinstance(self.max_iterations, int) or self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be an integer >= 1, got {self.max_iterations!r}")
        if self.sweep.kind != "IdVg":
            raise ConfigError(f"the loop extracts metrics from an IdVg sweep, got {self.sweep.kind!r}")
        result = validate(self.seed_design, self.space)
        if not result.in_bounds:
            raise ConfigError("seed design outside the parameter space: " + "; ".join(str(v) for v in result.violations))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed_design": self.seed_design.to_dict(),
            "space": self.space.to_dict(),
            "targets": self.targets.to_dict(),
            "backend": self.backend.to_dict(),
            "agent": self.agent,
            "guidance": self.guidance,
            "max_iterations": self.max_iterations,
            "sweep": self.sweep.to_dict(),
            "run_dir": self.run_dir,
            "seed": self.seed,
            "llm": self.llm.to_dict(),
            "baseline": self.baseline.to_dict(),
            "include_bands": self.include_bands,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Optional[Path] = None) -> "RunConfig":
        """Relative ``run_dir`` and backend ``workdir`` resolve against ``base_dir``."""
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        if "seed_design" not in data:
            raise ConfigError("config has no seed_design")

        def resolve(p: str) -> str:
            path = Path(p).expanduser()
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return str(path)

        try:
            seed_design = DesignParams.from_dict(data["seed_design"])
        except SchemaError as exc:
            raise ConfigError(f"seed_design: {exc}") from exc

        backend_data = dict(data.get("backend") or {})
        if backend_data.get("workdir"):
            backend_data["workdir"] = resolve(backend_data["workdir"])

        max_iterations = data.get("max_iterations", 25)
        return cls(
            seed_design=seed_design,
            space=ParamSpace.from_dict(data["space"]) if data.get("space") else ParamSpace.default(),
            targets=SpecTargets.from_dict(data.get("targets")),
            backend=BackendConfig.from_dict(backend_data),
            agent=str(data.get("agent", "baseline")),
            guidance=str(data.get("guidance", "quantitative")),
            max_iterations=max_iterations,
            sweep=SweepConfig.from_dict(data["sweep"]) if data.get("sweep") else SweepConfig(),
            run_dir=resolve(str(data.get("run_dir", "runs/latest"))),
            seed=int(data.get("seed", 0)),
            llm=LLMConfig.from_dict(data.get("llm")),
            baseline=BaselineConfig.from_dict(data.get("baseline")),
            include_bands=bool(data.get("include_bands", False)),
        )


def load_config(path: str | Path) -> RunConfig:
    """Read a RunConfig from JSON, or YAML for ``.yml`` / ``.yaml`` files."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text(encoding="utf-8")
    try:
        if p.suffix.lower() in (".yml", ".yaml"):
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {p} must hold a mapping at the top level")
    return RunConfig.from_dict(data, base_dir=p.resolve().parent)


# ---------------------------------------------------------------------------
# Trajectory persistence
# ---------------------------------------------------------------------------


def append_record(path: Path, record: IterationRecord) -> None:
    with path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        f.flush()
        os.fsync(f.fileno())


def load_trajectory(path: str | Path) -> List[IterationRecord]:
    p = Path(path)
    if not p.exists():
        return []
    records: List[IterationRecord] = []
    with p.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            try:
                record = IterationRecord.from_dict(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorruptTrajectory(f"invalid JSON ({exc.msg})", line=line_no) from exc
            except (KeyError, TypeError, ValueError, TcadLoopError) as exc:
                raise CorruptTrajectory(f"not an iteration record ({exc})", line=line_no) from exc
            if record.index != len(records):
                raise CorruptTrajectory(f"expected index {len(records)}, found {record.index}", line=line_no)
            records.append(record)
    return records


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class RunReport:
    termination: str
    trajectory: List[IterationRecord]
    targets: SpecTargets
    agent: str
    guidance: str
    run_dir: str

    @property
    def best(self) -> Optional[IterationRecord]:
        return best_record(self.trajectory, self.targets)

    @property
    def seed_record(self) -> IterationRecord:
        return self.trajectory[0]

    def to_dict(self) -> Dict[str, Any]:
        best = self.best
        seed = self.seed_record

        def summary(record: Optional[IterationRecord]) -> Optional[Dict[str, Any]]:
            if record is None:
                return None
            return {
                "index": record.index,
                "params": record.params.to_dict(),
                "metrics": None if record.metrics is None else record.metrics.to_dict(),
            }

        return {
            "termination": self.termination,
            "agent": self.agent,
            "guidance": self.guidance,
            "iterations": len(self.trajectory),
            "best_index": None if best is None else best.index,
            "best_score": None if best is None else record_score(best, self.targets),
            "score_explanation": [] if best is None else score_breakdown(best.metrics, self.targets).explanation,
            "non_convergent": [r.index for r in self.trajectory if not r.converged],
            "recovery": [r.index for r in self.trajectory if r.recovery],
            "targets": self.targets.to_dict(),
            "before": summary(seed),
            "after": summary(best),
            "wall_time_s": sum(r.wall_time_s for r in self.trajectory),
        }


def _write_report(report: RunReport, run_dir: Path) -> None:
    doc = report.to_dict()
    write_json(doc, run_dir / REPORT_JSON)
    write_markdown(doc, run_dir / REPORT_MD)
    log.info("run finished termination=%s iterations=%d best=%s", report.termination, len(report.trajectory), doc["best_index"])


# ---------------------------------------------------------------------------
# Loop
# ---------------------------------------------------------------------------


def build_agent(cfg: RunConfig, run_dir: Path, *, replay: Optional[Path] = None) -> Tuple[Agent, Optional[Agent]]:
    """The configured agent and, for llm-with-baseline-fallback, its fallback."""
    baseline = BaselineAgent(
        cfg.space,
        cfg.targets,
        cfg.seed_design,
        cfg.baseline.steps,
        shuffle_seed=cfg.seed if cfg.baseline.shuffle else None,
    )
    if cfg.agent == "baseline":
        return baseline, None

    if replay is not None:
        client = TranscriptClient(replay, cfg.llm.model, cfg.llm.temperature, inner=None, record=False)
    else:
        client = TranscriptClient(
            run_dir / TRANSCRIPT_FILE, cfg.llm.model, cfg.llm.temperature, inner=OpenAIChatClient(cfg.llm)
        )
    llm = LLMAgent(cfg.space, cfg.targets, cfg.guidance, client, cfg.seed_design, include_bands=cfg.include_bands)
    return llm, baseline if cfg.agent == "llm-with-baseline-fallback" else None


def _ask(agent: Agent, history: Sequence[IterationRecord]) -> Tuple[Proposal, bool]:
    last = history[-1]
    if last.converged:
        return agent.propose(history), False
    diagnostic = last.outcome.diagnostic
    return agent.recover(history, last_converged(history), last.params, diagnostic), True


def _next_proposal(
    history: Sequence[IterationRecord], agent: Agent, fallback: Optional[Agent]
) -> Tuple[Proposal, bool, str]:
    if fallback is None:
        proposal, recovery = _ask(agent, history)
        return proposal, recovery, agent.name

    failures = 0
    while True:
        try:
            proposal, recovery = _ask(agent, history)
            return proposal, recovery, agent.name
        except (ProposalError, TransportError) as exc:
            failures += 1
            log.warning("agent failed iteration=%d failures=%d error=%s", len(history), failures, exc)
            if isinstance(exc, TransportError) or failures >= FALLBACK_AFTER:
                break
    proposal, recovery = _ask(fallback, history)
    return proposal, recovery, f"{fallback.name}-fallback"


def _evaluate(
    cfg: RunConfig, run_dir: Path, index: int, params: DesignParams
) -> Tuple[SimulationOutcome, Optional[PerformanceMetrics]]:
    sweep = cfg.sweep.for_supply(params.vdd)
    name = f"iter_{index}"
    pair = build_deck_pair(
        params, sweep, family=cfg.backend.family, mesh=cfg.backend.mesh, models=cfg.backend.models, space=cfg.space
    )
    write_deck_pair(pair, run_dir / "decks" / name)

    outcome = backends.run(params, sweep, cfg.backend, name=name, temperature=cfg.targets.temperature)
    if not isinstance(outcome, Converged):
        return outcome, None
    try:
        metrics = extract_metrics(outcome.iv, params.vdd, cfg.targets)
    except MetricsError as exc:
        log.warning("post-processing failed iteration=%d error=%s", index, exc)
        return NonConvergent(f"post-processing failed: {exc}"), None

    bands = None
    if outcome.bands_on is not None and outcome.bands_off is not None:
        bands = (outcome.bands_on, outcome.bands_off)
    write_json(package_results(metrics, outcome.iv, bands, cfg.targets), run_dir / "results" / f"{name}.json")
    return outcome, metrics


def _step(
    cfg: RunConfig,
    run_dir: Path,
    index: int,
    params: DesignParams,
    rationale: str,
    *,
    started: float,
    recovery: bool,
    proposed_by: str,
) -> IterationRecord:
    outcome, metrics = _evaluate(cfg, run_dir, index, params)
    record = IterationRecord(
        index=index,
        params=params,
        outcome=outcome,
        metrics=metrics,
        rationale=rationale,
        wall_time_s=time.perf_counter() - started,
        recovery=recovery,
        proposed_by=proposed_by,
    )
    append_record(run_dir / TRAJECTORY_FILE, record)
    if metrics is None:
        log.info("iteration=%d status=non-convergent recovery=%s", index, recovery)
    else:
        log.info(
            "iteration=%d status=converged score=%.4f meets_all=%s recovery=%s",
            index,
            record_score(record, cfg.targets),
            metrics.meets_all,
            recovery,
        )
    return record


def _drive(
    cfg: RunConfig, run_dir: Path, history: List[IterationRecord], agent: Agent, fallback: Optional[Agent]
) -> RunReport:
    if not history:
        history.append(
            _step(cfg, run_dir, 0, cfg.seed_design, "seed design", started=time.perf_counter(), recovery=False, proposed_by="seed")
        )

    while True:
        last = history[-1]
        if last.metrics is not None and last.metrics.meets_all:
            termination = SUCCESS
            break
        if len(history) >= cfg.max_iterations:
            termination = BUDGET
            break
        started = time.perf_counter()
        try:
            proposal, recovery, by = _next_proposal(history, agent, fallback)
        except ExhaustedSpace as exc:
            log.info("search exhausted iteration=%d reason=%s", len(history), exc)
            termination = EXHAUSTED
            break
        history.append(
            _step(
                cfg,
                run_dir,
                len(history),
                proposal.params,
                proposal.rationale,
                started=started,
                recovery=recovery,
                proposed_by=by,
            )
        )

    report = RunReport(termination, list(history), cfg.targets, cfg.agent, cfg.guidance, str(run_dir))
    _write_report(report, run_dir)
    return report


def run_loop(
    cfg: RunConfig,
    *,
    agent: Optional[Agent] = None,
    fallback: Optional[Agent] = None,
    replay: Optional[Path] = None,
) -> RunReport:
    """
    Start a fresh run in ``cfg.run_dir``. ``agent`` overrides the configured
    one; ``replay`` serves LLM responses from a recorded transcript only.
    """
    run_dir = Path(cfg.run_dir)
    if (run_dir / TRAJECTORY_FILE).exists():
        raise ConfigError(f"{run_dir} already holds a trajectory; resume it or choose another run_dir")
    run_dir.mkdir(parents=True, exist_ok=True)
    write_json(cfg.to_dict(), run_dir / CONFIG_FILE)
    log.info("run start dir=%s agent=%s guidance=%s max_iterations=%d", run_dir, cfg.agent, cfg.guidance, cfg.max_iterations)

    if agent is None:
        agent, fallback = build_agent(cfg, run_dir, replay=replay)
    return _drive(cfg, run_dir, [], agent, fallback)


def resume(
    run_dir: str | Path,
    *,
    agent: Optional[Agent] = None,
    fallback: Optional[Agent] = None,
    replay: Optional[Path] = None,
) -> RunReport:
    """Continue a run from its trajectory; a finished run returns its report without new iterations."""
    d = Path(run_dir)
    config_path = d / CONFIG_FILE
    if not config_path.is_file():
        raise ConfigError(f"no {CONFIG_FILE} in run directory {d}")
    cfg = replace(load_config(config_path), run_dir=str(d))
    history = load_trajectory(d / TRAJECTORY_FILE)

    report_path = d / REPORT_JSON
    if report_path.is_file() and history:
        termination = json.loads(report_path.read_text(encoding="utf-8")).get("termination")
        if termination in TERMINATIONS:
            log.info("run already finished dir=%s termination=%s", d, termination)
            return RunReport(termination, history, cfg.targets, cfg.agent, cfg.guidance, str(d))

    log.info("resuming dir=%s next_iteration=%d", d, len(history))
    if agent is None:
        agent, fallback = build_agent(cfg, d, replay=replay)
    return _drive(cfg, d, history, agent, fallback)
