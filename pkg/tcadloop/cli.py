from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml

from . import __version__
from . import backend as backends
from .agent.llm import LLMConfig, OpenAIChatClient, TranscriptClient
from .deckgen.corpus import (
    GridStrategy,
    LatinHypercubeStrategy,
    QueryTemplateSet,
    augment_queries,
    build_corpus,
    expand_variants,
    write_corpus,
)
from .deckgen.emit import DOPING_PROFILES, FAMILIES, MESH_TAGS, MODEL_TAGS, build_deck_pair, write_deck_pair
from .deckgen.sweep import SWEEP_KINDS, SweepConfig
from .errors import ConfigError, TcadLoopError
from .orchestrator import BUDGET, EXHAUSTED, REPORT_JSON, SUCCESS, TRAJECTORY_FILE, load_config, load_trajectory, resume, run_loop
from .params import REFERENCE_DESIGN, DesignParams, ParamSpace, SpecTargets
from .plots import PLOT_KINDS, plot_bands, plot_iv, plot_trajectory
from .postproc import extract_metrics, load_results
from .reporters import metrics_document, summary_table
from .surrogate import Converged

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_BUDGET = 2
EXIT_SPEC_FAILED = 3

EXIT_FOR_TERMINATION = {SUCCESS: EXIT_OK, BUDGET: EXIT_BUDGET, EXHAUSTED: EXIT_BUDGET}

DEFAULT_SWEEPS: Dict[str, SweepConfig] = {
    "IdVg": SweepConfig("IdVg", fixed_bias=0.65, start=0.0, stop=0.65, step=0.01),
    "IdVd": SweepConfig("IdVd", fixed_bias=0.65, start=0.0, stop=0.65, step=0.01),
    "CV": SweepConfig("CV", fixed_bias=0.05, start=-0.2, stop=0.8, step=0.02),
}


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit 1; exit 2 means the iteration budget ran out."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_FATAL, f"{self.prog}: error: {message}\n")


def _read_mapping(path: str | Path) -> Dict[str, Any]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"file not found: {p}")
    text = p.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) if p.suffix.lower() in (".yml", ".yaml") else json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p} must hold a JSON object")
    return data


def _params(path: Optional[str]) -> DesignParams:
    return REFERENCE_DESIGN if path is None else DesignParams.from_dict(_read_mapping(path))


def _sweep(path: Optional[str], kind: str = "IdVg") -> SweepConfig:
    return DEFAULT_SWEEPS[kind] if path is None else SweepConfig.from_dict(_read_mapping(path))


def _llm_client(model: str, replay: Optional[str]) -> Any:
    cfg = LLMConfig(model=model)
    if replay is not None:
        return TranscriptClient(Path(replay), cfg.model, cfg.temperature, inner=None, record=False)
    return OpenAIChatClient(cfg)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_optimize(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    replay = Path(args.replay) if args.replay else None
    if args.resume:
        report = resume(cfg.run_dir, replay=replay)
    else:
        report = run_loop(cfg, replay=replay)

    doc = report.to_dict()
    print(f"Termination: {report.termination} after {doc['iterations']} iterations (best: {doc['best_index']})")
    print(summary_table(doc))
    print(f"Wrote: {Path(cfg.run_dir) / REPORT_JSON}")
    return EXIT_FOR_TERMINATION[report.termination]


def cmd_simulate(args: argparse.Namespace) -> int:
    params = _params(args.params)
    sweep = _sweep(args.sweep).for_supply(params.vdd)
    cfg = backends.BackendConfig.from_dict(_read_mapping(args.backend)) if args.backend else backends.BackendConfig()
    outcome = backends.run(params, sweep, cfg, temperature=args.temperature)
    print(json.dumps(outcome.to_dict(), indent=2, sort_keys=True))
    if isinstance(outcome, Converged) and args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(outcome.iv.to_csv(), encoding="utf-8")
        out.with_suffix(".json").write_text(json.dumps(outcome.iv.sidecar(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"Wrote: {out}", file=sys.stderr)
    return EXIT_OK if outcome.converged else EXIT_SPEC_FAILED


def cmd_metrics(args: argparse.Namespace) -> int:
    """The I-V file's drain bias comes from a ``<name>.json`` sidecar when present, else it is taken as vdd."""
    iv_path = Path(args.iv)
    if not iv_path.is_file():
        raise ConfigError(f"I-V file not found: {iv_path}")
    sidecar_path = iv_path.with_suffix(".json")
    sidecar = _read_mapping(sidecar_path) if sidecar_path.is_file() else {}
    try:
        vd = float(sidecar.get("vd", args.vdd))
        temperature = float(sidecar.get("temperature", 300.0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{sidecar_path}: vd and temperature must be numbers ({exc})") from exc
    fmt = "csv" if iv_path.suffix.lower() == ".csv" else "tabular"
    iv = backends.parse_iv_file(iv_path.read_text(encoding="utf-8"), fmt, vd=vd, temperature=temperature)
    targets = SpecTargets.from_dict(_read_mapping(args.spec)) if args.spec else SpecTargets()
    m = extract_metrics(iv, args.vdd, targets)
    print(metrics_document(m.to_dict()))
    return EXIT_OK if m.meets_all else EXIT_SPEC_FAILED


def cmd_deckgen(args: argparse.Namespace) -> int:
    params = _params(args.params)
    sweep = _sweep(args.sweep, args.kind)
    if sweep.kind == "IdVg":
        sweep = sweep.for_supply(params.vdd)
    pair = build_deck_pair(
        params, sweep, family=args.family, mesh=args.mesh, models=args.models, doping=args.doping, name=args.name
    )
    for path in write_deck_pair(pair, args.out, args.name):
        print(f"Wrote: {path}")
    return EXIT_OK


def _grid_levels(items: Sequence[str]) -> Dict[str, int]:
    levels: Dict[str, int] = {}
    for item in items:
        name, _, count = item.partition("=")
        try:
            levels[name] = int(count)
        except ValueError as exc:
            raise ConfigError(f"--axis expects name=levels, got {item!r}") from exc
    return levels


def cmd_corpus(args: argparse.Namespace) -> int:
    base = _params(args.base)
    space = ParamSpace.from_dict(_read_mapping(args.space)) if args.space else ParamSpace.default()
    if args.strategy == "grid":
        if not args.axis:
            raise ConfigError("grid strategy needs at least one --axis name=levels")
        strategy: Any = GridStrategy(levels=_grid_levels(args.axis))
    else:
        strategy = LatinHypercubeStrategy(n=args.samples, seed=args.seed)

    variants = expand_variants(base, space, strategy)
    sweeps = [DEFAULT_SWEEPS[k] for k in (args.sweep_kind or ["IdVg"])]
    templates = QueryTemplateSet()
    if args.queries:
        templates = QueryTemplateSet.from_lines(Path(args.queries).read_text(encoding="utf-8").splitlines())

    records = build_corpus(
        variants,
        sweeps,
        templates,
        args.seed,
        base=base,
        family=args.family,
        mesh=args.mesh,
        models=args.models,
        doping=args.doping,
        workers=args.workers,
    )
    if args.augment_model:
        records = augment_queries(records, _llm_client(args.augment_model, args.replay))
    path = write_corpus(records, args.out)
    print(f"Records: {len(records)} from {len(variants)} variants x {len(sweeps)} sweeps")
    print(f"Wrote: {path}")
    return EXIT_OK


def _pick_iteration(run: Path, requested: Optional[int]) -> int:
    if requested is not None:
        return requested
    report_path = run / REPORT_JSON
    if report_path.is_file():
        best = json.loads(report_path.read_text(encoding="utf-8")).get("best_index")
        if best is not None:
            return int(best)
    converged = [r.index for r in load_trajectory(run / TRAJECTORY_FILE) if r.converged]
    if not converged:
        raise ConfigError(f"run {run} has no convergent iteration to plot")
    return converged[-1]


def cmd_plot(args: argparse.Namespace) -> int:
    run = Path(args.run)
    if args.what == "trajectory":
        history = load_trajectory(run / TRAJECTORY_FILE)
        if not history:
            raise ConfigError(f"run {run} has no trajectory")
        targets = load_config(run / "config.json").targets if (run / "config.json").is_file() else SpecTargets()
        paths = plot_trajectory(history, targets, args.out)
    else:
        index = _pick_iteration(run, args.iteration)
        result_path = run / "results" / f"iter_{index}.json"
        if not result_path.is_file():
            raise ConfigError(f"no result document for iteration {index} ({result_path})")
        loaded = load_results(result_path)
        if args.what == "iv":
            paths = plot_iv(loaded.iv, args.out)
        else:
            if loaded.bands is None:
                raise ConfigError(f"iteration {index} carries no band diagrams")
            paths = plot_bands(loaded.bands[0], loaded.bands[1], args.out)
    for p in paths:
        print(f"Wrote: {p}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _deck_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=sorted(FAMILIES), default="nsfet", help="Device family template (default: nsfet)")
    p.add_argument("--mesh", choices=sorted(MESH_TAGS), default="default", help="Mesh density (default: default)")
    p.add_argument("--models", choices=sorted(MODEL_TAGS), default="drift-diffusion", help="Physics model set")
    p.add_argument("--doping", choices=sorted(DOPING_PROFILES), default="constant", help="Doping profile")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="tcadloop", description="Closed-loop TCAD deck generation, simulation and device optimization.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--replay", default=None, help="Serve agent responses from this transcript; no network")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Log level (default: INFO)")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=ArgumentParser)

    opt = sub.add_parser("optimize", help="Run (or resume) the optimization loop.")
    opt.add_argument("--config", required=True, help="RunConfig file (.json, .yml, .yaml)")
    opt.add_argument("--resume", action="store_true", help="Continue the run in the config's run_dir")

    sim = sub.add_parser("simulate", help="Simulate one design and print the outcome JSON.")
    sim.add_argument("--params", default=None, help="DesignParams JSON (default: reference design)")
    sim.add_argument("--sweep", default=None, help="SweepConfig JSON (default: IdVg 0..vdd, 10 mV)")
    sim.add_argument("--backend", default=None, help="BackendConfig JSON (default: surrogate)")
    sim.add_argument("--temperature", type=float, default=300.0, help="Lattice temperature in K")
    sim.add_argument("--out", default=None, help="Also write the I-V curve as CSV plus a JSON sidecar")

    met = sub.add_parser("metrics", help="Extract Ion, Ioff, SS and the on-off ratio from an I-V file.")
    met.add_argument("--iv", required=True, help="I-V file: two columns vg,id")
    met.add_argument("--vdd", required=True, type=float, help="Supply voltage in V")
    met.add_argument("--spec", default=None, help="SpecTargets JSON (default: IRDS-2024)")

    deck = sub.add_parser("deckgen", help="Write the SDE/SDevice deck pair for one design.")
    deck.add_argument("--params", default=None, help="DesignParams JSON (default: reference design)")
    deck.add_argument("--sweep", default=None, help="SweepConfig JSON")
    deck.add_argument("--kind", choices=SWEEP_KINDS, default="IdVg", help="Default sweep when --sweep is absent")
    deck.add_argument("--out", required=True, help="Output directory")
    deck.add_argument("--name", default="device", help="Deck file stem (default: device)")
    _deck_options(deck)

    corp = sub.add_parser("corpus", help="Expand a base design into a query/deck JSONL corpus.")
    corp.add_argument("--base", default=None, help="Base DesignParams JSON (default: reference design)")
    corp.add_argument("--space", default=None, help="ParamSpace JSON (default: shipped bounds)")
    corp.add_argument("--strategy", choices=["grid", "lhs"], default="lhs")
    corp.add_argument("--axis", action="append", default=[], help="Grid axis as name=levels (repeatable)")
    corp.add_argument("--samples", type=int, default=16, help="Latin-hypercube sample count")
    corp.add_argument("--seed", type=int, default=0)
    corp.add_argument("--sweep-kind", action="append", choices=SWEEP_KINDS, help="Sweep kinds (repeatable, default IdVg)")
    corp.add_argument("--queries", default=None, help="File with one query template per line")
    corp.add_argument("--workers", type=int, default=1)
    corp.add_argument("--augment-model", default=None, help="Rephrase queries with this chat model")
    corp.add_argument("--out", required=True, help="Output JSONL path")
    _deck_options(corp)

    plot = sub.add_parser("plot", help="Write CSV and SVG plots of a run.")
    plot.add_argument("--run", required=True, help="Run directory")
    plot.add_argument("--what", required=True, choices=PLOT_KINDS)
    plot.add_argument("--out", required=True, help="Output path stem; .csv and .svg are appended")
    plot.add_argument("--iteration", type=int, default=None, help="Iteration for iv/bands (default: best)")

    return parser


COMMANDS = {
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "metrics": cmd_metrics,
    "deckgen": cmd_deckgen,
    "corpus": cmd_corpus,
    "plot": cmd_plot,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.cmd](args)
    except (TcadLoopError, OSError) as exc:
        log.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    raise SystemExit(main())
