"""
Simulation backends.

``surrogate`` evaluates the analytic model in-process. ``external`` writes
the deck pair into a working directory and runs a structure command and a
device command (or one combined command) there, then reads back an I-V file.
Anything the solver side does wrong (exit status, timeout, missing or
unreadable output) becomes a NonConvergent outcome carrying the last lines
of the captured output; only configuration and I/O problems raise.
"""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .deckgen.emit import FAMILIES, MESH_TAGS, MODEL_TAGS, build_deck_pair, write_deck_pair
from .deckgen.sweep import SweepConfig
from .errors import BackendIOError, ConfigError, FatalBackendError, InvariantError, ParseError
from .params import DesignParams
from .surrogate import Converged, IVCurve, NonConvergent, SimulationOutcome, simulate_iv

log = logging.getLogger(__name__)

BACKEND_KINDS = ("surrogate", "external")
IV_FORMATS = ("csv", "tabular")
PLACEHOLDERS = ("{deck}", "{workdir}")
DIAGNOSTIC_LINES = 50


@dataclass(frozen=True)
class BackendConfig:
    """
    ``{deck}`` expands to the deck file of the step (``<name>_dvs.cmd`` for the
    structure command, ``<name>_des.cmd`` for the device command) and to the
    ``<name>`` stem for a combined ``command``. ``{workdir}`` expands to the
    working directory, which is also the commands' cwd.
    """

    kind: str = "surrogate"
    structure_command: Optional[str] = None
    device_command: Optional[str] = None
    command: Optional[str] = None
    workdir: Optional[str] = None
    timeout_s: float = 3600.0
    iv_glob: str = "*.csv"
    iv_format: str = "csv"
    env: Mapping[str, str] = field(default_factory=dict)
    family: str = "nsfet"
    mesh: str = "default"
    models: str = "drift-diffusion"

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"backend kind must be one of {list(BACKEND_KINDS)}, got {self.kind!r}")
        if isinstance(self.timeout_s, bool) or not isinstance(self.timeout_s, (int, float)) or not self.timeout_s > 0:
            raise ConfigError(f"backend timeout_s must be > 0, got {self.timeout_s!r}")
        if self.iv_format not in IV_FORMATS:
            raise ConfigError(f"iv_format must be one of {list(IV_FORMATS)}, got {self.iv_format!r}")
        if self.family not in FAMILIES or self.mesh not in MESH_TAGS or self.models not in MODEL_TAGS:
            raise ConfigError(f"unknown deck options family={self.family!r} mesh={self.mesh!r} models={self.models!r}")
        if self.kind == "external":
            if not self.workdir:
                raise ConfigError("external backend needs a workdir")
            if self.command is None and (self.structure_command is None or self.device_command is None):
                raise ConfigError("external backend needs structure_command and device_command, or command")
            for name, template in self.templates():
                missing = [p for p in PLACEHOLDERS if p not in template]
                if missing:
                    raise ConfigError(f"backend {name} {template!r} lacks placeholder(s) {', '.join(missing)}")

    def templates(self) -> List[Tuple[str, str]]:
        if self.command is not None:
            return [("command", self.command)]
        return [("structure_command", self.structure_command or ""), ("device_command", self.device_command or "")]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "structure_command": self.structure_command,
            "device_command": self.device_command,
            "command": self.command,
            "workdir": self.workdir,
            "timeout_s": self.timeout_s,
            "iv_glob": self.iv_glob,
            "iv_format": self.iv_format,
            "env": dict(self.env),
            "family": self.family,
            "mesh": self.mesh,
            "models": self.models,
        }

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "BackendConfig":
        data = dict(data or {})
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown backend fields: {', '.join(unknown)}")
        if "env" in data:
            data["env"] = {str(k): str(v) for k, v in dict(data["env"] or {}).items()}
        return cls(**data)


def tail(text: str, lines: int = DIAGNOSTIC_LINES) -> str:
    return "\n".join(text.splitlines()[-lines:])


def _as_text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bytes):
        return value.decode("utf-8", errors="replace")
    return str(value)


def parse_iv_file(text: str, fmt: str = "csv", *, vd: float = 0.0, temperature: float = 300.0) -> IVCurve:
    """
    Two numeric columns (vg, id), comma-separated for ``csv`` or
    whitespace-separated for ``tabular``. A non-numeric first row is taken
    as a header; ``#`` lines are comments. Rows are sorted by vg.
    """
    if fmt not in IV_FORMATS:
        raise ConfigError(f"unknown I-V format {fmt!r}")

    rows: List[Tuple[float, float, int]] = []
    seen_data = False
    header_allowed = True
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in (line.split(",") if fmt == "csv" else line.split())]
        try:
            if len(cells) < 2:
                raise ValueError
            vg, current = float(cells[0]), float(cells[1])
        except ValueError:
            if header_allowed and not seen_data:
                header_allowed = False
                continue
            raise ParseError(f"expected two numeric columns, got {raw!r}", line=line_no)
        seen_data = True
        header_allowed = False
        rows.append((vg, current, line_no))

    if len(rows) < IVCurve.MIN_POINTS:
        raise ParseError(f"need at least {IVCurve.MIN_POINTS} data rows, got {len(rows)}")

    rows.sort(key=lambda r: r[0])
    for (a, _, la), (b, _, lb) in zip(rows, rows[1:]):
        if a == b:
            raise InvariantError(f"duplicate vg={a:g} on lines {la} and {lb}")
    for vg, current, line_no in rows:
        if not current > 0:
            raise InvariantError(f"line {line_no}: id must be > 0, got {current!r} at vg={vg:g}")

    return IVCurve.from_arrays(vd, [r[0] for r in rows], [r[1] for r in rows], temperature)


def _expand(template: str, deck: str, workdir: str) -> List[str]:
    return [tok.replace("{deck}", deck).replace("{workdir}", workdir) for tok in shlex.split(template)]


def _snapshot(workdir: Path, pattern: str) -> Dict[Path, int]:
    return {p: p.stat().st_mtime_ns for p in workdir.glob(pattern) if p.is_file()}


def _run_step(step: str, argv: List[str], cfg: BackendConfig, workdir: Path, env: Dict[str, str]) -> Optional[str]:
    """Run one command; return a diagnostic on failure, None on success."""
    log.info("backend step=%s argv=%s cwd=%s", step, " ".join(shlex.quote(a) for a in argv), workdir)
    t0 = time.perf_counter()
    try:
        proc = subprocess.run(
            argv,
            cwd=str(workdir),
            env=env,
            capture_output=True,
            text=True,
            timeout=cfg.timeout_s,
        )
    except subprocess.TimeoutExpired as exc:
        log.warning("backend step=%s timeout_s=%s", step, cfg.timeout_s)
        output = _as_text(exc.stdout) + _as_text(exc.stderr)
        return tail(f"{output}\n{step} timed out after {cfg.timeout_s:g} s")
    except OSError as exc:
        raise FatalBackendError(f"{step} could not be started: {exc}") from exc

    log.info("backend step=%s exit=%d seconds=%.2f", step, proc.returncode, time.perf_counter() - t0)
    if proc.returncode != 0:
        output = (proc.stdout or "") + (proc.stderr or "")
        return tail(f"{output}\n{step} exited with status {proc.returncode}")
    return None


def _run_external(params: DesignParams, sweep: SweepConfig, cfg: BackendConfig, name: str) -> SimulationOutcome:
    workdir = Path(cfg.workdir or ".")
    try:
        workdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise BackendIOError(f"cannot create backend workdir {workdir}: {exc}") from exc
    if not os.access(workdir, os.W_OK):
        raise BackendIOError(f"backend workdir {workdir} is not writable")

    pair = build_deck_pair(params, sweep, family=cfg.family, mesh=cfg.mesh, models=cfg.models, name=name)
    try:
        sde_path, sdevice_path = write_deck_pair(pair, workdir, name)
    except OSError as exc:
        raise BackendIOError(f"cannot write decks into {workdir}: {exc}") from exc

    env = dict(os.environ)
    env.update(cfg.env)
    wd = str(workdir)
    before = _snapshot(workdir, cfg.iv_glob)

    if cfg.command is not None:
        steps = [("command", _expand(cfg.command, str(workdir / name), wd))]
    else:
        steps = [
            ("structure", _expand(cfg.structure_command or "", str(sde_path), wd)),
            ("device", _expand(cfg.device_command or "", str(sdevice_path), wd)),
        ]
    for step, argv in steps:
        failure = _run_step(step, argv, cfg, workdir, env)
        if failure is not None:
            return NonConvergent(failure)

    after = _snapshot(workdir, cfg.iv_glob)
    fresh = sorted((mtime, str(p)) for p, mtime in after.items() if before.get(p) != mtime)
    if not fresh:
        return NonConvergent(f"no I-V output matching {cfg.iv_glob!r} in {workdir}")
    iv_path = Path(fresh[-1][1])
    try:
        iv = parse_iv_file(
            iv_path.read_text(encoding="utf-8", errors="replace"), cfg.iv_format, vd=sweep.fixed_bias
        )
    except (ParseError, InvariantError) as exc:
        log.warning("backend unparseable output path=%s error=%s", iv_path, exc)
        return NonConvergent(tail(f"unparseable I-V output {iv_path.name}: {exc}"))
    return Converged(iv=iv)


def run(
    params: DesignParams,
    sweep: SweepConfig,
    cfg: BackendConfig,
    *,
    name: str = "device",
    temperature: float = 300.0,
) -> SimulationOutcome:
    if cfg.kind == "surrogate":
        return simulate_iv(params, sweep, temperature=temperature)
    return _run_external(params, sweep, cfg, name)
