from __future__ import annotations

import math
from typing import List, Optional, Sequence

import pytest

from tcadloop.agent.proposal import Proposal
from tcadloop.deckgen.sweep import SweepConfig
from tcadloop.history import IterationRecord
from tcadloop.params import BAD_SEED_DESIGN, REFERENCE_DESIGN, DesignParams, ParamSpace, SpecTargets
from tcadloop.postproc import PerformanceMetrics
from tcadloop.surrogate import Converged, IVCurve, NonConvergent


@pytest.fixture
def r1() -> DesignParams:
    return REFERENCE_DESIGN


@pytest.fixture
def bad_seed() -> DesignParams:
    return BAD_SEED_DESIGN


@pytest.fixture
def space() -> ParamSpace:
    return ParamSpace.default()


@pytest.fixture
def targets() -> SpecTargets:
    return SpecTargets()


@pytest.fixture
def idvg() -> SweepConfig:
    return SweepConfig("IdVg", fixed_bias=0.65, start=0.0, stop=0.65, step=0.01)


def exponential_curve(slope_mv: float, amplitude: float = 1e-12, stop: float = 0.30, step: float = 0.005, vd: float = 0.30) -> IVCurve:
    n = int(round(stop / step)) + 1
    vg = [round(i * step, 12) for i in range(n)]
    return IVCurve.from_arrays(vd, vg, [amplitude * 10 ** (v / (slope_mv / 1000.0)) for v in vg])


def converged_record(index: int, params: DesignParams, ion: float, ioff: float, ss: float, targets: SpecTargets, **kw) -> IterationRecord:
    """A record with hand-picked metrics; the curve is a placeholder."""
    metrics = PerformanceMetrics.from_currents(ion, ioff, ss).judged(targets)
    iv = IVCurve.from_arrays(params.vdd, [0.0, params.vdd], [ioff, ion])
    return IterationRecord(index, params, Converged(iv), metrics, kw.pop("rationale", "test"), **kw)


def failed_record(index: int, params: DesignParams, diagnostic: str = "aspect rule: test", **kw) -> IterationRecord:
    return IterationRecord(index, params, NonConvergent(diagnostic), None, kw.pop("rationale", "test"), **kw)


class ScriptedAgent:
    """Replays a fixed list of designs; ``recover`` calls are logged."""

    name = "scripted"

    def __init__(self, designs: Sequence[DesignParams]):
        self.designs = list(designs)
        self.calls: List[str] = []
        self.recover_args: List[tuple] = []

    def _next(self) -> DesignParams:
        return self.designs[min(len(self.calls) - 1, len(self.designs) - 1)]

    def propose(self, history: Sequence[IterationRecord]) -> Proposal:
        self.calls.append("propose")
        return Proposal(self._next(), "scripted")

    def recover(self, history, last_good: Optional[IterationRecord], failed: DesignParams, diagnostic: str) -> Proposal:
        self.calls.append("recover")
        self.recover_args.append((last_good, failed, diagnostic))
        return Proposal(self._next(), "scripted recovery")


def close(a: float, b: float, tol: float) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)
