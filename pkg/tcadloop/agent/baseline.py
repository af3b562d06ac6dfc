"""
Hinge score against the specification targets, and a deterministic
coordinate search that needs no network.

The search keeps no state of its own: every call re-derives the center,
the step level and the observed score changes from the history, so a
resumed run proposes exactly what an uninterrupted one would.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from ..errors import EmptyHistory, ExhaustedSpace, UnrepairableParams
from ..history import IterationRecord
from ..params import FIELD_ORDER, DesignParams, ParamSpace, SpecTargets, clamp, round_half_up
from ..postproc import PerformanceMetrics
from .proposal import Proposal

log = logging.getLogger(__name__)

DEFAULT_STEPS: Tuple[float, ...] = (0.25, 0.125, 0.0625, 0.03125)


@dataclass
class ScoreComponent:
    name: str
    value: float
    description: str


@dataclass
class ScoreBreakdown:
    total: float  # 0.0 exactly when every target is met
    components: List[ScoreComponent]
    explanation: List[str]


def score_breakdown(m: PerformanceMetrics, t: SpecTargets) -> ScoreBreakdown:
    """
    Sum of four hinges, each zero when its target is met:
    relative SS excess, decades of excess Ioff, decades of missing Ion and
    the missing on-off ratio.
    """
    terms = {
        "ss": (max(0.0, m.ss - t.ss_max) / t.ss_max, f"SS {m.ss:.2f} vs <= {t.ss_max:g} mV/dec, relative excess"),
        "ioff": (max(0.0, math.log10(m.ioff / t.ioff_max)), f"Ioff {m.ioff:.3e} vs <= {t.ioff_max:.1e} A/um, decades over"),
        "ion": (max(0.0, math.log10(t.ion_min / m.ion)), f"Ion {m.ion:.3e} vs >= {t.ion_min:.2e} A/um, decades under"),
        "onoff": (max(0.0, t.onoff_min - m.onoff), f"on-off {m.onoff:.2f} vs >= {t.onoff_min:.2f}, shortfall"),
    }

    components: List[ScoreComponent] = []
    explanation: List[str] = []
    total = 0.0
    for name, (value, what) in terms.items():
        total += value
        components.append(ScoreComponent(name=name, value=value, description=what))
        explanation.append(f"+{value:.4f} from {name} ({what})")

    explanation.insert(0, f"score total = {total:.4f}")
    return ScoreBreakdown(total=total, components=components, explanation=explanation)


def hinge_score(m: PerformanceMetrics, t: SpecTargets) -> float:
    return score_breakdown(m, t).total


def record_score(record: IterationRecord, t: SpecTargets) -> float:
    """Non-convergent records score +inf."""
    if record.metrics is None:
        return math.inf
    return hinge_score(record.metrics, t)


def best_record(history: Sequence[IterationRecord], t: SpecTargets) -> Optional[IterationRecord]:
    """Lowest-scoring converged record; the earliest wins ties."""
    best: Optional[IterationRecord] = None
    best_score = math.inf
    for record in history:
        s = record_score(record, t)
        if record.converged and (best is None or s < best_score):
            best, best_score = record, s
    return best


def _single_move(parent: DesignParams, child: DesignParams) -> Optional[Tuple[str, int]]:
    moved = [name for name in FIELD_ORDER if getattr(parent, name) != getattr(child, name)]
    if len(moved) != 1:
        return None
    name = moved[0]
    return name, (1 if getattr(child, name) > getattr(parent, name) else -1)


class BaselineAgent:
    """Pattern search over one coordinate at a time, polling + before - in field order."""

    name = "baseline"

    def __init__(
        self,
        space: ParamSpace,
        targets: SpecTargets,
        seed: DesignParams,
        steps: Sequence[float] = DEFAULT_STEPS,
        shuffle_seed: Optional[int] = None,
    ):
        if not steps or any(not 0 < s <= 1 for s in steps):
            raise ValueError(f"step schedule must be non-empty fractions in (0, 1], got {list(steps)}")
        self.space = space
        self.targets = targets
        self.seed = seed
        self.steps = tuple(steps)
        self.shuffle_seed = shuffle_seed

    def _observed_deltas(self, history: Sequence[IterationRecord]) -> Dict[Tuple[str, int], float]:
        """Score change seen last time each (field, direction) move was tried from the best-so-far design."""
        deltas: Dict[Tuple[str, int], float] = {}
        parent: Optional[IterationRecord] = None
        parent_score = math.inf
        for record in history:
            score = record_score(record, self.targets)
            if parent is not None:
                move = _single_move(parent.params, record.params)
                if move is not None:
                    if not math.isfinite(score):
                        deltas[move] = math.inf
                    elif not math.isfinite(parent_score):
                        deltas[move] = 0.0
                    else:
                        deltas[move] = score - parent_score
            if record.converged and (parent is None or score < parent_score):
                parent, parent_score = record, score
        return deltas

    def _neighbour(self, center: DesignParams, name: str, sign: int, step: float) -> Optional[DesignParams]:
        b = self.space.bounds[name]
        current = getattr(center, name)
        u = min(1.0, max(0.0, self.space.normalize(name, current) + sign * step))
        if u <= 0.0:
            value = b.lower
        elif u >= 1.0:
            value = b.upper
        else:
            value = self.space.denormalize(name, u)
        if b.integer:
            value = round_half_up(value)
            if value == current:
                value = current + sign
            value = min(max(value, math.ceil(b.lower)), math.floor(b.upper))
        try:
            return clamp(center.replace(**{name: value}), self.space)
        except UnrepairableParams:
            return None

    def propose(self, history: Sequence[IterationRecord]) -> Proposal:
        if not history:
            raise EmptyHistory("coordinate search needs the evaluated seed design")

        best = best_record(history, self.targets)
        if best is None:
            center, center_score, center_label = self.seed, math.inf, "seed design"
        else:
            center, center_score = best.params, record_score(best, self.targets)
            center_label = f"iteration {best.index}"

        evaluated = {record.params.key() for record in history}
        deltas = self._observed_deltas(history)
        polls = [(name, sign) for name in FIELD_ORDER for sign in (1, -1)]
        if self.shuffle_seed is not None:
            random.Random(f"{self.shuffle_seed}:{len(history)}").shuffle(polls)

        for step in self.steps:
            candidates = []
            for order, (name, sign) in enumerate(polls):
                candidate = self._neighbour(center, name, sign, step)
                if candidate is None or candidate.key() == center.key() or candidate.key() in evaluated:
                    continue
                predicted = center_score + deltas.get((name, sign), 0.0)
                candidates.append((predicted, order, candidate, name, sign))
            if not candidates:
                continue

            candidates.sort(key=lambda c: (c[0], c[1]))
            predicted, _, params, name, sign = candidates[0]
            rationale = (
                f"coordinate search: {name} {'+' if sign > 0 else '-'}{step:g} of its range from "
                f"{center_label} (score {center_score:.4f}, predicted {predicted:.4f})"
            )
            log.info("baseline proposal field=%s sign=%+d step=%g center=%s", name, sign, step, center_label)
            return Proposal(params=params, rationale=rationale, raw_response="")

        raise ExhaustedSpace(f"every neighbour of {center_label} at every step {list(self.steps)} was evaluated")

    def recover(
        self,
        history: Sequence[IterationRecord],
        last_good: Optional[IterationRecord],
        failed: DesignParams,
        diagnostic: str,
    ) -> Proposal:
        # a non-convergent design already scores +inf, so the normal poll steers away from it
        proposal = self.propose(history)
        return Proposal(proposal.params, f"recovery: {proposal.rationale}", proposal.raw_response)


def propose_baseline(
    history: Sequence[IterationRecord],
    space: ParamSpace,
    targets: SpecTargets,
    *,
    seed: DesignParams,
    steps: Sequence[float] = DEFAULT_STEPS,
    shuffle_seed: Optional[int] = None,
) -> Proposal:
    return BaselineAgent(space, targets, seed, steps, shuffle_seed).propose(history)
