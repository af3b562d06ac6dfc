from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Sequence

from .errors import InvariantError
from .params import DesignParams
from .postproc import PerformanceMetrics
from .surrogate import SimulationOutcome, outcome_from_dict


@dataclass(frozen=True)
class IterationRecord:
    """One step of the loop: the design, what the backend made of it, and why it was proposed."""

    index: int
    params: DesignParams
    outcome: SimulationOutcome
    metrics: Optional[PerformanceMetrics]
    rationale: str
    wall_time_s: float = 0.0
    recovery: bool = False  # proposed through the non-convergence recovery prompt
    proposed_by: str = "seed"

    def __post_init__(self) -> None:
        if self.index < 0:
            raise InvariantError(f"iteration index must be >= 0, got {self.index}")
        if (self.metrics is not None) != self.outcome.converged:
            raise InvariantError(f"iteration {self.index}: metrics must be present exactly when the outcome converged")

    @property
    def converged(self) -> bool:
        return self.outcome.converged

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "params": self.params.to_dict(),
            "outcome": self.outcome.to_dict(),
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "rationale": self.rationale,
            "wall_time_s": self.wall_time_s,
            "recovery": self.recovery,
            "proposed_by": self.proposed_by,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "IterationRecord":
        return cls(
            index=int(data["index"]),
            params=DesignParams.from_dict(data["params"]),
            outcome=outcome_from_dict(data["outcome"]),
            metrics=None if data.get("metrics") is None else PerformanceMetrics.from_dict(data["metrics"]),
            rationale=str(data.get("rationale", "")),
            wall_time_s=float(data.get("wall_time_s", 0.0)),
            recovery=bool(data.get("recovery", False)),
            proposed_by=str(data.get("proposed_by", "seed")),
        )


def last_converged(history: Sequence[IterationRecord]) -> Optional[IterationRecord]:
    for record in reversed(history):
        if record.converged:
            return record
    return None
