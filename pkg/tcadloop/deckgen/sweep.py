from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Dict, Mapping

import numpy as np

from ..errors import ConfigError

SWEEP_KINDS = ("IdVg", "IdVd", "CV")
MIN_SWEEP_POINTS = 10


@dataclass(frozen=True)
class SweepConfig:
    """
    A bias sweep.

    IdVg ramps the gate at a fixed drain bias, IdVd ramps the drain at a fixed
    gate bias, CV ramps the gate with a small-signal analysis at a fixed drain
    bias. All voltages in V.
    """

    kind: str = "IdVg"
    fixed_bias: float = 0.65
    start: float = 0.0
    stop: float = 0.65
    step: float = 0.01

    def __post_init__(self) -> None:
        if not isinstance(self.kind, str) or not self.kind:
            raise ConfigError(f"sweep kind must be a non-empty string, got {self.kind!r}")
        if not self.start < self.stop:
            raise ConfigError(f"sweep start {self.start} must be < stop {self.stop}")
        if not self.step > 0:
            raise ConfigError(f"sweep step must be > 0, got {self.step}")
        if self.num_points < MIN_SWEEP_POINTS:
            raise ConfigError(
                f"sweep {self.start}..{self.stop} step {self.step} yields {self.num_points} points, "
                f"need >= {MIN_SWEEP_POINTS}"
            )

    @property
    def _steps(self) -> int:
        return int(math.floor((self.stop - self.start) / self.step + 1e-9))

    @property
    def _ends_off_grid(self) -> bool:
        return self.stop - (self.start + self.step * self._steps) > 1e-9

    @property
    def num_points(self) -> int:
        return self._steps + 1 + int(self._ends_off_grid)

    def grid(self) -> np.ndarray:
        """Uniform points from start; stop is appended when the step does not divide the span."""
        # rounded so that 0.01 * 65 lands on 0.65 exactly
        vg = np.round(self.start + self.step * np.arange(self._steps + 1), 12)
        if self._ends_off_grid:
            vg = np.append(vg, self.stop)
        return vg

    def for_supply(self, vdd: float) -> "SweepConfig":
        """Retarget an IdVg sweep so it ends at, and biases the drain to, vdd."""
        if self.kind != "IdVg":
            return self
        return replace(self, fixed_bias=vdd, stop=vdd)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "fixed_bias": self.fixed_bias,
            "start": self.start,
            "stop": self.stop,
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SweepConfig":
        unknown = sorted(set(data) - {"kind", "fixed_bias", "start", "stop", "step"})
        if unknown:
            raise ConfigError(f"unknown sweep fields: {', '.join(unknown)}")
        return cls(**dict(data))
