"""Run metrics: cumulative tracking error, survival and step-length tracking."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np


def cumulative_tracking_error(times, actual, desired) -> float:
    """Trapezoid-rule ``integral ||actual - desired||^2 dt`` over logged samples."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(actual, dtype=float) - np.asarray(desired, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    if t.size != d.shape[0]:
        raise ValueError(f"{t.size} times for {d.shape[0]} samples")
    if t.size < 2:
        return 0.0
    sq = np.sum(d * d, axis=1)
    return float(np.sum(0.5 * (sq[1:] + sq[:-1]) * np.diff(t)))


@dataclass
class MetricsReport:
    """Outcome of one closed-loop run.

    ``fit_seconds`` holds wall-clock durations of online refits; it is kept
    apart from the deterministic metrics returned by :meth:`metrics`.
    """

    scenario: str
    controller: str
    seed: int
    speed: float
    tracking_error: float
    survival_time: float
    success: bool
    max_time: float
    desired_steps: List[float] = field(default_factory=list)
    achieved_steps: List[float] = field(default_factory=list)
    infeasible: int = 0
    solver_failures: int = 0
    rebuilds: int = 0
    fit_seconds: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.tracking_error < 0:
            raise ValueError("tracking error must be non-negative")
        if self.survival_time > self.max_time + 1e-9:
            raise ValueError("survival time exceeds the simulated horizon")

    @property
    def step_errors(self) -> np.ndarray:
        return np.abs(np.asarray(self.achieved_steps) - np.asarray(self.desired_steps))

    @property
    def mean_step_length(self) -> float:
        return float(np.mean(self.achieved_steps)) if self.achieved_steps else float("nan")

    @property
    def mean_step_error(self) -> float:
        e = self.step_errors
        return float(np.mean(e)) if e.size else float("nan")

    def metrics(self) -> dict:
        """Deterministic scalar metrics, in a fixed order."""
        return {
            "tracking_error": self.tracking_error,
            "survival_time": self.survival_time,
            "success": float(self.success),
            "mean_step_length": self.mean_step_length,
            "mean_step_error": self.mean_step_error,
            "steps": float(len(self.achieved_steps)),
            "infeasible": float(self.infeasible),
        }

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)
