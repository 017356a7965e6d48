"""Periodic refit of the transition matrix on a trailing data window."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..behavioral import DdpcHyperparams, IoTrajectory, fit_transition_matrix, partition
from ..errors import DegenerateData, SignalTooShort


@dataclass(frozen=True)
class UpdateSchedule:
    """When and on how much data the transition matrix is rebuilt.

    Attributes:
        hyper: Horizons and sample interval; ``hyper.T`` is the window length.
        period: Seconds between rebuilds.
        warmup: Seconds of data collected before the first rebuild.
        drift_tolerance: Optional bound on the relative change between
            successive matrices; larger jumps are logged, never rejected.
    """

    hyper: DdpcHyperparams = DdpcHyperparams(T=250, T_ini=10, N=20, delta_t=0.02)
    period: float = 1.5
    warmup: float = 5.0
    drift_tolerance: Optional[float] = None

    def __post_init__(self):
        if not self.period > 0 or self.warmup < 0:
            raise ValueError("period must be positive and warmup non-negative")


@dataclass
class OnlineUpdater:
    """Stateful wrapper deciding when to refit and logging every attempt."""

    schedule: UpdateSchedule = field(default_factory=UpdateSchedule)
    events: List[dict] = field(default_factory=list)
    last_build: Optional[float] = None

    def due(self, t: float, samples: int) -> bool:
        s = self.schedule
        if t < s.warmup - 1e-9 or samples < s.hyper.T:
            return False
        return self.last_build is None or t - self.last_build >= s.period - 1e-9

    def maybe_update(self, t: float, window: IoTrajectory, current=None):
        """Refit on the trailing ``hyper.T`` samples of ``window`` if a rebuild is due.

        Returns the new matrix, or ``None`` when nothing is due or the fit
        failed (the caller keeps its current matrix).
        """
        if not self.due(t, window.T):
            return None
        self.last_build = t
        g, event = online_update_policy(window, self.schedule, current)
        event["time"] = float(t)
        self.events.append(event)
        return g


def online_update_policy(window: IoTrajectory, schedule: UpdateSchedule, current=None):
    """Fit ``G`` on the trailing window; returns ``(matrix or None, event)``.

    The event records the wall-clock fit duration, the outcome, and the
    relative change from ``current`` when one is given.
    """
    hyper = schedule.hyper
    recent = window.tail(hyper.T)
    start = time.perf_counter()
    try:
        if recent.T < hyper.T:
            raise SignalTooShort(f"window holds {recent.T} of {hyper.T} samples")
        g = fit_transition_matrix(partition(recent, hyper))
    except (DegenerateData, SignalTooShort) as exc:
        return None, {"type": "rebuild", "ok": False, "error": str(exc),
                      "fit_seconds": time.perf_counter() - start}
    event = {"type": "rebuild", "ok": True, "fit_seconds": time.perf_counter() - start,
             "relative_residual": g.relative_residual}
    if current is not None and current.g.shape == g.g.shape:
        drift = float(np.linalg.norm(g.g - current.g) / max(np.linalg.norm(current.g), 1e-300))
        event["drift"] = drift
        if schedule.drift_tolerance is not None:
            event["drift_exceeded"] = drift > schedule.drift_tolerance
    return g, event
