"""Closed-loop walker runs and data collection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..behavioral import IoTrajectory
from ..plants.walker import LipWalker, PerturbationSchedule, WalkerParams, observe
from ..reference import GaitLibrary
from .controllers import Controller, DitheredController, IntervalSampler, StandingController

MAX_TIME = 11.0


@dataclass
class RunLog:
    times: np.ndarray
    eta: np.ndarray          # true redundant output
    r_eta: np.ndarray        # gait reference
    mu: np.ndarray           # applied CoP in both foot frames
    samples: Optional[IoTrajectory] = None
    walker: Optional[LipWalker] = field(default=None, repr=False)

    @property
    def fallen(self) -> bool:
        return self.walker.fallen

    @property
    def survival_time(self) -> float:
        return self.walker.fall_time if self.walker.fallen else float(self.times[-1])


def run_closed_loop(walker: LipWalker, controller: Controller, duration: float = MAX_TIME,
                    sample_interval: Optional[float] = None, reference: Optional[Controller] = None) -> RunLog:
    """Step ``walker`` under ``controller`` until ``duration`` or a fall.

    Args:
        walker: Plant, already positioned.
        controller: Produces a CoP command and step target each tick.
        duration: Simulated seconds.
        sample_interval: When set, measured ``(mu, eta)`` pairs are also
            collected at this cadence into ``RunLog.samples``.
        reference: Controller whose gait reference defines the tracking
            error; defaults to ``controller`` itself.
    """
    dt = walker.params.control_dt
    n = int(round(duration / dt))
    ref_ctl = reference or controller
    times, etas, refs, mus = [], [], [], []
    sm, se = [], []
    sampler = None if sample_interval is None else IntervalSampler(sample_interval, dt)
    for k in range(n + 1):
        meas = walker.measure()
        if sampler is not None:
            got = sampler.push(meas)
            if got is not None:
                sm.append(got[1])
                se.append(got[2])
        s = walker.state
        _, eta_true = observe(s)
        times.append(s.time)
        etas.append(eta_true)
        refs.append(ref_ctl.reference(meas, [s.time]).r_eta[0])
        mus.append(meas.mu)
        if k == n or walker.fallen:
            break
        cmd = controller(meas)
        walker.step(cmd.cop, cmd.step_target)
    samples = None
    if sampler is not None and sm:
        samples = IoTrajectory(np.array(sm), np.array(se), sample_interval)
    return RunLog(np.array(times), np.array(etas), np.array(refs), np.array(mus), samples, walker)


def collect_trajectory(params: WalkerParams, gait: GaitLibrary, step_length: float,
                       samples: int, delta_t: float, seed: int = 0, amplitude: float = 0.02,
                       perturbation: Optional[PerturbationSchedule] = None) -> tuple:
    """Record ``samples`` measured I/O pairs at ``delta_t`` under dithered nominal walking.

    A zero step length records standing balance over one foot instead of
    stepping in place. Returns ``(trajectory, walker)``; if the walker falls,
    the trajectory holds what was recorded before the fall.
    """
    if step_length == 0:
        walker = LipWalker.standing(params, perturbation=perturbation, seed=seed)
        kind = StandingController
    else:
        walker = LipWalker.on_orbit(params, step_length, perturbation=perturbation, seed=seed)
        kind = DitheredController
    ctl = kind(gait, step_length, params.omega_nominal, amplitude=amplitude, hold=delta_t,
               seed=seed + 7919)
    duration = samples * delta_t
    log = run_closed_loop(walker, ctl, duration, sample_interval=delta_t)
    return log.samples, walker
