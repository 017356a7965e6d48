"""Walker controllers sharing one low-level CoP tracker.

Every controller produces a desired CoM motion and a feedforward CoP in the
stance frame; the tracker turns them into a CoP command using divergent
component of motion feedback::

    cop = p_stance + mu_ff + k (xi_measured - xi_desired),   xi = c + v / w0

Controllers only receive :class:`~ddpc.plants.walker.Measurement` objects
and nominal model constants, never the plant's randomized parameters.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..behavioral import IoTrajectory, TransitionMatrix
from ..errors import SolverNotOptimal
from ..planner.core import (FeedbackBuffer, PlanResult, PlannerConfig, TransitionHandle, plan,
                            shift_warm_start)
from ..planner.lip_mpc import LipMpcConfig, LipState, lip_mpc_plan
from ..planner.online import OnlineUpdater
from ..plants.walker import analytic_lip
from ..qp import QpSolver, QpStatus
from ..reference import DomainState, GaitLibrary, ReferenceWindow, Stance, reference_window

TRACKER_GAIN = 3.0


def domain_of(meas, gait: GaitLibrary, step_length: float) -> DomainState:
    target = np.array([step_length, meas.stance.lateral_sign * gait.step_width])
    return DomainState(meas.stance, meas.t0, meas.stance_foot, meas.swing_start, target)


def stance_block(vec, stance: Stance, width: int):
    return vec[:width] if stance is Stance.LEFT else vec[width:2 * width]


class IntervalSampler:
    """Turn per-tick measurements into ``delta_t`` samples.

    Sample ``k`` pairs the output measured at ``t_k`` with the average CoP
    (in both foot frames) applied over ``[t_k, t_k + delta_t)``, so it is only
    complete one interval later. :meth:`push` returns ``(t_k, mu_k, eta_k)``
    when a sample completes, else ``None``.
    """

    def __init__(self, delta_t: float, tick: float):
        self.every = int(round(delta_t / tick))
        if self.every < 1 or abs(self.every * tick - delta_t) > 1e-9:
            raise ValueError(f"delta_t={delta_t} is not a multiple of the tick {tick}")
        self.delta_t = delta_t
        self._count = 0
        self._pending = None
        self._acc = None
        self._n = 0

    def due(self) -> bool:
        return self._count % self.every == 0

    def push(self, meas):
        out = None
        if self._pending is not None:
            self._acc = meas.mu.copy() if self._n == 0 else self._acc + meas.mu
            self._n += 1
        if self._count % self.every == 0:
            if self._pending is not None:
                t, eta = self._pending
                out = (t, self._acc / self._n, eta)
            self._pending = (meas.time, meas.eta.copy())
            self._acc, self._n = None, 0
        self._count += 1
        return out


@dataclass
class Command:
    cop: np.ndarray          # world (x, y)
    step_target: np.ndarray  # relative to the stance foot


class Controller:
    """Base class: constant-step-length walking toward the gait references."""

    name = "base"

    def __init__(self, gait: GaitLibrary, step_length: float, omega: float,
                 gain: float = TRACKER_GAIN):
        self.gait = gait.scaled(step_length) if step_length != gait.step_length else gait
        self.step_length = step_length
        self.omega = omega
        self.gain = gain
        self.infeasible = 0
        self.solver_failures = 0
        self._memo = None

    def step_target(self, meas) -> np.ndarray:
        return np.array([self.step_length, meas.stance.lateral_sign * self.gait.step_width])

    def reference(self, meas, times) -> "ReferenceWindow":
        # the run loop and the controller both ask for the reference at the
        # current tick; remember the last single-knot window
        single = len(times) == 1
        if single and self._memo is not None and self._memo[0] is meas and self._memo[1] == times[0]:
            return self._memo[2]
        r = reference_window(self.gait, domain_of(meas, self.gait, self.step_length), times,
                             now=meas.time)
        if single:
            self._memo = (meas, times[0], r)
        return r

    def track(self, meas, com_des, vel_des, mu_ff) -> np.ndarray:
        foot = meas.stance_foot[:2]
        xi_m = meas.com[:2] + meas.com_vel[:2] / self.omega
        xi_d = np.asarray(com_des)[:2] + np.asarray(vel_des)[:2] / self.omega
        return foot + np.asarray(mu_ff)[:2] + self.gain * (xi_m - xi_d)

    def desired(self, meas):
        """``(com_des, vel_des, mu_ff)`` at the measurement time."""
        raise NotImplementedError

    def __call__(self, meas) -> Command:
        c, v, mu = self.desired(meas)
        return Command(self.track(meas, c, v, mu), self.step_target(meas))


class NominalController(Controller):
    """Tracks the precomputed gait references with no prediction."""

    name = "nominal"

    def desired(self, meas):
        r = self.reference(meas, [meas.time])
        return r.com[0], r.com_vel[0], np.zeros(2)


class DitheredController(NominalController):
    """Nominal tracking plus a piecewise-constant random CoP offset.

    Used for data collection so the recorded inputs are persistently exciting.
    """

    name = "dither"

    def __init__(self, gait, step_length, omega, amplitude: float = 0.02,
                 hold: float = 0.02, seed: int = 0, **kw):
        super().__init__(gait, step_length, omega, **kw)
        self.amplitude = amplitude
        self.hold = hold
        self._rng = np.random.default_rng(seed)
        self._next = -np.inf
        self._offset = np.zeros(2)

    def __call__(self, meas) -> Command:
        if meas.time >= self._next - 1e-9:
            self._offset = self._rng.uniform(-self.amplitude, self.amplitude, 2)
            self._next = meas.time + self.hold
        cmd = super().__call__(meas)
        return Command(cmd.cop + self._offset, cmd.step_target)


class StandingController(DitheredController):
    """Balances the CoM over the stance foot without stepping.

    Pairs with :meth:`LipWalker.standing` for zero-step-length recordings.
    """

    name = "standing"

    def step_target(self, meas) -> np.ndarray:
        return np.array([0.0, meas.stance.lateral_sign * self.gait.step_width])

    def reference(self, meas, times) -> ReferenceWindow:
        K = len(times)
        foot = meas.stance_foot
        com = np.tile([foot[0], foot[1], self.gait.com_height], (K, 1))
        pl, pr = np.tile(meas.p_left, (K, 1)), np.tile(meas.p_right, (K, 1))
        cop = np.tile(foot[:2], (K, 1))
        r_eta = np.hstack([com - pl, com - pr])
        r_mu = np.hstack([cop - pl[:, :2], cop - pr[:, :2]])
        return ReferenceWindow(np.asarray(times, dtype=float), r_eta, r_mu, (meas.stance,) * K,
                               com, np.zeros((K, 3)), cop, pl, pr, np.zeros(K))


class DdpcController(Controller):
    """Receding-horizon DDPC; the nominal tracker runs until the buffer is warm.

    With an :class:`OnlineUpdater`, the controller records its own I/O
    history and swaps in refitted transition matrices; until the first fit it
    walks with the nominal tracker.
    """

    name = "ddpc"

    def __init__(self, gait, step_length, omega, cfg: PlannerConfig,
                 g: Optional[TransitionMatrix] = None, updater: Optional[OnlineUpdater] = None,
                 tick: float = 0.005, dither: float = 0.0, dither_online: bool = False,
                 seed: int = 0, **kw):
        super().__init__(gait, step_length, omega, **kw)
        self.cfg = cfg
        # excitation while the nominal fallback runs (online data collection)
        self.dither = dither
        self.dither_online = dither_online
        self._rng = np.random.default_rng(seed)
        self._dither_next = -np.inf
        self._dither_offset = np.zeros(2)
        h = cfg.hyper
        self.handle = TransitionHandle(g)
        self.updater = updater
        self.sampler = IntervalSampler(h.delta_t, tick)
        self.buffer = FeedbackBuffer(h.T_ini, h.delta_t, tick)
        self.solver = QpSolver()
        self.replan_period = 1.0 / cfg.replan_hz
        self._next_plan = -np.inf
        self._plan: Optional[PlanResult] = None
        self._history_mu, self._history_eta = [], []
        self.plans = 0

    def _record(self, sample):
        t, mu, eta = sample
        self.buffer.update(mu, eta, t)
        if self.updater is not None:
            self._history_mu.append(mu)
            self._history_eta.append(eta)
            cap = self.updater.schedule.hyper.T
            if len(self._history_mu) > cap:
                del self._history_mu[0], self._history_eta[0]

    def _maybe_refit(self, meas):
        if self.updater is None or not self._history_mu:
            return
        if not self.updater.due(meas.time, len(self._history_mu)):
            return
        window = IoTrajectory(np.array(self._history_mu), np.array(self._history_eta),
                              self.cfg.hyper.delta_t)
        g = self.updater.maybe_update(meas.time, window, self.handle.get())
        if g is not None:
            self.handle.swap(g)
            self._plan = None

    def _replan(self, meas, knots_advanced: int):
        g = self.handle.get()
        times = self.buffer.last_time + self.cfg.hyper.delta_t * np.arange(1, g.N + 1)
        refs = self.reference(meas, times)
        # recorded inputs are interval means, so the CoP references are taken
        # mid-interval to match
        mid = self.reference(meas, times + 0.5 * self.cfg.hyper.delta_t)
        refs = (refs.r_eta, mid.r_mu, mid.stance)
        ws = shift_warm_start(self._plan, knots_advanced)
        self.plans += 1
        try:
            self._plan = plan(g, refs, self.buffer, self.cfg, ws, self.solver, times=times)
        except SolverNotOptimal as exc:
            if exc.result.status is QpStatus.INFEASIBLE:
                self.infeasible += 1
            self.solver_failures += 1
            if self._plan is not None and self._plan.times[-1] <= meas.time:
                self._plan = None

    def desired(self, meas):
        sample = self.sampler.push(meas)
        if sample is not None:
            self._record(sample)
        self._maybe_refit(meas)
        if self.handle.get() is None or not self.buffer.warm:
            r = self.reference(meas, [meas.time])
            return r.com[0], r.com_vel[0], self._excitation(meas)
        if meas.time >= self._next_plan - 1e-9 or sample is not None or self._plan is None:
            self._replan(meas, 1 if sample is not None else 0)
            self._next_plan = meas.time + self.replan_period
        if self._plan is None:
            r = self.reference(meas, [meas.time])
            return r.com[0], r.com_vel[0], np.zeros(2)
        return self._from_plan(meas)

    def _excitation(self, meas) -> np.ndarray:
        if self.dither <= 0.0:
            return np.zeros(2)
        if meas.time >= self._dither_next - 1e-9:
            self._dither_offset = self._rng.uniform(-self.dither, self.dither, 2)
            self._dither_next = meas.time + self.cfg.hyper.delta_t
        return self._dither_offset

    def _from_plan(self, meas):
        # knot j is t_k + j*dt; the input is held over [knot j, knot j+1)
        times, eta, mu = self._plan.times, self._plan.eta_plan, self._plan.mu_plan
        t = meas.time
        j = int(np.clip(np.searchsorted(times, t + 1e-9, side="right") - 1, 0, len(times) - 2))
        h = times[j + 1] - times[j]
        w = (t - times[j]) / h
        e = (1 - w) * eta[j] + w * eta[j + 1]
        de = (eta[j + 1] - eta[j]) / h
        foot = meas.stance_foot
        mu_ff = stance_block(mu[j], meas.stance, 2)
        if self.dither_online:
            mu_ff = mu_ff + self._excitation(meas)
        return (foot + stance_block(e, meas.stance, 3), stance_block(de, meas.stance, 3), mu_ff)


class LipMpcController(Controller):
    """LIP-model MPC replanned from the measured CoM state."""

    name = "lip_mpc"

    def __init__(self, gait, step_length, omega, cfg: LipMpcConfig, **kw):
        super().__init__(gait, step_length, omega, **kw)
        self.cfg = cfg
        self.solvers = [QpSolver(), QpSolver()]
        self.replan_period = 1.0 / cfg.replan_hz
        self._next_plan = -np.inf
        self._plan: Optional[PlanResult] = None
        self._plan_time = None
        self._plan_state = None
        self.plans = 0

    def _replan(self, meas):
        times = meas.time + self.cfg.delta_t * np.arange(1, self.cfg.N + 1)
        refs = self.reference(meas, times)
        state = LipState(meas.com[:2], meas.com_vel[:2], meas.time)
        self.plans += 1
        try:
            res = lip_mpc_plan(refs, state, self.cfg, self._plan, self.solvers)
        except SolverNotOptimal as exc:
            if exc.result.status is QpStatus.INFEASIBLE:
                self.infeasible += 1
            self.solver_failures += 1
            return
        self._plan = res
        self._plan_time = meas.time
        self._plan_state = (meas.com[:2].copy(), meas.com_vel[:2].copy())

    def desired(self, meas):
        if meas.time >= self._next_plan - 1e-9 or self._plan is None:
            self._replan(meas)
            self._next_plan = meas.time + self.replan_period
        if self._plan is None:
            r = self.reference(meas, [meas.time])
            return r.com[0], r.com_vel[0], np.zeros(2)
        cop = self._plan.extras["cop"][0]
        c0, v0 = self._plan_state
        # predicted state under the first planned CoP, on the nominal model
        c, v = analytic_lip(c0, v0, cop, meas.time - self._plan_time, self.cfg.omega)
        return c, v, cop - meas.stance_foot[:2]
