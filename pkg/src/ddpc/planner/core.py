"""Receding-horizon DDPC planning problem with the data-driven model eliminated.

Writing the predicted outputs as ``eta = G_past @ past + G_fut @ mu`` turns the
tracking cost into a QP over the stacked future inputs ``z = mu_N`` alone::

    H = 2 (G_fut' Qbar G_fut + Rbar)
    f = 2 (G_fut' Qbar (G_past @ past - r_eta) - Rbar r_mu)

Output bounds become affine rows ``G_fut z`` shifted by the free response.
"""
from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..behavioral import DdpcHyperparams, TransitionMatrix, predict
from ..errors import (BufferNotWarm, DimensionMismatch, NonMonotonicTime, NotPositiveDefinite,
                      SolverNotOptimal)
from ..qp import QpSolution, QpSolver, QpStatus, QuadraticProgram
from ..reference import Stance

KAPPA, NU = 4, 6


def _spd(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {M.shape}")
    if not np.allclose(M, M.T, rtol=1e-12, atol=0):
        raise NotPositiveDefinite(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{name} is not positive definite") from exc
    return M


def _box(lo, hi, n, name):
    lo = np.full(n, -np.inf) if lo is None else np.broadcast_to(np.asarray(lo, float), (n,)).copy()
    hi = np.full(n, np.inf) if hi is None else np.broadcast_to(np.asarray(hi, float), (n,)).copy()
    if np.any(lo > hi):
        raise ValueError(f"{name} box is empty")
    return lo, hi


@dataclass(frozen=True, eq=False)
class PlannerConfig:
    """Weights, feasibility boxes and cadence of the DDPC planner.

    Attributes:
        hyper: Data length and horizons.
        Q: Output weight (``nu x nu``), R: input weight (``kappa x kappa``).
        input_lower, input_upper: Static per-entry box ``U`` on ``mu``.
        output_lower, output_upper: Per-entry box ``P`` on ``eta``.
        replan_hz: Plan calls per second.
        stance_box: Optional ``(half_length, half_width)``; when set, the
            stance-foot block of every knot is tightened to the support box.
        couple_feet: Plan one CoP per knot instead of two independent foot
            frame blocks. The right block is tied to the left one through the
            planned foot offset carried by the CoP references, since both
            describe the same physical point.
    """

    hyper: DdpcHyperparams
    Q: np.ndarray = None
    R: np.ndarray = None
    input_lower: Optional[np.ndarray] = None
    input_upper: Optional[np.ndarray] = None
    output_lower: Optional[np.ndarray] = None
    output_upper: Optional[np.ndarray] = None
    replan_hz: float = 100.0
    stance_box: Optional[tuple] = None
    couple_feet: bool = False

    def __post_init__(self):
        Q = 10.0 * np.eye(NU) if self.Q is None else self.Q
        R = 0.1 * np.eye(KAPPA) if self.R is None else self.R
        Q, R = _spd(Q, "Q"), _spd(R, "R")
        ul, uu = _box(self.input_lower, self.input_upper, R.shape[0], "input")
        yl, yu = _box(self.output_lower, self.output_upper, Q.shape[0], "output")
        for name, v in (("Q", Q), ("R", R), ("input_lower", ul), ("input_upper", uu),
                        ("output_lower", yl), ("output_upper", yu)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if not self.replan_hz > 0:
            raise ValueError("replan_hz must be positive")

    @property
    def kappa(self) -> int:
        return self.R.shape[0]

    @property
    def nu(self) -> int:
        return self.Q.shape[0]

    @classmethod
    def for_walker(cls, hyper: DdpcHyperparams, com_height: float = 0.8,
                   foot_half_length: float = 0.09, foot_half_width: float = 0.05,
                   q: float = 10.0, r: float = 0.1, replan_hz: float = 100.0,
                   couple_feet: bool = True) -> "PlannerConfig":
        """Default boxes: CoP inside the support box, CoM within a 0.3 m excursion."""
        reach = np.array([0.35, 0.3])
        horiz = 0.3
        lo_eta = np.array([-horiz, -horiz, 0.75 * com_height] * 2)
        hi_eta = np.array([horiz, horiz, 1.25 * com_height] * 2)
        return cls(hyper, q * np.eye(NU), r * np.eye(KAPPA), np.tile(-reach, 2), np.tile(reach, 2),
                   lo_eta, hi_eta, replan_hz, (foot_half_length, foot_half_width), couple_feet)


class FeedbackBuffer:
    """The last ``T_ini`` input/output samples at ``delta_t`` spacing."""

    def __init__(self, T_ini: int, delta_t: float, tick: float = 0.0,
                 kappa: int = KAPPA, nu: int = NU):
        self.T_ini = T_ini
        self.delta_t = delta_t
        self.tick = tick
        self.kappa, self.nu = kappa, nu
        self._samples = deque(maxlen=T_ini)
        self._last_call: Optional[float] = None

    def __len__(self) -> int:
        return len(self._samples)

    @property
    def warm(self) -> bool:
        return len(self._samples) == self.T_ini

    @property
    def last_time(self) -> Optional[float]:
        return self._samples[-1][0] if self._samples else None

    @property
    def times(self) -> np.ndarray:
        return np.array([s[0] for s in self._samples])

    @property
    def mu_ini(self) -> np.ndarray:
        return np.array([s[1] for s in self._samples]).reshape(-1, self.kappa)

    @property
    def eta_ini(self) -> np.ndarray:
        return np.array([s[2] for s in self._samples]).reshape(-1, self.nu)

    def due(self, t: float) -> bool:
        last = self.last_time
        return last is None or t - last >= self.delta_t - 0.5 * self.tick - 1e-9

    def update(self, mu, eta, t: float) -> bool:
        """Record a sample if a full ``delta_t`` has passed; returns whether it did."""
        if self._last_call is not None and t < self._last_call:
            raise NonMonotonicTime(f"sample at t={t} after t={self._last_call}")
        self._last_call = t
        if not self.due(t):
            return False
        mu = np.ravel(np.asarray(mu, dtype=float))
        eta = np.ravel(np.asarray(eta, dtype=float))
        if mu.size != self.kappa or eta.size != self.nu:
            raise DimensionMismatch(
                f"sample sizes ({mu.size}, {eta.size}) != ({self.kappa}, {self.nu})")
        self._samples.append((float(t), mu, eta))
        return True


def update_feedback(buffer: FeedbackBuffer, mu_applied, eta_measured, t: float) -> FeedbackBuffer:
    buffer.update(mu_applied, eta_measured, t)
    return buffer


@dataclass
class PlanResult:
    mu_plan: np.ndarray
    eta_plan: np.ndarray
    objective: float
    status: QpStatus
    times: np.ndarray
    iterations: int = 0
    solution: Optional[QpSolution] = field(default=None, repr=False)
    extras: dict = field(default_factory=dict, repr=False)

    @property
    def usable(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def _refs(refs, N, nu, kappa):
    if hasattr(refs, "r_eta"):
        r_eta, r_mu = refs.r_eta, refs.r_mu
        stance = getattr(refs, "stance", None)
    else:
        r_eta, r_mu = refs[0], refs[1]
        stance = refs[2] if len(refs) > 2 else None
    r_eta = np.asarray(r_eta, dtype=float).reshape(-1, nu)
    r_mu = np.asarray(r_mu, dtype=float).reshape(-1, kappa)
    if r_eta.shape[0] != N or r_mu.shape[0] != N:
        raise DimensionMismatch(
            f"references cover {r_eta.shape[0]}/{r_mu.shape[0]} knots, horizon is {N}")
    return r_eta, r_mu, stance


def input_bounds(cfg: PlannerConfig, N: int, stance: Optional[Sequence] = None, r_mu=None):
    """Stacked ``U`` bounds over ``N`` knots.

    With ``cfg.stance_box`` and a stance sequence, each knot's stance-foot
    block is tightened to the support box. When the CoP references are also
    given, the swing-foot block is tightened to the same box mapped into the
    swing frame (centered on its reference, which is ``p_stance - p_swing``).
    """
    lo = np.tile(cfg.input_lower, N).reshape(N, -1)
    hi = np.tile(cfg.input_upper, N).reshape(N, -1)
    if cfg.stance_box is not None and stance is not None:
        h = np.asarray(cfg.stance_box, dtype=float)
        for k, s in enumerate(stance):
            j = 0 if Stance(s) is Stance.LEFT else 2
            lo[k, j:j + 2] = np.maximum(lo[k, j:j + 2], -h)
            hi[k, j:j + 2] = np.minimum(hi[k, j:j + 2], h)
            if r_mu is not None:
                o = 2 - j
                c = r_mu[k, o:o + 2]
                lo[k, o:o + 2] = np.maximum(lo[k, o:o + 2], c - h)
                hi[k, o:o + 2] = np.minimum(hi[k, o:o + 2], c + h)
    return lo.ravel(), hi.ravel()


class _Structure:
    """Per-(G, cfg) matrices that do not change between plan calls.

    ``lift`` maps the decision vector to the stacked inputs (``mu = lift @ z
    + offset``); it is the identity unless feet are coupled.
    """

    def __init__(self, g: TransitionMatrix, cfg: PlannerConfig):
        N = g.N
        Gf = g.g_future
        Qbar = np.kron(np.eye(N), cfg.Q)
        Rbar = np.kron(np.eye(N), cfg.R)
        if cfg.couple_feet:
            if cfg.kappa != KAPPA:
                raise DimensionMismatch("foot coupling needs the 4-channel CoP input")
            self.lift = np.kron(np.eye(N), np.vstack([np.eye(2), np.eye(2)]))
            Gz = Gf @ self.lift
            Rz = self.lift.T @ Rbar @ self.lift
        else:
            self.lift = None
            Gz, Rz = Gf, Rbar
        self.Gz = Gz
        self.QGz = Qbar @ Gz
        H = 2.0 * (Gz.T @ self.QGz + Rz)
        self.H = 0.5 * (H + H.T)
        self.H.setflags(write=False)
        self.Rbar = Rbar
        self.Qbar = Qbar
        lo = np.tile(cfg.output_lower, N)
        hi = np.tile(cfg.output_upper, N)
        self.rows = np.flatnonzero(np.isfinite(lo) | np.isfinite(hi))
        self.A = np.ascontiguousarray(Gz[self.rows]) if self.rows.size else None
        self.p_lo, self.p_hi = lo[self.rows], hi[self.rows]


_cache_lock = threading.Lock()
_structures: dict = {}


def _structure(g: TransitionMatrix, cfg: PlannerConfig) -> _Structure:
    key = (id(g), id(cfg))
    with _cache_lock:
        hit = _structures.get(key)
        if hit is not None and hit[0] is g and hit[1] is cfg:
            return hit[2]
        st = _Structure(g, cfg)
        if len(_structures) > 16:
            _structures.clear()
        _structures[key] = (g, cfg, st)
        return st


def free_response(g: TransitionMatrix, buffer: FeedbackBuffer) -> np.ndarray:
    """``G_past @ col(mu_ini, eta_ini)``: predicted outputs under zero future input."""
    if not buffer.warm:
        raise BufferNotWarm(f"buffer holds {len(buffer)} of {buffer.T_ini} samples")
    kappa, nu, T_ini, N = g.dims
    if (buffer.T_ini, buffer.kappa, buffer.nu) != (T_ini, kappa, nu):
        raise DimensionMismatch("buffer dimensions do not match the transition matrix")
    past = np.concatenate([buffer.mu_ini.ravel(), buffer.eta_ini.ravel()])
    return g.g_past @ past


@dataclass
class CondensedQp:
    """A planning QP plus what is needed to map its solution back to inputs."""

    qp: QuadraticProgram
    constant: float
    free: np.ndarray
    lift: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None

    def inputs(self, z) -> np.ndarray:
        """Stacked ``mu_N`` for decision vector ``z``."""
        z = np.asarray(z, dtype=float)
        if self.lift is None:
            return z.copy()
        return self.lift @ z + self.offset


def condense(g: TransitionMatrix, refs, buffer: FeedbackBuffer, cfg: PlannerConfig) -> CondensedQp:
    """Build the condensed planning QP; see :func:`assemble_qp`."""
    kappa, nu, T_ini, N = g.dims
    if (cfg.kappa, cfg.nu) != (kappa, nu):
        raise DimensionMismatch("planner weights do not match the transition matrix")
    r_eta, r_mu, stance = _refs(refs, N, nu, kappa)
    o = free_response(g, buffer)
    st = _structure(g, cfg)
    rm = r_mu.ravel()
    lo, hi = input_bounds(cfg, N, stance, r_mu)
    if st.lift is None:
        offset = None
        base = o
        du = -rm
    else:
        # right block = left block + (p_left - p_right), read off the references
        d = np.zeros((N, kappa))
        d[:, 2:] = r_mu[:, 2:] - r_mu[:, :2]
        offset = d.ravel()
        base = o + g.g_future @ offset
        du = offset - rm
        lo4, hi4 = lo.reshape(N, kappa), hi.reshape(N, kappa)
        lo = np.maximum(lo4[:, :2], lo4[:, 2:] - d[:, 2:]).ravel()
        hi = np.minimum(hi4[:, :2], hi4[:, 2:] - d[:, 2:]).ravel()
    e0 = base - r_eta.ravel()
    Rdu = st.Rbar @ du
    f = 2.0 * (st.QGz.T @ e0 + (Rdu if st.lift is None else st.lift.T @ Rdu))
    const = float(e0 @ st.Qbar @ e0 + du @ Rdu)
    if st.A is None:
        qp = QuadraticProgram(st.H, f, lo, hi)
    else:
        off = base[st.rows]
        qp = QuadraticProgram(st.H, f, lo, hi, st.A, st.p_lo - off, st.p_hi - off)
    return CondensedQp(qp, const, o, st.lift, offset)


def assemble_qp(g: TransitionMatrix, refs, buffer: FeedbackBuffer,
                cfg: PlannerConfig) -> QuadraticProgram:
    """Build the condensed QP of one planning step.

    The decision vector is the stacked future input ``mu_N`` (or one CoP per
    knot with ``cfg.couple_feet``). The tracking cost is written in ``z``
    through ``eta_N = G_past @ past + G_fut @ mu_N``, the input box applies to
    ``z`` directly and the output box becomes affine rows.

    Raises:
        BufferNotWarm: Before ``T_ini`` samples are buffered.
        DimensionMismatch: On inconsistent references, buffer or weights.
    """
    return condense(g, refs, buffer, cfg).qp


def shift_warm_start(prev: Optional[PlanResult], knots: int):
    """Previous decision vector advanced by ``knots`` with the last knot repeated."""
    if prev is None or prev.solution is None:
        return None
    if knots <= 0:
        return prev.solution
    N = prev.mu_plan.shape[0]
    z = prev.solution.z.reshape(N, -1)
    if knots >= N:
        return np.tile(z[-1], N)
    return np.concatenate([z[knots:], np.repeat(z[-1:], knots, axis=0)]).ravel()


def plan(g: TransitionMatrix, refs, buffer: FeedbackBuffer, cfg: PlannerConfig,
         warm_start=None, solver: Optional[QpSolver] = None, raise_on_failure: bool = True,
         times=None) -> PlanResult:
    """Solve one receding-horizon step.

    ``eta_plan`` is ``predict(g, mu_ini, eta_ini, mu_plan)`` itself, the same
    affine map the QP cost was written in.

    Raises:
        SolverNotOptimal: If the QP does not reach optimality; the partial
            plan is attached as ``result`` and flagged unusable.
    """
    kappa, nu, T_ini, N = g.dims
    cq = condense(g, refs, buffer, cfg)
    solver = solver or QpSolver()
    sol = solver.solve(cq.qp, warm_start)
    mu = cq.inputs(sol.z)
    eta = predict(g, buffer.mu_ini, buffer.eta_ini, mu).reshape(N, nu)
    if times is None:
        last = buffer.last_time or 0.0
        times = last + buffer.delta_t * np.arange(1, N + 1)
    res = PlanResult(mu.reshape(N, kappa), eta, sol.objective + cq.constant, sol.status,
                     np.asarray(times, float), sol.iterations, sol)
    if not sol.optimal and raise_on_failure:
        raise SolverNotOptimal(f"QP finished with status {sol.status.value}", res)
    return res


class TransitionHandle:
    """Holder for the active transition matrix with whole-value swaps.

    Readers take one snapshot per plan call, so a plan sees either the old or
    the new matrix in its entirety.
    """

    def __init__(self, g: Optional[TransitionMatrix] = None):
        self._g = g
        self._lock = threading.Lock()
        self.version = 0

    def get(self) -> Optional[TransitionMatrix]:
        with self._lock:
            return self._g

    def swap(self, g: TransitionMatrix) -> None:
        with self._lock:
            self._g = g
            self.version += 1


def interpolate_plan(result: PlanResult, t: float, t_start: Optional[float] = None,
                     start=None):
    """Linear interpolation of ``(mu, eta)`` over the plan knots at time ``t``.

    Before the first knot the plan is blended from ``start = (mu0, eta0)`` at
    ``t_start`` when given, otherwise held at the first knot; past the last
    knot it is held at the last one.
    """
    times = result.times
    mu, eta = result.mu_plan, result.eta_plan
    if start is not None and t_start is not None:
        times = np.concatenate([[t_start], times])
        mu = np.vstack([np.ravel(start[0]), mu])
        eta = np.vstack([np.ravel(start[1]), eta])
    out_mu = np.array([np.interp(t, times, mu[:, j]) for j in range(mu.shape[1])])
    out_eta = np.array([np.interp(t, times, eta[:, j]) for j in range(eta.shape[1])])
    return out_mu, out_eta
