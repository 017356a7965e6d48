"""Gait references from order-7 Bezier curves and a time-based phase clock.

Gait curves live in the stance-foot frame: the CoM curve for a left stance
gives the CoM position relative to the left foot, the swing curve gives the
right (swing) foot relative to the left foot, and vice versa.

Redundant signal layout used throughout the package::

    eta = col(p_com - p_left (x, y, z), p_com - p_right (x, y, z))   # 6
    mu  = col(p_cop - p_left (x, y),    p_cop - p_right (x, y))      # 4
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy.special import comb

from .errors import NegativeDuration, OutOfDomain, StepTooLong

BEZIER_ORDER = 7
_DOMAIN_TOL = 1e-12


class Stance(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"

    def other(self) -> "Stance":
        return Stance.RIGHT if self is Stance.LEFT else Stance.LEFT

    @property
    def lateral_sign(self) -> float:
        """Sign of the swing foot's y offset from the stance foot."""
        return -1.0 if self is Stance.LEFT else 1.0


def _check_tau(tau) -> np.ndarray:
    t = np.asarray(tau, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < -_DOMAIN_TOL) or np.any(t > 1 + _DOMAIN_TOL):
        raise OutOfDomain(f"phase must lie in [0, 1], got {tau}")
    return np.clip(t, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class BezierCurve:
    """Order-7 Bezier curve with one row of 8 control points per output."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[1] != BEZIER_ORDER + 1:
            raise ValueError(f"need {BEZIER_ORDER + 1} control points per row, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def dim(self) -> int:
        return self.coefficients.shape[0]

    def __call__(self, tau) -> np.ndarray:
        return eval_bezier(self, tau)[0]

    @cached_property
    def _hodograph(self) -> np.ndarray:
        return BEZIER_ORDER * np.diff(self.coefficients, axis=1)

    def evaluate_many(self, tau: np.ndarray):
        """Batch value and derivative through the Bernstein basis.

        Same curve as :func:`eval_bezier` (equal to rounding); used on the hot
        path where many phases are evaluated at once. Phases are assumed to
        be validated already.
        """
        B = _bernstein(tau, BEZIER_ORDER)
        dB = _bernstein(tau, BEZIER_ORDER - 1)
        return B @ self.coefficients.T, dB @ self._hodograph.T

    def scaled_rows(self, factors) -> "BezierCurve":
        return BezierCurve(self.coefficients * np.asarray(factors, dtype=float)[:, None])


def _de_casteljau(points: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate curves with control points ``points[..., k]`` at phases ``t``.

    ``points`` has shape ``(d, n+1)``, ``t`` shape ``(K,)``; returns ``(K, d)``.
    """
    b = np.broadcast_to(points[None], (t.size,) + points.shape).copy()
    tt = t[:, None, None]
    for r in range(points.shape[1] - 1, 0, -1):
        b = (1.0 - tt) * b[..., :r] + tt * b[..., 1:r + 1]
    return b[..., 0]


def eval_bezier(curve: BezierCurve, tau):
    """Value and phase-derivative of ``curve`` at ``tau``.

    ``tau`` may be a scalar (returns two ``(d,)`` vectors) or an array of
    phases (returns two ``(K, d)`` arrays). The derivative comes from the
    hodograph, the order-6 curve on scaled control-point differences.

    Raises:
        OutOfDomain: If any phase lies outside [0, 1].
    """
    t = _check_tau(tau)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    c = curve.coefficients
    value = _de_casteljau(c, t)
    deriv = _de_casteljau(BEZIER_ORDER * np.diff(c, axis=1), t)
    if scalar:
        return value[0], deriv[0]
    return value, deriv


_BINOM = {n: comb(n, np.arange(n + 1)) for n in range(BEZIER_ORDER + 1)}


def _bernstein(t: np.ndarray, order: int) -> np.ndarray:
    t = t[:, None]
    k = np.arange(order + 1)
    return _BINOM[order] * t ** k * (1.0 - t) ** (order - k)


def bernstein_matrix(tau, order: int = BEZIER_ORDER) -> np.ndarray:
    return _bernstein(np.atleast_1d(np.asarray(tau, dtype=float)), order)


def fit_bezier(func, samples: int = 401) -> BezierCurve:
    """Least-squares order-7 fit of ``func: tau -> (d,)`` with pinned endpoints.

    Polynomials up to degree 7 are reproduced exactly.
    """
    tau = np.linspace(0.0, 1.0, samples)
    Y = np.array([np.atleast_1d(func(t)) for t in tau])       # (K, d)
    B = bernstein_matrix(tau)
    p0, p7 = Y[0], Y[-1]
    rhs = Y - np.outer(B[:, 0], p0) - np.outer(B[:, -1], p7)
    inner = np.linalg.lstsq(B[:, 1:-1], rhs, rcond=None)[0]  # (6, d)
    coeffs = np.vstack([p0, inner, p7]).T
    return BezierCurve(coeffs)


def phase_variable(t: float, t0: float, t_d: float) -> float:
    """Normalized time in the current domain, clamped to 1 after ``t_d`` elapses."""
    if not t_d > 0:
        raise NegativeDuration(f"step duration must be positive, got {t_d}")
    if t < t0:
        raise NegativeDuration(f"time {t} precedes the domain start {t0}")
    return min((t - t0) / t_d, 1.0)


def smoothstep(tau):
    """Quintic weight ``6t^5 - 15t^4 + 10t^3`` with zero end slopes."""
    t = np.asarray(tau, dtype=float)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def smoothstep_derivative(tau):
    t = np.asarray(tau, dtype=float)
    return 30.0 * t * t * (t - 1.0) ** 2


def swing_blend(p_post_impact, step_target, tau) -> np.ndarray:
    """Swing-foot x, y moving from the post-impact position to the step target."""
    t = _check_tau(tau)
    beta = smoothstep(t)
    p0 = np.asarray(p_post_impact, dtype=float)
    lam = np.asarray(step_target, dtype=float)
    if t.ndim:
        beta = beta[:, None]
    return (1.0 - beta) * p0 + beta * lam


def com_reference(com_curve: BezierCurve, tau, p_left, p_right) -> np.ndarray:
    """Redundant CoM reference ``col(p_com - p_left, p_com - p_right)``.

    ``p_left``, ``p_right`` must be expressed in the same frame as the curve.
    """
    p_com = com_curve(tau)
    return np.concatenate([p_com - np.asarray(p_left, float), p_com - np.asarray(p_right, float)])


def cop_reference(swing, tau, stance: Stance) -> np.ndarray:
    """CoP reference placing the CoP at the stance-foot origin.

    Args:
        swing: Either a swing-foot :class:`BezierCurve` (evaluated at ``tau``)
            or the swing-foot (x, y) position in the stance frame.
        tau: Phase in [0, 1].
        stance: Current stance side.

    Returns:
        ``(cop - p_left, cop - p_right)`` in x, y: the swing-frame block holds
        ``-p_sw`` and the stance-frame block is zero.
    """
    _check_tau(tau)
    p_sw = swing(tau)[:2] if isinstance(swing, BezierCurve) else np.asarray(swing, float)[:2]
    zero = np.zeros(2)
    if Stance(stance) is Stance.RIGHT:
        return np.concatenate([-p_sw, zero])
    return np.concatenate([zero, -p_sw])


@dataclass(frozen=True)
class GaitParams:
    step_duration: float
    step_target: np.ndarray
    stance: Stance
    max_step: float = 0.2

    def __post_init__(self):
        if not self.step_duration > 0:
            raise NegativeDuration(f"step duration must be positive, got {self.step_duration}")
        lam = np.asarray(self.step_target, dtype=float).reshape(2)
        if abs(lam[0]) > self.max_step:
            raise StepTooLong(f"step length {lam[0]} exceeds max_step {self.max_step}")
        object.__setattr__(self, "step_target", lam)
        object.__setattr__(self, "stance", Stance(self.stance))


@dataclass(frozen=True)
class GaitLibrary:
    """Nominal gait curves for both stance sides.

    Attributes:
        com: Stance side -> 3-row CoM curve in the stance frame.
        swing: Stance side -> 3-row swing-foot curve in the stance frame;
            only its z row drives references, x and y come from the blend.
        step_duration, step_length, step_width, com_height: Nominal values
            the curves were designed for.
    """

    com: Dict[Stance, BezierCurve]
    swing: Dict[Stance, BezierCurve]
    step_duration: float = 1.0
    step_length: float = 0.12
    step_width: float = 0.2
    com_height: float = 0.8
    meta: dict = field(default_factory=dict)

    def scaled(self, step_length: float) -> "GaitLibrary":
        """Same gait with the sagittal rows rescaled to ``step_length``.

        The sagittal CoM orbit and swing path are linear in the step length,
        so the rescaling is exact for library curves designed on the LIP.
        """
        if self.step_length == 0.0:
            raise ValueError("cannot rescale a zero-length gait")
        k = step_length / self.step_length
        f = [k, 1.0, 1.0]
        return GaitLibrary({s: c.scaled_rows(f) for s, c in self.com.items()},
                           {s: c.scaled_rows(f) for s, c in self.swing.items()},
                           self.step_duration, step_length, self.step_width, self.com_height,
                           dict(self.meta))

    def step_target(self, stance: Stance, step_length: Optional[float] = None) -> np.ndarray:
        lam = self.step_length if step_length is None else step_length
        return np.array([lam, Stance(stance).lateral_sign * self.step_width])

    def to_dict(self) -> dict:
        return {
            "step_duration": self.step_duration,
            "step_length": self.step_length,
            "step_width": self.step_width,
            "com_height": self.com_height,
            "meta": self.meta,
            "curves": {
                "com": {s.value: c.coefficients.tolist() for s, c in self.com.items()},
                "swing": {s.value: c.coefficients.tolist() for s, c in self.swing.items()},
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaitLibrary":
        curves = d["curves"]
        return cls({Stance(k): BezierCurve(v) for k, v in curves["com"].items()},
                   {Stance(k): BezierCurve(v) for k, v in curves["swing"].items()},
                   float(d["step_duration"]), float(d["step_length"]),
                   float(d["step_width"]), float(d["com_height"]), dict(d.get("meta", {})))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1))
        return path

    @classmethod
    def load(cls, path) -> "GaitLibrary":
        return cls.from_dict(json.loads(Path(path).read_text()))


DEFAULT_GAIT_FILE = Path(__file__).with_name("data") / "desk_gait.json"


def default_gait() -> GaitLibrary:
    return GaitLibrary.load(DEFAULT_GAIT_FILE)


def design_lip_gait(step_length: float = 0.12, step_duration: float = 1.0,
                    step_width: float = 0.2, com_height: float = 0.8, g: float = 9.81,
                    swing_height: float = 0.05) -> GaitLibrary:
    """Fit Bezier curves to the periodic LIP orbit with the CoP at the stance foot.

    Sagittally the CoM travels from ``-step_length/2`` to ``+step_length/2``
    relative to the stance foot along a sinh arc; laterally it follows the
    cosh arc that crosses the midline between the feet at each switch.
    """
    w = np.sqrt(g / com_height)
    half = 0.5 * w * step_duration
    com, swing = {}, {}
    for stance in Stance:
        s = stance.lateral_sign

        def com_path(tau, s=s):
            a = w * step_duration * (tau - 0.5)
            return np.array([0.5 * step_length * np.sinh(a) / np.sinh(half),
                             0.5 * s * step_width * np.cosh(a) / np.cosh(half),
                             com_height])

        def swing_path(tau, s=s):
            b = smoothstep(tau)
            return np.array([step_length * (2.0 * b - 1.0), s * step_width,
                             swing_height * np.sin(np.pi * tau)])

        com[stance] = fit_bezier(com_path)
        swing[stance] = fit_bezier(swing_path)
    meta = {"generator": "lip_periodic_orbit", "gravity": g, "swing_height": swing_height}
    return GaitLibrary(com, swing, step_duration, step_length, step_width, com_height, meta)


@dataclass(frozen=True)
class DomainState:
    """What the reference generator needs to know about the current domain.

    Positions are world-frame. ``step_target`` is relative to the stance foot.
    """

    stance: Stance
    t0: float
    stance_foot: np.ndarray
    swing_start: np.ndarray
    step_target: np.ndarray


@dataclass(frozen=True)
class ReferenceWindow:
    times: np.ndarray
    r_eta: np.ndarray        # (K, 6)
    r_mu: np.ndarray         # (K, 4)
    stance: tuple            # (K,) Stance per knot
    com: np.ndarray          # (K, 3) world
    com_vel: np.ndarray      # (K, 3) world
    cop: np.ndarray          # (K, 2) world
    p_left: np.ndarray       # (K, 3)
    p_right: np.ndarray      # (K, 3)
    tau: np.ndarray          # (K,)

    @property
    def stance_is_left(self) -> np.ndarray:
        return np.array([s is Stance.LEFT for s in self.stance])


def reference_window(gait: GaitLibrary, domain: DomainState, times, now: Optional[float] = None,
                     step_length: Optional[float] = None) -> ReferenceWindow:
    """Evaluate the redundant references at ``times``.

    Knots past the end of the current domain continue into the following
    domains, each starting on the planned touchdown of the previous swing. If
    the current domain has already overrun its duration (late impact), the
    next domain is assumed to start at ``now``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    t_d = gait.step_duration
    lam = gait.step_length if step_length is None else step_length
    K = times.size
    out = {k: np.zeros((K, d)) for k, d in
           (("com", 3), ("vel", 3), ("cop", 2), ("pl", 3), ("pr", 3))}
    tau_out = np.zeros(K)
    stance_out = [None] * K

    stance = Stance(domain.stance)
    start = float(domain.t0)
    foot = np.asarray(domain.stance_foot, float)[:2].copy()
    sw0 = np.asarray(domain.swing_start, float)[:2].copy()
    target = np.asarray(domain.step_target, float)[:2].copy()
    remaining = np.ones(K, dtype=bool)
    first = True
    while remaining.any():
        end = start + t_d
        if now is not None and first and end < now:
            end = now
        sel = remaining & (times <= end + 1e-12)
        tau = np.clip((times[sel] - start) / t_d, 0.0, 1.0)
        if sel.any():
            c, dc = gait.com[stance].evaluate_many(tau)
            swz, _ = gait.swing[stance].evaluate_many(tau)
            sw_xy = swing_blend(sw0 - foot, target, tau)
            com = c.copy()
            com[:, :2] += foot
            stance_foot3 = np.concatenate([foot, [0.0]])
            swing3 = np.column_stack([sw_xy + foot, swz[:, 2]])
            if stance is Stance.LEFT:
                out["pl"][sel], out["pr"][sel] = stance_foot3, swing3
            else:
                out["pl"][sel], out["pr"][sel] = swing3, stance_foot3
            out["com"][sel] = com
            out["vel"][sel] = dc / t_d
            out["cop"][sel] = foot
            tau_out[sel] = tau
            for i in np.flatnonzero(sel):
                stance_out[i] = stance
        remaining &= ~sel
        # next domain lands on the planned target
        new_foot = foot + target
        sw0 = foot
        foot = new_foot
        stance = stance.other()
        target = np.array([lam, stance.lateral_sign * gait.step_width])
        start = end
        first = False

    com, pl, pr, cop = out["com"], out["pl"], out["pr"], out["cop"]
    r_eta = np.hstack([com - pl, com - pr])
    r_mu = np.hstack([cop - pl[:, :2], cop - pr[:, :2]])
    return ReferenceWindow(times, r_eta, r_mu, tuple(stance_out), com, out["vel"], cop, pl, pr,
                           tau_out)
