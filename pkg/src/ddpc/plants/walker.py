"""Point-mass LIP walker with time-based stance switching.

The CoM moves at constant height ``z0`` over a CoP confined to a rectangular
support box around the stance foot. The swing foot follows the smoothstep
blend toward the commanded touchdown target, limited by how far the leg can
reach from the CoM. Impacts swap the stance label and reset the phase clock;
the CoM state is continuous across them (massless legs).

Model mismatch is emulated by a CoM offset that biases the measured CoM and
adds a constant unmodeled force, plus an effective pendulum-height
multiplier that only the true dynamics see.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from ..errors import StepTooLong
from ..reference import Stance, smoothstep

GRAVITY = 9.81
NOMINAL_COM_OFFSET = -0.114
COM_OFFSET_RANGE = (-0.122, -0.106)


@dataclass(frozen=True)
class WalkerParams:
    """Physical and kinematic parameters of the desk walker.

    ``com_offset`` and ``height_scale`` are plant-internal: controllers are
    built from :meth:`nominal` values and never see the randomized ones.
    """

    mass: float = 82.0
    gravity: float = GRAVITY
    com_height: float = 0.8
    height_scale: float = 1.0
    com_offset: float = NOMINAL_COM_OFFSET
    nominal_com_offset: float = NOMINAL_COM_OFFSET
    offset_force_gain: float = 1.0
    foot_half_length: float = 0.09
    foot_half_width: float = 0.05
    max_step: float = 0.2
    reach: float = 0.10
    step_width: float = 0.2
    swing_height: float = 0.05
    step_duration: float = 1.0
    control_dt: float = 0.005
    switch_jitter: float = 0.0
    noise_std: float = 0.0
    fall_distance: float = 0.5
    fall_height_ratio: float = 0.5

    @property
    def bias(self) -> float:
        """Deviation of the true CoM offset from the modeled one (x only)."""
        return self.com_offset - self.nominal_com_offset

    @property
    def omega_nominal(self) -> float:
        return float(np.sqrt(self.gravity / self.com_height))

    @property
    def omega(self) -> float:
        return float(np.sqrt(self.gravity / (self.com_height * self.height_scale)))

    @property
    def mismatch_force(self) -> np.ndarray:
        fx = self.offset_force_gain * self.mass * self.omega_nominal ** 2 * self.bias
        return np.array([fx, 0.0, 0.0])

    def nominal(self) -> "WalkerParams":
        return replace(self, height_scale=1.0, com_offset=self.nominal_com_offset)


@dataclass(frozen=True, eq=False)
class LipWalkerState:
    com: np.ndarray
    com_vel: np.ndarray
    p_left: np.ndarray
    p_right: np.ndarray
    stance: Stance
    t0: float
    swing_start: np.ndarray
    time: float = 0.0
    cop: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        for name, n in (("com", 3), ("com_vel", 3), ("p_left", 3), ("p_right", 3),
                        ("swing_start", 2), ("cop", 2)):
            v = np.array(getattr(self, name), dtype=float).reshape(n)
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "stance", Stance(self.stance))

    @property
    def stance_foot(self) -> np.ndarray:
        return self.p_left if self.stance is Stance.LEFT else self.p_right

    @property
    def swing_foot(self) -> np.ndarray:
        return self.p_right if self.stance is Stance.LEFT else self.p_left

    def with_feet(self, stance_foot, swing_foot) -> "LipWalkerState":
        if self.stance is Stance.LEFT:
            return replace(self, p_left=stance_foot, p_right=swing_foot)
        return replace(self, p_left=swing_foot, p_right=stance_foot)


@dataclass(frozen=True)
class PerturbationSchedule:
    """Staircase force ``base + increment * floor(t / period)`` along ``direction``."""

    base_force: float = 5.0
    increment: float = 3.0
    period: float = 3.0
    direction: tuple = (-1.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if n == 0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "direction", tuple(d / n))

    @classmethod
    def none(cls) -> "PerturbationSchedule":
        return cls(0.0, 0.0)

    def magnitude(self, t: float) -> float:
        if t < 0:
            return 0.0
        return self.base_force + self.increment * np.floor(t / self.period)

    def force(self, t: float) -> np.ndarray:
        return self.magnitude(t) * np.asarray(self.direction)


def clamp_cop(cop, stance_foot, half_length: float = 0.09, half_width: float = 0.05) -> np.ndarray:
    """Project a CoP command onto the stance foot's support box."""
    c = np.asarray(stance_foot, dtype=float)[:2]
    h = np.array([half_length, half_width])
    return np.clip(np.asarray(cop, dtype=float)[:2], c - h, c + h)


def lip_dynamics(state: LipWalkerState, u_cop, f_ext, mass: float,
                 gravity: float = GRAVITY, com_height: Optional[float] = None) -> np.ndarray:
    """Horizontal CoM acceleration of the constant-height LIP.

    With zero vertical acceleration the general ``(z'' + g) / z`` factor
    reduces to ``g / z0``; ``com_height`` defaults to the state's CoM z.
    """
    z0 = state.com[2] if com_height is None else com_height
    f = np.asarray(f_ext, dtype=float)
    return gravity / z0 * (state.com[:2] - np.asarray(u_cop, dtype=float)[:2]) + f[:2] / mass


def _rk4(p, v, cop, acc, w2, dt):
    def f(p_, v_):
        return v_, w2 * (p_ - cop) + acc

    k1p, k1v = f(p, v)
    k2p, k2v = f(p + 0.5 * dt * k1p, v + 0.5 * dt * k1v)
    k3p, k3v = f(p + 0.5 * dt * k2p, v + 0.5 * dt * k2v)
    k4p, k4v = f(p + dt * k3p, v + dt * k3v)
    return (p + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p),
            v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))


def integrate(state: LipWalkerState, u_cop, f_ext, dt: float, mass: float = 82.0,
              gravity: float = GRAVITY, com_height: Optional[float] = None) -> LipWalkerState:
    """One fixed-step RK4 step under constant CoP and force.

    Feet, stance label and domain clock are untouched; ``time`` advances.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    z0 = state.com[2] if com_height is None else com_height
    cop = np.asarray(u_cop, dtype=float)[:2]
    acc = np.asarray(f_ext, dtype=float)[:2] / mass
    p, v = _rk4(state.com[:2], state.com_vel[:2], cop, acc, gravity / z0, dt)
    com = np.array([p[0], p[1], state.com[2]])
    vel = np.array([v[0], v[1], 0.0])
    return replace(state, com=com, com_vel=vel, time=state.time + dt, cop=cop)


def analytic_lip(p0, v0, cop, t: float, omega: float, accel=0.0):
    """Closed-form LIP solution under constant CoP and constant extra acceleration."""
    p0, v0, cop = (np.asarray(a, dtype=float) for a in (p0, v0, cop))
    # equilibrium of p'' = omega^2 (p - cop) + accel
    shift = cop - np.asarray(accel, dtype=float) / omega ** 2
    ch, sh = np.cosh(omega * t), np.sinh(omega * t)
    x0 = p0 - shift
    return shift + x0 * ch + v0 / omega * sh, x0 * omega * sh + v0 * ch


def orbital_energy(p, v, cop, omega: float):
    """``v^2 / 2 - omega^2 (p - cop)^2 / 2``, conserved under fixed CoP."""
    p, v, cop = (np.asarray(a, dtype=float) for a in (p, v, cop))
    return 0.5 * v ** 2 - 0.5 * omega ** 2 * (p - cop) ** 2


def impact_swap(state: LipWalkerState, swing_target_touchdown, max_step: float = 0.2) -> LipWalkerState:
    """Reset map at foot strike.

    The swing foot lands at ``swing_target_touchdown`` (z = 0), the stance
    label toggles and the domain clock restarts at the current time. The new
    swing foot is the old stance foot, so it starts from there.

    Raises:
        StepTooLong: If the sagittal step exceeds ``max_step``.
    """
    td = np.asarray(swing_target_touchdown, dtype=float)[:2]
    old_stance = state.stance_foot
    if abs(td[0] - old_stance[0]) > max_step + 1e-12:
        raise StepTooLong(f"step of {td[0] - old_stance[0]:.4f} m exceeds {max_step} m")
    landed = np.array([td[0], td[1], 0.0])
    s = state.with_feet(old_stance, landed)
    return replace(s, stance=state.stance.other(), t0=state.time,
                   swing_start=old_stance[:2].copy())


def observe(state: LipWalkerState, cop=None, noise_std: float = 0.0,
            rng: Optional[np.random.Generator] = None, com_bias=None):
    """Redundant observation ``(mu, eta)`` in both foot frames.

    Args:
        state: Walker state.
        cop: CoP to report; defaults to the last applied one.
        noise_std: Standard deviation of additive Gaussian noise on both signals.
        rng: Noise source, required when ``noise_std > 0``.
        com_bias: Vector subtracted from the true CoM before observing.
    """
    com = state.com if com_bias is None else state.com - np.asarray(com_bias, dtype=float)
    cop = state.cop if cop is None else np.asarray(cop, dtype=float)[:2]
    eta = np.concatenate([com - state.p_left, com - state.p_right])
    mu = np.concatenate([cop - state.p_left[:2], cop - state.p_right[:2]])
    if noise_std > 0:
        if rng is None:
            raise ValueError("noise requires an rng")
        mu = mu + noise_std * rng.standard_normal(4)
        eta = eta + noise_std * rng.standard_normal(6)
    return mu, eta


def stance_frame_output(state: LipWalkerState) -> np.ndarray:
    """CoM relative to the stance foot only (the non-redundant representation)."""
    return state.com - state.stance_foot


def randomize_model(seed: int, nominal: WalkerParams = WalkerParams(),
                    offset_range=COM_OFFSET_RANGE, height_range=(0.95, 1.05)) -> WalkerParams:
    """Draw a mismatched plant: CoM offset and effective pendulum height."""
    rng = np.random.default_rng(seed)
    lo, hi = offset_range
    offset = lo if hi == lo else float(rng.uniform(lo, hi))
    hlo, hhi = height_range
    scale = hlo if hhi == hlo else float(rng.uniform(hlo, hhi))
    return replace(nominal, com_offset=offset, height_scale=scale)


def orbit_state(params: WalkerParams, step_length: float, stance: Stance = Stance.LEFT,
                x0: float = 0.0) -> LipWalkerState:
    """Start of a single-support domain on the nominal periodic LIP orbit."""
    w = params.omega_nominal
    half = 0.5 * w * params.step_duration
    lam, width = step_length, params.step_width
    s = stance.lateral_sign
    foot = np.array([x0, -s * width / 2, 0.0])
    swing = np.array([x0 - lam, s * width / 2, 0.0])
    com = np.array([x0 - lam / 2, 0.0, params.com_height])
    vel = np.array([0.5 * lam * w / np.tanh(half), -s * 0.5 * width * w * np.tanh(half), 0.0])
    p_left, p_right = (foot, swing) if stance is Stance.LEFT else (swing, foot)
    return LipWalkerState(com, vel, p_left, p_right, stance, 0.0, swing[:2], 0.0, foot[:2])


@dataclass(frozen=True)
class Measurement:
    """What a controller is allowed to see at one control tick."""

    time: float
    com: np.ndarray
    com_vel: np.ndarray
    p_left: np.ndarray
    p_right: np.ndarray
    stance: Stance
    t0: float
    swing_start: np.ndarray
    cop: np.ndarray
    mu: np.ndarray
    eta: np.ndarray

    @property
    def stance_foot(self) -> np.ndarray:
        return self.p_left if self.stance is Stance.LEFT else self.p_right


@dataclass
class StepRecord:
    time: float
    desired: float
    achieved: float


class LipWalker:
    """Stateful desk plant stepped at the control tick."""

    def __init__(self, params: WalkerParams, state: LipWalkerState,
                 perturbation: Optional[PerturbationSchedule] = None, seed: int = 0):
        self.params = params
        self.state = state
        self.perturbation = perturbation or PerturbationSchedule.none()
        self._rng = np.random.default_rng(seed)
        self.events: List[dict] = []
        self.steps: List[StepRecord] = []
        self.fallen = False
        self.fall_time: Optional[float] = None
        self._target_rel = np.array([0.0, state.stance.lateral_sign * params.step_width])
        self._switch_time = self._draw_switch_time()
        self._last_force = None
        self._tick = 0

    @classmethod
    def on_orbit(cls, params: WalkerParams, step_length: float, **kw) -> "LipWalker":
        return cls(params, orbit_state(params.nominal(), step_length), **kw)

    @classmethod
    def standing(cls, params: WalkerParams, stance: Stance = Stance.LEFT, **kw) -> "LipWalker":
        """At rest over the stance foot with the feet side by side; never switches stance."""
        s = orbit_state(params.nominal(), 0.0, stance)
        foot = s.stance_foot
        state = replace(s, com=np.array([foot[0], foot[1], params.com_height]),
                        com_vel=np.zeros(3))
        walker = cls(params, state, **kw)
        walker._switch_time = np.inf
        return walker

    def _draw_switch_time(self) -> float:
        j = self.params.switch_jitter
        dt = self._rng.uniform(-j, j) if j > 0 else 0.0
        return self.state.t0 + self.params.step_duration + dt

    @property
    def time(self) -> float:
        return self.state.time

    def measure(self) -> Measurement:
        p = self.params
        bias = np.array([p.bias, 0.0, 0.0])
        mu, eta = observe(self.state, noise_std=p.noise_std, rng=self._rng, com_bias=bias)
        s = self.state
        return Measurement(s.time, s.com - bias, s.com_vel.copy(), s.p_left.copy(),
                           s.p_right.copy(), s.stance, s.t0, s.swing_start.copy(),
                           s.cop.copy(), mu, eta)

    def _goal_rel(self, state: LipWalkerState, touchdown: bool = False) -> np.ndarray:
        # the leg reach only limits where the foot can strike, so the swing
        # path heads for the commanded target and is cut short at touchdown.
        # Kept relative to the stance foot so an unclamped step is exact.
        p = self.params
        x = float(np.clip(self._target_rel[0], -p.max_step, p.max_step))
        if touchdown:
            cx = state.com[0] - state.stance_foot[0]
            x = float(np.clip(x, cx - p.reach, cx + p.reach))
        return np.array([x, self._target_rel[1]])

    def step(self, cop_command, step_target) -> None:
        """Advance one control tick.

        Args:
            cop_command: Desired world-frame CoP (x, y); clamped to the foot.
            step_target: Touchdown target relative to the stance foot.
        """
        if self.fallen:
            return
        p = self.params
        s = self.state
        self._target_rel = np.asarray(step_target, dtype=float)[:2]
        cop = clamp_cop(cop_command, s.stance_foot, p.foot_half_length, p.foot_half_width)
        mag = self.perturbation.magnitude(s.time)
        if mag != self._last_force:
            self.events.append({"type": "perturbation", "time": s.time, "force": float(mag)})
            self._last_force = mag
        force = self.perturbation.force(s.time) + p.mismatch_force
        self._tick += 1
        s = integrate(s, cop, force, p.control_dt, p.mass, p.gravity,
                      p.com_height * p.height_scale)
        # tick-count time keeps the clock free of float drift
        s = replace(s, time=self._tick * p.control_dt)

        goal = s.stance_foot[:2] + self._goal_rel(s)
        tau = min(max((s.time - s.t0) / (self._switch_time - s.t0), 0.0), 1.0)
        beta = smoothstep(tau)
        sw = (1 - beta) * s.swing_start + beta * goal
        s = s.with_feet(s.stance_foot, np.array([sw[0], sw[1], p.swing_height * np.sin(np.pi * tau)]))

        if s.time >= self._switch_time - 1e-9:
            rel = self._goal_rel(s, touchdown=True)
            goal = s.stance_foot[:2] + rel
            achieved = float(rel[0])
            self.steps.append(StepRecord(s.time, float(self._target_rel[0]), achieved))
            s = impact_swap(s, goal, p.max_step)
            self.events.append({"type": "impact", "time": s.time, "stance": s.stance.value,
                                "step_length": achieved})
        self.state = s
        if s.t0 == s.time:
            self._switch_time = self._draw_switch_time()

        rel = s.com[:2] - s.stance_foot[:2]
        if np.hypot(*rel) > p.fall_distance or s.com[2] < p.fall_height_ratio * p.com_height:
            self.fallen = True
            self.fall_time = s.time
            self.events.append({"type": "fall", "time": s.time})
