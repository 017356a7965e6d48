"""LIP-model MPC baseline: the data-driven constraint replaced by LIP dynamics.

Per horizontal axis the constant-height LIP ``x'' = w^2 (x - u)`` is
discretized exactly under zero-order hold::

    Phi   = [[cosh(wh), sinh(wh)/w], [w sinh(wh), cosh(wh)]]
    Gamma = [1 - cosh(wh), -w sinh(wh)]

Planned feet are taken from the references, so the redundant output error
reduces to the CoM error repeated in both foot blocks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DimensionMismatch, SolverNotOptimal
from ..qp import QpSolver, QuadraticProgram
from ..reference import Stance
from .core import KAPPA, NU, PlanResult, _spd


@dataclass(frozen=True, eq=False)
class LipMpcConfig:
    delta_t: float = 0.01
    N: int = 300
    com_height: float = 0.8
    gravity: float = 9.81
    Q: np.ndarray = None
    R: np.ndarray = None
    input_lower: Optional[np.ndarray] = None
    input_upper: Optional[np.ndarray] = None
    output_lower: Optional[np.ndarray] = None
    output_upper: Optional[np.ndarray] = None
    stance_box: Optional[tuple] = (0.09, 0.05)
    replan_hz: float = 100.0

    def __post_init__(self):
        if not self.delta_t > 0 or self.N < 1:
            raise ValueError("delta_t must be positive and N >= 1")
        Q = _spd(10.0 * np.eye(NU) if self.Q is None else self.Q, "Q")
        R = _spd(0.1 * np.eye(KAPPA) if self.R is None else self.R, "R")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        for name, n, fill in (("input_lower", KAPPA, -np.inf), ("input_upper", KAPPA, np.inf),
                              ("output_lower", NU, -np.inf), ("output_upper", NU, np.inf)):
            v = getattr(self, name)
            v = np.full(n, fill) if v is None else np.broadcast_to(np.asarray(v, float), (n,)).copy()
            object.__setattr__(self, name, v)

    @property
    def omega(self) -> float:
        return float(np.sqrt(self.gravity / self.com_height))

    @property
    def horizon(self) -> float:
        return self.N * self.delta_t

    @classmethod
    def from_planner(cls, cfg, **kw) -> "LipMpcConfig":
        """Copy weights and boxes of a DDPC :class:`PlannerConfig`."""
        return cls(Q=cfg.Q, R=cfg.R, input_lower=cfg.input_lower, input_upper=cfg.input_upper,
                   output_lower=cfg.output_lower, output_upper=cfg.output_upper,
                   stance_box=cfg.stance_box, **kw)


@dataclass(frozen=True)
class LipState:
    com: np.ndarray      # (2,) horizontal position
    com_vel: np.ndarray  # (2,)
    time: float = 0.0


def lip_discretization(omega: float, h: float):
    ch, sh = np.cosh(omega * h), np.sinh(omega * h)
    Phi = np.array([[ch, sh / omega], [omega * sh, ch]])
    Gamma = np.array([1.0 - ch, -omega * sh])
    return Phi, Gamma


def lip_prediction_matrices(omega: float, h: float, N: int):
    """Map ``(x0, v0)`` and inputs ``u_0..u_{N-1}`` to positions at knots ``1..N``.

    Returns ``(S, T)`` with ``x = S @ [x0, v0] + T @ u``; uses the closed form
    ``Phi^m`` and ``[Phi^m Gamma]_0 = cosh(m w h) - cosh((m+1) w h)``.
    """
    j = np.arange(1, N + 1)
    S = np.column_stack([np.cosh(j * omega * h), np.sinh(j * omega * h) / omega])
    lag = j[:, None] - 1 - np.arange(N)[None, :]
    T = np.where(lag >= 0, np.cosh(lag * omega * h) - np.cosh((lag + 1) * omega * h), 0.0)
    return S, T


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class _LipStructure:
    def __init__(self, cfg: LipMpcConfig):
        self.S, self.T = lip_prediction_matrices(cfg.omega, cfg.delta_t, cfg.N)
        self.Tt = np.ascontiguousarray(self.T.T)
        sel = np.zeros((NU, 3))
        sel[0:3] = np.eye(3)
        sel[3:6] = np.eye(3)
        W = sel.T @ cfg.Q @ sel                 # weight on CoM error (x, y, z)
        selu = np.vstack([np.eye(2), np.eye(2)])
        Wu = selu.T @ cfg.R @ selu              # weight on CoP error
        self.W, self.Wu = W[:2, :2], Wu
        self.decoupled = self.W[0, 1] == 0.0 and self.Wu[0, 1] == 0.0
        N = cfg.N
        # the unstable mode makes H entries grow like cosh(omega N dt)^2; each
        # QP is scaled to unit max |H| so the absolute tolerances stay reachable
        if self.decoupled:
            self.H, self.scale = [], []
            for a in range(2):
                H = 2.0 * (self.W[a, a] * self.T.T @ self.T + self.Wu[a, a] * np.eye(N))
                c = 1.0 / np.max(np.abs(H))
                self.H.append(_frozen(0.5 * c * (H + H.T)))
                self.scale.append(c)
        else:
            Tb = np.kron(np.eye(2), self.T)
            Wb = np.kron(self.W, np.eye(N))
            Wub = np.kron(self.Wu, np.eye(N))
            H = 2.0 * (Tb.T @ Wb @ Tb + Wub)
            c = 1.0 / np.max(np.abs(H))
            self.H, self.scale = [_frozen(0.5 * c * (H + H.T))], [c]


def _feet(refs):
    pl = np.asarray(refs.p_left, dtype=float)
    pr = np.asarray(refs.p_right, dtype=float)
    return pl[:, :2], pr[:, :2]


def lip_mpc_plan(refs, state: LipState, cfg: LipMpcConfig, warm_start=None,
                 solvers=None, raise_on_failure: bool = True) -> PlanResult:
    """Plan a CoP sequence with the LIP predictor.

    Args:
        refs: :class:`ReferenceWindow` over ``cfg.N`` knots; its feet
            positions define the planned contacts.
        state: Current CoM position and velocity.
        cfg: Baseline configuration.
        warm_start: Previous :class:`PlanResult` (its solutions seed the solvers).
        solvers: Optional list of two :class:`QpSolver` (one per axis) to keep
            factorization caches between calls.
    """
    N = cfg.N
    if refs.r_eta.shape[0] != N:
        raise DimensionMismatch(f"references cover {refs.r_eta.shape[0]} knots, horizon is {N}")
    st = _lip_structure(cfg)
    pl, pr = _feet(refs)
    c_ref = np.asarray(refs.com, dtype=float)[:, :2]
    cop_ref = np.asarray(refs.cop, dtype=float)
    x0 = np.column_stack([state.com[:2], state.com_vel[:2]])   # rows: axis
    free = x0 @ st.S.T                                          # (2, N)
    # CoP bounds: static box in both foot frames, tightened to the stance foot
    lo = np.maximum(pl + cfg.input_lower[0:2], pr + cfg.input_lower[2:4])
    hi = np.minimum(pl + cfg.input_upper[0:2], pr + cfg.input_upper[2:4])
    if cfg.stance_box is not None:
        h = np.asarray(cfg.stance_box, dtype=float)
        foot = np.where(np.array([s is Stance.LEFT for s in refs.stance])[:, None], pl, pr)
        lo, hi = np.maximum(lo, foot - h), np.minimum(hi, foot + h)
    # CoM bounds from the output box in both foot frames
    clo = np.maximum(pl + cfg.output_lower[0:2], pr + cfg.output_lower[3:5])
    chi = np.minimum(pl + cfg.output_upper[0:2], pr + cfg.output_upper[3:5])

    solvers = solvers or [QpSolver(), QpSolver()]
    prev = warm_start.extras.get("solutions") if warm_start is not None else None
    sols = []
    if st.decoupled:
        for a in range(2):
            f = 2.0 * st.scale[a] * (st.W[a, a] * st.Tt @ (free[a] - c_ref[:, a])
                                     - st.Wu[a, a] * cop_ref[:, a])
            rows = np.isfinite(clo[:, a]) | np.isfinite(chi[:, a])
            A = st.T[rows] if rows.any() else None
            qp = QuadraticProgram(st.H[a], f, lo[:, a], hi[:, a], A,
                                  (clo[rows, a] - free[a, rows]) if A is not None else None,
                                  (chi[rows, a] - free[a, rows]) if A is not None else None)
            ws = _shifted(prev[a]) if prev else None
            sols.append(solvers[a].solve(qp, ws))
        cop = np.column_stack([sols[0].z, sols[1].z])
    else:
        Tb = np.kron(np.eye(2), st.T)
        e = (free - c_ref.T).ravel()
        f = 2.0 * st.scale[0] * (Tb.T @ np.kron(st.W, np.eye(N)) @ e
                                 - np.kron(st.Wu, np.eye(N)) @ cop_ref.T.ravel())
        qp = QuadraticProgram(st.H[0], f, lo.T.ravel(), hi.T.ravel(), Tb,
                              (clo.T.ravel() - free.ravel()), (chi.T.ravel() - free.ravel()))
        ws = _shifted(prev[0], 2) if prev else None
        sols.append(solvers[0].solve(qp, ws))
        cop = sols[0].z.reshape(2, N).T

    com = free.T + st.T @ cop
    z = np.asarray(refs.com, dtype=float)[:, 2:3]
    com3 = np.hstack([com, z])
    eta = np.hstack([com3 - refs.p_left, com3 - refs.p_right])
    mu = np.hstack([cop - pl, cop - pr])
    err = eta - refs.r_eta
    du = mu - refs.r_mu
    objective = float(np.einsum("ki,ij,kj->", err, cfg.Q, err) + np.einsum("ki,ij,kj->", du, cfg.R, du))
    status = next((s.status for s in sols if not s.optimal), sols[0].status)
    res = PlanResult(mu, eta, objective, status, np.asarray(refs.times, float),
                     int(sum(s.iterations for s in sols)), sols[0],
                     {"cop": cop, "com": com, "solutions": sols})
    if not res.usable and raise_on_failure:
        raise SolverNotOptimal(f"LIP-MPC QP finished with status {status.value}", res)
    return res


def _shifted(prev_sol, blocks: int = 1, knots: int = 1):
    z = prev_sol.z.reshape(blocks, -1)
    return np.hstack([z[:, knots:], np.repeat(z[:, -1:], knots, axis=1)]).ravel()


_structures: dict = {}


def _lip_structure(cfg: LipMpcConfig) -> _LipStructure:
    hit = _structures.get(id(cfg))
    if hit is not None and hit[0] is cfg:
        return hit[1]
    st = _LipStructure(cfg)
    if len(_structures) > 8:
        _structures.clear()
    _structures[id(cfg)] = (cfg, st)
    return st
