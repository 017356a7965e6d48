"""Operator-splitting solver for strictly convex box/affine QPs.

Problems have the form::

    minimize    1/2 z' H z + f' z
    subject to  lower <= z <= upper
                l <= A z <= u

The solver runs an ADMM iteration in the OSQP style on the stacked
constraint matrix ``[I; A]`` with a cached Cholesky factor of the
regularized KKT matrix. Dual variables ``y`` follow the sign convention of
the Lagrangian ``1/2 z'Hz + f'z + y'(Abar z - s)``: negative entries mark active
lower bounds, positive entries active upper bounds.
"""
from __future__ import annotations

import enum
import json
import weakref
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPositiveDefinite

UNBOUNDED = np.inf
"""Sentinel for a missing bound; never substitute a large finite number."""


class QpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERS = "max_iters"
    INFEASIBLE = "infeasible"


# read-only Hessians already checked for symmetry, keyed by identity; planners
# reuse one frozen H across thousands of solves
_symmetric: "weakref.WeakValueDictionary" = weakref.WeakValueDictionary()


def _known_symmetric(H: np.ndarray) -> bool:
    return not H.flags.writeable and _symmetric.get(id(H)) is H


def _vec(x, n, name, fill=None):
    if x is None:
        return np.full(n, fill, dtype=float)
    v = np.ravel(np.asarray(x, dtype=float))
    if v.size == 1 and n != 1:
        v = np.full(n, float(v[0]))
    if v.size != n:
        raise DimensionMismatch(f"{name} has {v.size} entries, expected {n}")
    return v


@dataclass(frozen=True, eq=False)
class QuadraticProgram:
    """Strictly convex QP data. Infinite bounds use :data:`UNBOUNDED`."""

    H: np.ndarray
    f: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    l: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise DimensionMismatch(f"H must be square, got shape {H.shape}")
        n = H.shape[0]
        if not _known_symmetric(H):
            scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
            if H.size and np.max(np.abs(H - H.T)) > 1e-12 * scale:
                raise ValueError("H is not symmetric")
            if not H.flags.writeable:
                _symmetric[id(H)] = H
        f = _vec(self.f, n, "f")
        lower = _vec(self.lower, n, "lower", -UNBOUNDED)
        upper = _vec(self.upper, n, "upper", UNBOUNDED)
        if self.A is None:
            A = np.zeros((0, n))
        else:
            A = np.asarray(self.A, dtype=float).reshape(-1, n)
        m = A.shape[0]
        l = _vec(self.l, m, "l", -UNBOUNDED)
        u = _vec(self.u, m, "u", UNBOUNDED)
        for name, arr in (("H", H), ("f", f), ("A", A)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)) or np.any(np.isnan(l)) or np.any(np.isnan(u)):
            raise ValueError("bounds contain NaN")
        if np.any(lower > upper):
            raise ValueError("box lower bound exceeds upper bound")
        if np.any(l > u):
            raise ValueError("affine lower bound exceeds upper bound")
        for name, val in (("H", H), ("f", f), ("lower", lower), ("upper", upper),
                          ("A", A), ("l", l), ("u", u)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def bar_lower(self) -> np.ndarray:
        return np.concatenate([self.lower, self.l])

    @property
    def bar_upper(self) -> np.ndarray:
        return np.concatenate([self.upper, self.u])

    def constraint_values(self, z) -> np.ndarray:
        """``[z; A z]``, the quantities the stacked bounds apply to."""
        return np.concatenate([z, self.A @ z])

    def constraint_adjoint(self, y) -> np.ndarray:
        """``[I; A]' y``."""
        return y[:self.n] + self.A.T @ y[self.n:]

    def objective(self, z) -> float:
        return float(0.5 * z @ self.H @ z + self.f @ z)

    def to_dict(self) -> dict:
        def enc(a):
            return [None if not np.isfinite(v) else float(v) for v in np.ravel(a)]
        return {"H": self.H.tolist(), "f": self.f.tolist(),
                "lower": enc(self.lower), "upper": enc(self.upper),
                "A": self.A.tolist(), "l": enc(self.l), "u": enc(self.u)}

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticProgram":
        def dec(a, sign):
            return np.array([sign * UNBOUNDED if v is None else v for v in a], dtype=float)
        n = len(d["f"])
        A = np.asarray(d["A"], dtype=float).reshape(-1, n)
        return cls(np.asarray(d["H"]), np.asarray(d["f"]), dec(d["lower"], -1), dec(d["upper"], 1),
                   A, dec(d["l"], -1), dec(d["u"], 1))

    def dump(self, path) -> Path:
        """Write the problem to JSON for offline triage of solver failures."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict()))
        return path


@dataclass
class QpSolution:
    z: np.ndarray
    status: QpStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    y: np.ndarray = field(repr=False, default=None)

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def kkt_residual(qp: QuadraticProgram, z, duals=None) -> tuple:
    """Max-norm constraint violation and stationarity residual at ``(z, duals)``.

    Args:
        qp: Problem data.
        z: Primal point, ``n`` entries.
        duals: Multipliers for the stacked rows ``[I; A]`` (``n + m`` entries);
            zero if omitted.

    Returns:
        ``(primal, dual)`` residuals.
    """
    z = np.ravel(np.asarray(z, dtype=float))
    if z.size != qp.n:
        raise DimensionMismatch(f"z has {z.size} entries, expected {qp.n}")
    y = np.zeros(qp.n + qp.m) if duals is None else np.ravel(np.asarray(duals, dtype=float))
    if y.size != qp.n + qp.m:
        raise DimensionMismatch(f"duals have {y.size} entries, expected {qp.n + qp.m}")
    c = qp.constraint_values(z)
    viol = np.maximum(c - qp.bar_upper, qp.bar_lower - c)
    primal = float(max(0.0, np.max(viol))) if viol.size else 0.0
    dual = float(np.max(np.abs(qp.H @ z + qp.f + qp.constraint_adjoint(y)))) if qp.n else 0.0
    return primal, dual


@dataclass
class QpSettings:
    rho: float = 1.0
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-8
    eps_infeasible: float = 1e-7
    max_iters: int = 20000
    adapt_interval: int = 50
    check_interval: int = 10
    polish: bool = True
    polish_interval: int = 25
    polish_max_size: int = 1200


_RHO_MIN, _RHO_MAX, _RHO_EQ_SCALE = 1e-6, 1e6, 1e3


class QpSolver:
    """ADMM solver instance with factorization caches.

    One instance is meant for one control thread; it caches the Cholesky factor
    of ``H`` and of the ADMM KKT matrix between calls so that repeated solves
    with the same Hessian (receding-horizon planning) skip refactorization.
    """

    def __init__(self, settings: Optional[QpSettings] = None, **overrides):
        self.settings = settings or QpSettings()
        for k, v in overrides.items():
            if not hasattr(self.settings, k):
                raise TypeError(f"unknown solver setting {k!r}")
            setattr(self.settings, k, v)
        self._h_key = None
        self._h_chol = None
        self._kkt_key = None
        self._kkt_chol = None
        self.factorizations = 0

    # -- factorization caches -------------------------------------------------

    def _same(self, a, b) -> bool:
        return a is b or (b is not None and a.shape == b.shape and np.array_equal(a, b))

    def _hessian_factor(self, H):
        if self._h_key is None or not self._same(H, self._h_key):
            try:
                self._h_chol = scipy.linalg.cho_factor(H, lower=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefinite("Hessian is not positive definite") from exc
            if not np.all(np.diag(self._h_chol[0]) > 0):
                raise NotPositiveDefinite("Hessian is not positive definite")
            self._h_key = H
            self._kkt_key = None
            self.factorizations += 1
        return self._h_chol

    def _kkt_factor(self, qp, rho):
        key = (qp.A, rho.tobytes())
        if (self._kkt_key is not None and self._kkt_key[1] == key[1]
                and self._same(qp.A, self._kkt_key[0])):
            return self._kkt_chol
        n = qp.n
        K = qp.H + np.diag(self.settings.sigma + rho[:n])
        if qp.m:
            K = K + (qp.A.T * rho[n:]) @ qp.A
        self._kkt_chol = scipy.linalg.cho_factor(K, lower=True, check_finite=False)
        self._kkt_key = key
        self.factorizations += 1
        return self._kkt_chol

    # -- helpers --------------------------------------------------------------

    def _rho_vector(self, lo, hi, rho):
        r = np.full(lo.size, rho)
        free = np.isinf(lo) & np.isinf(hi)
        r[free] = _RHO_MIN
        r[(lo == hi) & ~free] = _RHO_EQ_SCALE * rho
        return r

    def _finish(self, qp, x, y, status, it):
        p, d = kkt_residual(qp, x, y)
        return QpSolution(x, status, it, p, d, qp.objective(x), y)

    def _polish(self, qp, x, z, y, lo, hi):
        n = qp.n
        act_lo = np.isfinite(lo) & (z - lo < -y)
        act_hi = np.isfinite(hi) & (hi - z < y) & ~act_lo
        act = act_lo | act_hi
        k = int(np.count_nonzero(act))
        if n + k > self.settings.polish_max_size:
            return None
        rows = np.flatnonzero(act)
        Abar_act = np.zeros((k, n))
        box_rows = rows[rows < n]
        aff_rows = rows[rows >= n] - n
        nb = box_rows.size
        Abar_act[np.arange(nb), box_rows] = 1.0
        if aff_rows.size:
            Abar_act[nb:] = qp.A[aff_rows]
        b = np.where(act_lo, lo, hi)[np.concatenate([box_rows, aff_rows + n])]
        if k == 0:
            xs = -scipy.linalg.cho_solve(self._h_chol, qp.f, check_finite=False)
            ys = np.zeros(0)
        else:
            KKT = np.block([[qp.H, Abar_act.T], [Abar_act, np.zeros((k, k))]])
            rhs = np.concatenate([-qp.f, b])
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(KKT, rhs, rcond=None)[0]
            xs, ys = sol[:n], sol[n:]
        y_full = np.zeros(n + qp.m)
        y_full[np.concatenate([box_rows, aff_rows + n]).astype(int)] = ys
        eps = self.settings.eps_abs
        if np.any(y_full[act_lo] > eps) or np.any(y_full[act_hi] < -eps):
            return None
        p, d = kkt_residual(qp, xs, y_full)
        if p <= eps and d <= eps:
            return xs, y_full
        return None

    # -- main entry -----------------------------------------------------------

    def solve(self, qp: QuadraticProgram,
              warm_start: Union[None, np.ndarray, QpSolution] = None) -> QpSolution:
        """Solve ``qp``; optionally warm-start from a primal point or a previous solution.

        Raises:
            NotPositiveDefinite: If ``H`` has no Cholesky factor.
        """
        s = self.settings
        n, m = qp.n, qp.m
        chol = self._hessian_factor(qp.H)
        lo, hi = qp.bar_lower, qp.bar_upper

        x_unc = -scipy.linalg.cho_solve(chol, qp.f, check_finite=False)
        c = qp.constraint_values(x_unc)
        if np.all(c >= lo) and np.all(c <= hi):
            return self._finish(qp, x_unc, np.zeros(n + m), QpStatus.OPTIMAL, 0)

        if isinstance(warm_start, QpSolution):
            x = np.array(warm_start.z, dtype=float)
            y = (np.array(warm_start.y, dtype=float)
                 if warm_start.y is not None and np.size(warm_start.y) == n + m
                 else np.zeros(n + m))
        elif warm_start is not None:
            x = _vec(warm_start, n, "warm_start")
            y = np.zeros(n + m)
        else:
            x = np.clip(x_unc, qp.lower, qp.upper)
            y = np.zeros(n + m)
        if x.shape != (n,):
            raise DimensionMismatch(f"warm start has {x.size} entries, expected {n}")
        zc = qp.constraint_values(x)
        z = np.clip(zc, lo, hi) if warm_start is None or not isinstance(warm_start, QpSolution) else zc

        rho_scalar = s.rho
        rho = self._rho_vector(lo, hi, rho_scalar)
        kkt = self._kkt_factor(qp, rho)
        alpha, sigma = s.alpha, s.sigma
        last_polish = None
        y_prev = y.copy()

        for it in range(1, s.max_iters + 1):
            rhs = sigma * x - qp.f + qp.constraint_adjoint(rho * z - y)
            x_t = scipy.linalg.cho_solve(kkt, rhs, check_finite=False)
            z_t = qp.constraint_values(x_t)
            x = alpha * x_t + (1.0 - alpha) * x
            z_relax = alpha * z_t + (1.0 - alpha) * z
            z_new = np.clip(z_relax + y / rho, lo, hi)
            y_prev = y
            y = y + rho * (z_relax - z_new)
            z = z_new

            Ax = qp.constraint_values(x)
            r_prim = float(np.max(np.abs(Ax - z)))
            Hx = qp.H @ x
            Aty = qp.constraint_adjoint(y)
            r_dual = float(np.max(np.abs(Hx + qp.f + Aty)))
            if r_prim <= s.eps_abs and r_dual <= s.eps_abs:
                return self._finish(qp, x, y, QpStatus.OPTIMAL, it)

            if s.polish and it % s.polish_interval == 0:
                sig = (tuple(np.flatnonzero(z - lo < -y)), tuple(np.flatnonzero(hi - z < y)))
                if sig != last_polish:
                    last_polish = sig
                    pol = self._polish(qp, x, z, y, lo, hi)
                    if pol is not None:
                        return self._finish(qp, pol[0], pol[1], QpStatus.OPTIMAL, it)

            if it % s.check_interval == 0 and self._infeasible(qp, y - y_prev, lo, hi):
                return self._finish(qp, x, y, QpStatus.INFEASIBLE, it)

            if it % s.adapt_interval == 0:
                p_scale = max(float(np.max(np.abs(Ax))), float(np.max(np.abs(z))), 1e-30)
                d_scale = max(float(np.max(np.abs(Hx))), float(np.max(np.abs(Aty))),
                              float(np.max(np.abs(qp.f))) if n else 0.0, 1e-30)
                ratio = np.sqrt((r_prim / p_scale) / max(r_dual / d_scale, 1e-30))
                new_rho = float(np.clip(rho_scalar * ratio, _RHO_MIN, _RHO_MAX))
                if new_rho > 5.0 * rho_scalar or new_rho < 0.2 * rho_scalar:
                    rho_scalar = new_rho
                    rho = self._rho_vector(lo, hi, rho_scalar)
                    kkt = self._kkt_factor(qp, rho)

        return self._finish(qp, x, y, QpStatus.MAX_ITERS, s.max_iters)

    def _infeasible(self, qp, dy, lo, hi) -> bool:
        norm = float(np.max(np.abs(dy))) if dy.size else 0.0
        if norm < 1e-12:
            return False
        dy = dy / norm
        eps = self.settings.eps_infeasible
        if np.max(np.abs(qp.constraint_adjoint(dy))) > eps:
            return False
        pos, neg = dy > eps, dy < -eps
        if np.any(np.isinf(hi[pos])) or np.any(np.isinf(lo[neg])):
            return False
        support = float(hi[pos] @ dy[pos] + lo[neg] @ dy[neg])
        return support < -eps


def solve(qp: QuadraticProgram, warm_start=None, **settings) -> QpSolution:
    """One-shot convenience wrapper around :class:`QpSolver`."""
    return QpSolver(**settings).solve(qp, warm_start)
