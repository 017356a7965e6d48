"""Exact discrete-time LTI plants, the oracle for the behavioral model."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..behavioral import IoTrajectory, as_signal
from ..errors import DimensionMismatch


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """``theta+ = A theta + B mu``, ``eta = C theta + D mu``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    theta: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        C = np.asarray(self.C, dtype=float).reshape(-1, A.shape[0])
        D = np.asarray(self.D, dtype=float).reshape(C.shape[0], B.shape[1])
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        theta = np.zeros(A.shape[0]) if self.theta is None else np.asarray(self.theta, float).ravel()
        if theta.size != A.shape[0]:
            raise DimensionMismatch(f"state has {theta.size} entries, A is {A.shape}")
        for name, v in (("A", A), ("B", B), ("C", C), ("D", D), ("theta", theta)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def beta(self) -> int:
        return self.A.shape[0]

    @property
    def kappa(self) -> int:
        return self.B.shape[1]

    @property
    def nu(self) -> int:
        return self.C.shape[0]

    def with_state(self, theta) -> "LtiSystem":
        return replace(self, theta=np.asarray(theta, dtype=float))

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A)))) if self.beta else 0.0

    def rollout(self, inputs):
        """Simulate a whole input sequence; returns ``(outputs, final_system)``."""
        u = as_signal(inputs, "inputs")
        if u.shape[1] != self.kappa:
            raise DimensionMismatch(f"inputs have {u.shape[1]} channels, system has {self.kappa}")
        theta = self.theta.copy()
        out = np.empty((u.shape[0], self.nu))
        for k, mu in enumerate(u):
            out[k] = self.C @ theta + self.D @ mu
            theta = self.A @ theta + self.B @ mu
        return out, self.with_state(theta)

    def trajectory(self, inputs, sample_interval: float = 1.0) -> IoTrajectory:
        y, _ = self.rollout(inputs)
        return IoTrajectory(as_signal(inputs), y, sample_interval)


def lti_step(sys: LtiSystem, mu):
    """One step: returns the advanced system and the output at the pre-step state."""
    mu = np.ravel(np.asarray(mu, dtype=float))
    if mu.size != sys.kappa:
        raise DimensionMismatch(f"input has {mu.size} entries, system expects {sys.kappa}")
    eta = sys.C @ sys.theta + sys.D @ mu
    return sys.with_state(sys.A @ sys.theta + sys.B @ mu), eta


def _full_rank(M: np.ndarray, n: int) -> bool:
    return np.linalg.matrix_rank(M, tol=1e-8 * max(1.0, np.abs(M).max())) == n


def random_stable_system(rng: np.random.Generator, beta: int, kappa: int, nu: int,
                         radius: float = 0.95, feedthrough: bool = True,
                         max_tries: int = 100) -> LtiSystem:
    """Random controllable and observable system with spectral radius ``<= radius``."""
    for _ in range(max_tries):
        A = rng.standard_normal((beta, beta))
        rho = np.max(np.abs(np.linalg.eigvals(A)))
        A *= rng.uniform(0.3, radius) / rho
        B = rng.standard_normal((beta, kappa))
        C = rng.standard_normal((nu, beta))
        D = rng.standard_normal((nu, kappa)) if feedthrough else np.zeros((nu, kappa))
        ctrb = np.hstack([np.linalg.matrix_power(A, i) @ B for i in range(beta)])
        obsv = np.vstack([C @ np.linalg.matrix_power(A, i) for i in range(beta)])
        if _full_rank(ctrb, beta) and _full_rank(obsv, beta):
            return LtiSystem(A, B, C, D, rng.standard_normal(beta))
    raise RuntimeError("could not draw a minimal system")
