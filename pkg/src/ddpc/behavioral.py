"""Hankel-matrix behavioral model and least-squares N-step predictor.

Recorded input/output trajectories are stacked into depth-``L`` Hankel
matrices, split into past (``T_ini`` rows) and future (``N`` rows) blocks,
and condensed into a single transition matrix ``G`` so that::

    eta_future = G @ col(mu_past, eta_past, mu_future)

Signals are stored time-major: a trajectory of ``T`` samples with ``d``
channels is a ``(T, d)`` array, and stacked window vectors are flattened
sample by sample (``x[0], x[1], ...``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DegenerateData, DimensionMismatch, SignalTooShort

PINV_RCOND = 1e-10
PE_RCOND = 1e-9
TOL_LTI = 1e-8


def as_signal(signal, name: str = "signal") -> np.ndarray:
    """Coerce a sequence of vectors (or scalars) into a ``(T, d)`` float array.

    Ragged input raises :class:`DimensionMismatch`.
    """
    if isinstance(signal, np.ndarray):
        arr = signal.astype(float, copy=False)
    else:
        rows = list(signal)
        if not rows:
            return np.zeros((0, 0))
        dims = {np.size(r) for r in rows}
        if len(dims) != 1:
            raise DimensionMismatch(f"{name} is ragged: sample sizes {sorted(dims)}")
        arr = np.asarray([np.ravel(np.asarray(r, dtype=float)) for r in rows])
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a sequence of vectors, got ndim={arr.ndim}")
    return arr


@dataclass(frozen=True)
class IoTrajectory:
    """Input/output record sampled at a fixed interval.

    Attributes:
        inputs: ``(T, kappa)`` array of input samples.
        outputs: ``(T, nu)`` array of output samples.
        sample_interval: Seconds between consecutive samples.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    sample_interval: float = 1.0

    def __post_init__(self):
        u = as_signal(self.inputs, "inputs")
        y = as_signal(self.outputs, "outputs")
        if u.shape[0] != y.shape[0]:
            raise DimensionMismatch(
                f"inputs have {u.shape[0]} samples but outputs have {y.shape[0]}")
        if u.shape[0] < 1:
            raise SignalTooShort("trajectory must hold at least one sample")
        if not self.sample_interval > 0:
            raise ValueError(f"sample_interval must be positive, got {self.sample_interval}")
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "outputs", y)
        object.__setattr__(self, "sample_interval", float(self.sample_interval))

    @property
    def T(self) -> int:
        return self.inputs.shape[0]

    @property
    def kappa(self) -> int:
        return self.inputs.shape[1]

    @property
    def nu(self) -> int:
        return self.outputs.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.T) * self.sample_interval

    def tail(self, n: int) -> "IoTrajectory":
        """Last ``n`` samples (the whole record if it is shorter)."""
        n = min(n, self.T)
        return IoTrajectory(self.inputs[self.T - n:], self.outputs[self.T - n:],
                            self.sample_interval)

    def resample(self, sample_interval: float) -> "IoTrajectory":
        """Keep every k-th sample so the new interval is ``sample_interval``.

        The ratio to the current interval must be an integer.
        """
        ratio = sample_interval / self.sample_interval
        k = int(round(ratio))
        if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"cannot resample dt={self.sample_interval} to {sample_interval}: "
                "ratio is not an integer")
        return IoTrajectory(self.inputs[::k], self.outputs[::k], self.sample_interval * k)


@dataclass(frozen=True)
class DdpcHyperparams:
    """Data length and horizon sizes of the behavioral model.

    ``L`` is always derived as ``T_ini + N``.
    """

    T: int
    T_ini: int
    N: int
    delta_t: float = 1.0
    beta_hint: Optional[int] = None

    def __post_init__(self):
        if self.T_ini < 1 or self.N < 1:
            raise ValueError(f"T_ini and N must be >= 1, got T_ini={self.T_ini}, N={self.N}")
        if not self.T > self.L:
            raise ValueError(f"need T > L = T_ini + N, got T={self.T}, L={self.L}")
        if not self.delta_t > 0:
            raise ValueError(f"delta_t must be positive, got {self.delta_t}")

    @property
    def L(self) -> int:
        return self.T_ini + self.N


PRESETS = {
    "sim": DdpcHyperparams(T=400, T_ini=10, N=20, delta_t=0.02),
    "hardware": DdpcHyperparams(T=800, T_ini=20, N=100, delta_t=0.015),
}


@dataclass(frozen=True)
class PersistencyReport:
    """Outcome of a persistent-excitation rank test; truthy when exciting."""

    excited: bool
    rank: int
    required_rank: int
    smallest_retained: float
    singular_values: np.ndarray = field(repr=False)

    def __bool__(self) -> bool:
        return self.excited


@dataclass(frozen=True)
class PartitionedHankel:
    """Past/future blocks of the (mosaic) input and output Hankel matrices."""

    u_past: np.ndarray
    u_future: np.ndarray
    y_past: np.ndarray
    y_future: np.ndarray
    kappa: int
    nu: int
    T_ini: int
    N: int

    def __post_init__(self):
        cols = {b.shape[1] for b in (self.u_past, self.u_future, self.y_past, self.y_future)}
        if len(cols) != 1:
            raise DimensionMismatch(f"Hankel blocks disagree on column count: {sorted(cols)}")
        expected = {
            "u_past": self.kappa * self.T_ini,
            "u_future": self.kappa * self.N,
            "y_past": self.nu * self.T_ini,
            "y_future": self.nu * self.N,
        }
        for name, rows in expected.items():
            if getattr(self, name).shape[0] != rows:
                raise DimensionMismatch(
                    f"{name} has {getattr(self, name).shape[0]} rows, expected {rows}")

    @property
    def M(self) -> int:
        return self.u_past.shape[1]

    @property
    def regressor(self) -> np.ndarray:
        """The stacked ``[U_p; Y_p; U_f]`` matrix."""
        return np.vstack([self.u_past, self.y_past, self.u_future])

    def permute_columns(self, order) -> "PartitionedHankel":
        order = np.asarray(order)
        return PartitionedHankel(self.u_past[:, order], self.u_future[:, order],
                                 self.y_past[:, order], self.y_future[:, order],
                                 self.kappa, self.nu, self.T_ini, self.N)


@dataclass(frozen=True)
class TransitionMatrix:
    """Least-squares map from ``col(mu_ini, eta_ini, mu_future)`` to ``eta_future``.

    Attributes:
        g: ``(nu*N, kappa*T_ini + nu*T_ini + kappa*N)`` matrix.
        kappa, nu, T_ini, N: Dimensions the matrix was fitted for.
        fit_residual: Frobenius norm of ``G W - Y_f`` on the training columns.
        condition_estimate: ``sigma_max / sigma_min`` of the regressor ``W``;
            infinite when ``W`` is rank deficient.
        target_norm: Frobenius norm of ``Y_f``, for relative residuals.
    """

    g: np.ndarray
    kappa: int
    nu: int
    T_ini: int
    N: int
    fit_residual: float = 0.0
    condition_estimate: float = 1.0
    target_norm: float = 0.0

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        rows = self.nu * self.N
        cols = (self.kappa + self.nu) * self.T_ini + self.kappa * self.N
        if g.shape != (rows, cols):
            raise DimensionMismatch(f"G has shape {g.shape}, expected {(rows, cols)}")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @property
    def dims(self) -> tuple:
        return (self.kappa, self.nu, self.T_ini, self.N)

    @property
    def n_past(self) -> int:
        return (self.kappa + self.nu) * self.T_ini

    @property
    def g_past(self) -> np.ndarray:
        return self.g[:, :self.n_past]

    @property
    def g_future(self) -> np.ndarray:
        return self.g[:, self.n_past:]

    @property
    def relative_residual(self) -> float:
        if self.target_norm == 0.0:
            return 0.0 if self.fit_residual == 0.0 else np.inf
        return self.fit_residual / self.target_norm

    @property
    def near_singular(self) -> bool:
        return not self.condition_estimate < 1.0 / PINV_RCOND


def build_hankel(signal, L: int) -> np.ndarray:
    """Depth-``L`` block Hankel matrix of a vector signal.

    Column ``j`` is the window ``signal[j], ..., signal[j+L-1]`` stacked
    vertically, so the result has shape ``(d*L, T-L+1)``.

    Raises:
        SignalTooShort: If ``T < L`` or ``L < 1``.
        DimensionMismatch: If the samples do not share one dimension.
    """
    w = as_signal(signal)
    T, d = w.shape
    if L < 1:
        raise SignalTooShort(f"Hankel depth must be >= 1, got {L}")
    if T < L:
        raise SignalTooShort(f"signal has {T} samples, fewer than depth L={L}")
    cols = T - L + 1
    # windows[j, i, :] = w[j + i]
    windows = np.lib.stride_tricks.sliding_window_view(w, (L, d))[:, 0]
    return np.ascontiguousarray(windows.reshape(cols, L * d).T)


def is_persistently_exciting(signal, order: int, rcond: float = PE_RCOND) -> PersistencyReport:
    """Check whether the depth-``order`` Hankel matrix has full row rank.

    Singular values below ``rcond * sigma_max`` count as zero.
    """
    H = build_hankel(signal, order)
    required = H.shape[0]
    s = np.linalg.svd(H, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return PersistencyReport(False, 0, required, 0.0, s)
    keep = s > rcond * s[0]
    rank = int(np.count_nonzero(keep))
    return PersistencyReport(rank == required, rank, required, float(s[keep][-1]), s)


def partition(data: Union[IoTrajectory, Sequence[IoTrajectory]],
              params: DdpcHyperparams) -> PartitionedHankel:
    """Mosaic Hankel matrices of one or more trajectories, split past/future.

    Each trajectory contributes its own ``T_i - L + 1`` windows; windows never
    straddle two recordings. Columns keep the order of ``data``.
    """
    trajs = [data] if isinstance(data, IoTrajectory) else list(data)
    if not trajs:
        raise SignalTooShort("no trajectories given")
    kappa, nu = trajs[0].kappa, trajs[0].nu
    L = params.L
    hu, hy = [], []
    for i, tr in enumerate(trajs):
        if (tr.kappa, tr.nu) != (kappa, nu):
            raise DimensionMismatch(
                f"trajectory {i} has dims (kappa={tr.kappa}, nu={tr.nu}), "
                f"expected ({kappa}, {nu})")
        if tr.T <= L:
            raise SignalTooShort(f"trajectory {i} has T={tr.T}, need more than L={L}")
        hu.append(build_hankel(tr.inputs, L))
        hy.append(build_hankel(tr.outputs, L))
    Hu = np.hstack(hu)
    Hy = np.hstack(hy)
    ku, ky = kappa * params.T_ini, nu * params.T_ini
    return PartitionedHankel(Hu[:ku], Hu[ku:], Hy[:ky], Hy[ky:],
                             kappa, nu, params.T_ini, params.N)


def fit_transition_matrix(blocks: PartitionedHankel, rcond: float = PINV_RCOND,
                          ridge: float = 0.0) -> TransitionMatrix:
    """Fit ``G = Y_f pinv([U_p; Y_p; U_f])`` by truncated SVD.

    Args:
        blocks: Partitioned Hankel data.
        rcond: Singular values below ``rcond * sigma_max`` are discarded.
        ridge: Optional Tikhonov weight on the implicit column combination;
            zero reproduces the plain minimum-norm least-squares solution.

    Raises:
        DegenerateData: If the regressor is zero or every singular value is cut.
    """
    W = blocks.regressor
    Yf = blocks.y_future
    if blocks.M < 1:
        raise DegenerateData("no Hankel columns")
    U, s, Vt = np.linalg.svd(W, full_matrices=False)
    if s.size == 0 or not s[0] > 0.0:
        raise DegenerateData("regressor [U_p; Y_p; U_f] is identically zero")
    keep = s > rcond * s[0]
    if not keep.any():
        raise DegenerateData("all singular values fall below the cutoff")
    Uk, sk, Vk = U[:, keep], s[keep], Vt[keep]
    if ridge > 0.0:
        inv = sk / (sk ** 2 + ridge)
    else:
        inv = 1.0 / sk
    G = ((Yf @ Vk.T) * inv) @ Uk.T
    full_rank = keep.all() and s.size == W.shape[0]
    cond = float(s[0] / s[-1]) if full_rank and s[-1] > 0 else np.inf
    residual = float(np.linalg.norm(G @ W - Yf))
    return TransitionMatrix(G, blocks.kappa, blocks.nu, blocks.T_ini, blocks.N,
                            fit_residual=residual, condition_estimate=cond,
                            target_norm=float(np.linalg.norm(Yf)))


def predict(g: TransitionMatrix, mu_ini, eta_ini, mu_future) -> np.ndarray:
    """Stacked future outputs ``G @ col(mu_ini, eta_ini, mu_future)``.

    Inputs may be flat stacked vectors or ``(samples, channels)`` arrays.
    """
    kappa, nu, T_ini, N = g.dims
    parts = []
    for name, vec, n in (("mu_ini", mu_ini, kappa * T_ini),
                         ("eta_ini", eta_ini, nu * T_ini),
                         ("mu_future", mu_future, kappa * N)):
        v = np.ravel(np.asarray(vec, dtype=float))
        if v.size != n:
            raise DimensionMismatch(f"{name} has {v.size} entries, expected {n}")
        parts.append(v)
    return g.g @ np.concatenate(parts)


def windows(traj: IoTrajectory, T_ini: int, N: int):
    """All length-``T_ini + N`` windows of ``traj`` as stacked vectors.

    Returns:
        Tuple ``(mu_ini, eta_ini, mu_future, eta_future)`` of 2-D arrays with
        one window per row.
    """
    L = T_ini + N
    Hu = build_hankel(traj.inputs, L).T
    Hy = build_hankel(traj.outputs, L).T
    ku, ky = traj.kappa * T_ini, traj.nu * T_ini
    return Hu[:, :ku], Hy[:, :ky], Hu[:, ku:], Hy[:, ky:]


def prediction_mse(g: TransitionMatrix, held_out: Union[IoTrajectory, Sequence[IoTrajectory]]) -> float:
    """Mean squared error of ``G`` predicting every window of held-out data."""
    trajs = [held_out] if isinstance(held_out, IoTrajectory) else list(held_out)
    errs = []
    for tr in trajs:
        mu_i, eta_i, mu_f, eta_f = windows(tr, g.T_ini, g.N)
        pred = np.hstack([mu_i, eta_i, mu_f]) @ g.g.T
        errs.append((pred - eta_f).ravel())
    e = np.concatenate(errs)
    return float(np.mean(e ** 2))
