"""File formats: trajectory CSV + JSON sidecar, transition-matrix dumps."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .behavioral import IoTrajectory, TransitionMatrix
from .errors import DimensionMismatch


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_trajectory(path, traj: IoTrajectory, scenario: str = "", extra: Optional[dict] = None,
                     t0: float = 0.0) -> Path:
    """Write ``traj`` as CSV (``t, mu_*, eta_*``) plus a JSON metadata sidecar.

    Floats are written with ``repr`` so a round trip is exact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = (["t"] + [f"mu_{i}" for i in range(traj.kappa)]
              + [f"eta_{i}" for i in range(traj.nu)])
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(traj.T):
            t = t0 + k * traj.sample_interval
            row = [t, *traj.inputs[k], *traj.outputs[k]]
            writer.writerow([repr(float(v)) for v in row])
    meta = {"kappa": traj.kappa, "nu": traj.nu, "dt": traj.sample_interval,
            "samples": traj.T, "scenario": scenario}
    if extra:
        meta.update(extra)
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def read_metadata(path) -> dict:
    return json.loads(_sidecar(Path(path)).read_text())


def read_trajectory(path) -> IoTrajectory:
    """Load a trajectory written by :func:`write_trajectory`."""
    path = Path(path)
    meta = read_metadata(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in r] for r in reader], dtype=float)
    kappa, nu = int(meta["kappa"]), int(meta["nu"])
    if len(header) != 1 + kappa + nu:
        raise DimensionMismatch(
            f"{path}: header has {len(header)} columns, metadata implies {1 + kappa + nu}")
    rows = rows.reshape(-1, 1 + kappa + nu)
    return IoTrajectory(rows[:, 1:1 + kappa], rows[:, 1 + kappa:], float(meta["dt"]))


def transition_to_dict(g: TransitionMatrix) -> dict:
    return {
        "dims": {"kappa": g.kappa, "nu": g.nu, "T_ini": g.T_ini, "N": g.N},
        "shape": list(g.g.shape),
        "fit_residual": g.fit_residual,
        "condition_estimate": None if not np.isfinite(g.condition_estimate) else g.condition_estimate,
        "target_norm": g.target_norm,
        "g": g.g.tolist(),
    }


def transition_from_dict(d: dict) -> TransitionMatrix:
    dims = d["dims"]
    cond = d.get("condition_estimate")
    return TransitionMatrix(np.asarray(d["g"], dtype=float), int(dims["kappa"]), int(dims["nu"]),
                            int(dims["T_ini"]), int(dims["N"]),
                            fit_residual=float(d.get("fit_residual", 0.0)),
                            condition_estimate=np.inf if cond is None else float(cond),
                            target_norm=float(d.get("target_norm", 0.0)))


def save_transition(path, g: TransitionMatrix) -> Path:
    """Dump ``G`` as JSON (``.json``) or NumPy archive (``.npz``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".npz":
        np.savez(path, g=g.g, dims=np.array(g.dims),
                 stats=np.array([g.fit_residual, g.condition_estimate, g.target_norm]))
    else:
        path.write_text(json.dumps(transition_to_dict(g)))
    return path


def load_transition(path) -> TransitionMatrix:
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as z:
            kappa, nu, T_ini, N = (int(v) for v in z["dims"])
            res, cond, norm = (float(v) for v in z["stats"])
            return TransitionMatrix(z["g"], kappa, nu, T_ini, N, res, cond, norm)
    return transition_from_dict(json.loads(path.read_text()))
