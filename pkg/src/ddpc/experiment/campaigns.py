"""Campaigns: data collection, grid search, fitting and closed-loop sweeps."""
from __future__ import annotations

import csv
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..behavioral import (DdpcHyperparams, IoTrajectory, TransitionMatrix, fit_transition_matrix,
                          partition, prediction_mse)
from ..errors import DdpcError, SignalTooShort
from ..io import read_trajectory, save_transition, write_trajectory
from ..planner import LipMpcConfig, OnlineUpdater, PlannerConfig, UpdateSchedule
from ..plants import LipWalker, random_stable_system, randomize_model
from .controllers import DdpcController, LipMpcController, NominalController
from .metrics import MetricsReport, cumulative_tracking_error
from .scenario import Scenario
from .simulate import collect_trajectory, run_closed_loop

log = logging.getLogger(__name__)

PERTURBATION_SPEED = 0.13

# seeds of the different random streams derived from one model seed
_DATA_STRIDE = 1000
_HELD_OUT = 999


def model_params(scenario: Scenario, seed: int):
    plant = scenario.plant
    return randomize_model(seed, plant.walker_params(), plant.offset_range, plant.height_range)


def _lti_system(scenario: Scenario, seed: int):
    plant = scenario.plant
    return random_stable_system(np.random.default_rng(seed), plant.order, plant.inputs, plant.outputs)


def _lti_record(sys, samples: int, seed: int) -> IoTrajectory:
    u = np.random.default_rng(seed).standard_normal((samples, sys.kappa))
    return sys.trajectory(u)


def model_data(scenario: Scenario, seed: int, delta_t: Optional[float] = None,
               samples: Optional[int] = None) -> Tuple[List[IoTrajectory], IoTrajectory]:
    """Training trajectories (one per collection step length) and a held-out one.

    Walker data comes from the dithered nominal controller on the randomized
    model ``seed``; LTI data from white-noise inputs on a random stable system.
    A fall truncates the trajectory and is logged.
    """
    dt = scenario.hyper.delta_t if delta_t is None else delta_t
    T = scenario.hyper.T if samples is None else samples
    col = scenario.collection
    if scenario.plant.kind == "lti":
        sys = _lti_system(scenario, seed)
        train = [_lti_record(sys, T, seed * _DATA_STRIDE + i) for i in range(len(col.step_lengths))]
        return train, _lti_record(sys, T, seed * _DATA_STRIDE + _HELD_OUT)
    params = model_params(scenario, seed)
    gait = scenario.gait()
    out = []
    for i, lam in enumerate(list(col.step_lengths) + [col.held_out_step]):
        s = seed * _DATA_STRIDE + (i if i < len(col.step_lengths) else _HELD_OUT)
        traj, walker = collect_trajectory(params, gait, lam, T, dt, seed=s, amplitude=col.amplitude)
        if walker.fallen:
            log.warning("model %d fell at %.2f s while collecting step %.3f", seed,
                        walker.fall_time, lam)
        out.append(traj)
    return out[:-1], out[-1]


def collect(scenario: Scenario, out_dir=None) -> List[Path]:
    """Record the collection grid for every model and write CSV + JSON sidecars.

    Files land in ``<out>/data/model_<seed>/``; a trajectory cut short by a
    fall keeps its samples and carries ``"fallen": true`` in its metadata.
    """
    root = Path(out_dir) if out_dir is not None else scenario.output_path()
    paths = []
    dt, T = scenario.hyper.delta_t, scenario.hyper.T
    col = scenario.collection
    for seed in scenario.model_seeds():
        folder = root / "data" / f"model_{seed}"
        if scenario.plant.kind == "lti":
            train, held = model_data(scenario, seed)
            named = [(f"lti_{i}", tr, {}) for i, tr in enumerate(train)] + [("held_out", held, {})]
        else:
            params = model_params(scenario, seed)
            gait = scenario.gait()
            named = []
            lams = list(col.step_lengths) + [col.held_out_step]
            for i, lam in enumerate(lams):
                held_out = i == len(lams) - 1
                s = seed * _DATA_STRIDE + (_HELD_OUT if held_out else i)
                traj, walker = collect_trajectory(params, gait, lam, T, dt, seed=s,
                                                  amplitude=col.amplitude)
                meta = {"step_length": lam, "fallen": walker.fallen,
                        "fall_time": walker.fall_time, "events": walker.events}
                name = "held_out" if held_out else f"step_{lam:.3f}"
                if traj is None:
                    log.warning("model %d recorded nothing at step %.3f", seed, lam)
                    continue
                named.append((name, traj, meta))
        for name, traj, meta in named:
            meta = dict(meta, model_seed=seed, held_out=name == "held_out")
            paths.append(write_trajectory(folder / f"{name}.csv", traj, scenario.name, meta))
    return paths


def load_model_data(folder) -> Tuple[List[IoTrajectory], Optional[IoTrajectory]]:
    folder = Path(folder)
    train, held = [], None
    for p in sorted(folder.glob("*.csv")):
        traj = read_trajectory(p)
        if p.stem == "held_out":
            held = traj
        else:
            train.append(traj)
    if not train:
        raise SignalTooShort(f"no training trajectories in {folder}")
    return train, held


def grid_search(data: Dict[float, Tuple[Sequence[IoTrajectory], IoTrajectory]],
                grid) -> List[dict]:
    """Score every ``(delta_t, T, T_ini, N)`` combination by held-out MSE.

    Args:
        data: Map from sample interval to ``(training trajectories, held-out
            trajectory)`` recorded at that interval. Training records are
            truncated to the first ``T`` samples of each combination.
        grid: Object with ``delta_t``, ``T``, ``T_ini`` and ``N`` sequences.

    Returns:
        Rows sorted by ascending ``mse``; combinations that cannot be fitted
        (``T <= L`` or no data at that interval) are kept at the end with
        ``mse = inf`` and a ``note``.
    """
    rows = []
    for dt, T, T_ini, N in itertools.product(grid.delta_t, grid.T, grid.T_ini, grid.N):
        row = {"delta_t": float(dt), "T": int(T), "T_ini": int(T_ini), "N": int(N),
               "mse": float("inf"), "note": ""}
        L = T_ini + N
        if dt not in data:
            row["note"] = "no data at this interval"
        elif T <= L:
            row["note"] = f"skipped: T={T} <= L={L}"
        else:
            train, held = data[dt]
            short = [tr for tr in train if tr.T < T]
            if short or held is None or held.T < L:
                row["note"] = "skipped: recordings shorter than T or L"
            else:
                hyper = DdpcHyperparams(int(T), int(T_ini), int(N), float(dt))
                try:
                    head = [IoTrajectory(tr.inputs[:T], tr.outputs[:T], tr.sample_interval)
                            for tr in train]
                    g = fit_transition_matrix(partition(head, hyper))
                    row["mse"] = prediction_mse(g, held)
                except DdpcError as exc:
                    row["note"] = f"skipped: {exc}"
        rows.append(row)
    rows.sort(key=lambda r: (r["mse"], r["delta_t"], r["T"], r["T_ini"], r["N"]))
    return rows


def grid_search_scenario(scenario: Scenario, seed: Optional[int] = None) -> List[dict]:
    """Record data at every grid interval for one model and run :func:`grid_search`."""
    seed = scenario.seed if seed is None else seed
    g = scenario.grid
    longest = max(g.T) if g.T else 0
    data = {}
    for dt in g.delta_t:
        need = max(longest, min(g.T_ini) + min(g.N) + 1 if g.T_ini and g.N else 0)
        data[float(dt)] = model_data(scenario, seed, float(dt), need)
    return grid_search(data, g)


def write_table(path, rows: List[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return path
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return path


def fit(scenario: Scenario, seed: Optional[int] = None,
        data: Optional[Sequence[IoTrajectory]] = None) -> TransitionMatrix:
    """Fit ``G`` for model ``seed`` on freshly collected (or given) data."""
    seed = scenario.seed if seed is None else seed
    if data is None:
        data, _ = model_data(scenario, seed)
    return fit_transition_matrix(partition(list(data), scenario.hyper))


def planner_config(scenario: Scenario) -> PlannerConfig:
    p = scenario.plant.walker_params()
    return PlannerConfig.for_walker(scenario.hyper, p.com_height, p.foot_half_length,
                                    p.foot_half_width, q=scenario.q, r=scenario.r)


def lip_config(scenario: Scenario) -> LipMpcConfig:
    return LipMpcConfig.from_planner(planner_config(scenario))


def _controller(scenario: Scenario, kind: str, step_length: float, seed: int,
                g: Optional[TransitionMatrix], online: bool):
    gait = scenario.gait()
    nominal = scenario.plant.walker_params()
    omega = nominal.omega_nominal
    gain = scenario.tracker_gain
    if kind == "nominal":
        return NominalController(gait, step_length, omega, gain=gain)
    if kind == "lip_mpc":
        return LipMpcController(gait, step_length, omega, lip_config(scenario), gain=gain)
    if online:
        on = scenario.online
        hyper = replace(scenario.hyper, T=on.T)
        updater = OnlineUpdater(UpdateSchedule(hyper, on.period, on.warmup))
        cfg = replace(planner_config(scenario), hyper=hyper)
        return DdpcController(gait, step_length, omega, cfg, g, updater,
                              tick=nominal.control_dt, dither=on.dither, dither_online=True,
                              seed=seed, gain=gain)
    return DdpcController(gait, step_length, omega, planner_config(scenario), g,
                          tick=nominal.control_dt, gain=gain)


def run_single(scenario: Scenario, kind: str, seed: int, speed: float,
               g: Optional[TransitionMatrix] = None, online: bool = False,
               perturbation=None) -> MetricsReport:
    """One closed-loop run of controller ``kind`` on model ``seed``.

    The controller only sees measurements; the randomized parameters stay
    inside the plant.
    """
    lam = scenario.step_length(speed)
    params = replace(model_params(scenario, seed), step_duration=scenario.step_duration)
    walker = LipWalker.on_orbit(params, lam, perturbation=perturbation, seed=seed)
    ctl = _controller(scenario, kind, lam, seed, g, online)
    ref = NominalController(scenario.gait(), lam, params.omega_nominal) if kind != "nominal" else None
    run = run_closed_loop(walker, ctl, scenario.max_time, reference=ref)
    e = cumulative_tracking_error(run.times, run.eta, run.r_eta)
    events = ctl.updater.events if getattr(ctl, "updater", None) is not None else []
    success = not walker.fallen and ctl.infeasible == 0
    return MetricsReport(
        scenario.name, kind, seed, float(speed), e, run.survival_time, success, scenario.max_time,
        [r.desired for r in walker.steps], [r.achieved for r in walker.steps],
        ctl.infeasible, ctl.solver_failures,
        sum(1 for ev in events if ev.get("ok")), [ev["fit_seconds"] for ev in events])


def _job(args):
    scenario, kind, seed, speed, g, online, pert = args
    try:
        return run_single(scenario, kind, seed, speed, g, online, pert)
    except DdpcError as exc:
        # a crashed run counts as an immediate failure; the sweep goes on
        log.error("run %s seed %d speed %.3f failed: %s", kind, seed, speed, exc)
        return MetricsReport(scenario.name, kind, seed, float(speed), 0.0, 0.0, False,
                             scenario.max_time)


def _run_jobs(jobs, workers: int) -> List[MetricsReport]:
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_job, jobs))
    return [_job(j) for j in jobs]


def run_comparison(scenario: Scenario, out_dir=None) -> List[MetricsReport]:
    """Every controller on every model and speed; writes runs and a summary.

    DDPC uses a transition matrix fitted per model on that model's collected
    data, so it never sees the plant parameters directly.
    """
    jobs = []
    for seed in scenario.model_seeds():
        g = fit(scenario, seed) if "ddpc" in scenario.controllers else None
        for speed in scenario.speeds:
            for kind in scenario.controllers:
                jobs.append((scenario, kind, seed, speed, g if kind == "ddpc" else None,
                             False, scenario.perturbation))
    reports = _run_jobs(jobs, scenario.workers)
    if out_dir is not False:
        write_reports(Path(out_dir) if out_dir is not None else scenario.output_path(), reports)
    return reports


def run_perturbation(scenario: Scenario, out_dir=None,
                     speed: float = PERTURBATION_SPEED) -> List[MetricsReport]:
    """Nominal vs online-updated DDPC under the force ramp.

    With online updates on, DDPC walks on the dithered nominal tracker for
    the warm-up window, then rebuilds ``G`` on the trailing ``online.T``
    samples every ``online.period`` seconds.
    """
    from ..plants import PerturbationSchedule

    pert = scenario.perturbation or PerturbationSchedule()
    online = scenario.online.enabled
    jobs = []
    for seed in scenario.model_seeds():
        for kind in scenario.controllers:
            g = None
            if kind == "ddpc" and not online:
                g = fit(scenario, seed)
            jobs.append((scenario, kind, seed, speed, g, online and kind == "ddpc", pert))
    reports = _run_jobs(jobs, scenario.workers)
    if out_dir is not False:
        write_reports(Path(out_dir) if out_dir is not None else scenario.output_path(), reports)
    return reports


def success_rates(reports: Sequence[MetricsReport]) -> Dict[str, float]:
    out: Dict[str, List[bool]] = {}
    for r in reports:
        out.setdefault(r.controller, []).append(r.success)
    return {k: float(np.mean(v)) for k, v in out.items()}


def summarize(reports: Sequence[MetricsReport]) -> List[dict]:
    """Mean and standard deviation per (controller, speed) over models."""
    groups: Dict[tuple, List[MetricsReport]] = {}
    for r in reports:
        groups.setdefault((r.controller, r.speed), []).append(r)
    rows = []
    for (kind, speed), rs in sorted(groups.items()):
        row = {"controller": kind, "speed": speed, "models": len(rs)}
        for name in ("mean_step_length", "mean_step_error", "survival_time", "tracking_error",
                     "success"):
            vals = np.array([r.metrics()[name] for r in rs], dtype=float)
            vals = vals[np.isfinite(vals)]
            row[f"{name}_mean"] = float(vals.mean()) if vals.size else float("nan")
            row[f"{name}_std"] = float(vals.std()) if vals.size else float("nan")
        rows.append(row)
    return rows


def run_filename(r: MetricsReport) -> str:
    return f"{r.controller}_seed{r.seed}_speed{r.speed:.3f}.json"


def write_reports(root: Path, reports: Sequence[MetricsReport]) -> Path:
    runs = root / "runs"
    runs.mkdir(parents=True, exist_ok=True)
    for r in reports:
        (runs / run_filename(r)).write_text(json.dumps(r.to_dict(), indent=1))
    write_table(root / "summary.csv", summarize(reports))
    return root


def save_fit(path, g: TransitionMatrix) -> Path:
    return save_transition(path, g)
