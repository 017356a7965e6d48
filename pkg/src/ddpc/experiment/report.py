"""Tidy long-format summaries of finished runs."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import List

import numpy as np

from ..errors import MissingRuns
from .metrics import MetricsReport

COLUMNS = ("scenario", "controller", "seed", "speed", "metric", "value")


def load_reports(out_dir) -> List[MetricsReport]:
    """Every run JSON below ``<out_dir>/runs`` (or ``out_dir`` itself), sorted by file name."""
    root = Path(out_dir)
    folder = root / "runs" if (root / "runs").is_dir() else root
    files = sorted(folder.glob("*.json")) if folder.is_dir() else []
    reports = []
    for f in files:
        try:
            reports.append(MetricsReport.from_dict(json.loads(f.read_text())))
        except (TypeError, KeyError, json.JSONDecodeError):
            continue  # not a run file
    if not reports:
        raise MissingRuns(f"no run outputs found in {root}")
    return reports


def tidy_rows(reports) -> List[dict]:
    """One row per (run, metric)."""
    rows = []
    for r in reports:
        for name, value in r.metrics().items():
            rows.append({"scenario": r.scenario, "controller": r.controller, "seed": r.seed,
                         "speed": r.speed, "metric": name, "value": value})
    return rows


def report(out_dir, dest=None) -> Path:
    """Write ``report.csv`` (long format) and ``report.json`` (per-group stats).

    Raises:
        MissingRuns: If ``out_dir`` holds no run outputs.
    """
    reports = load_reports(out_dir)
    rows = tidy_rows(reports)
    dest = Path(dest) if dest is not None else Path(out_dir)
    dest.mkdir(parents=True, exist_ok=True)
    path = dest / "report.csv"
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    groups = {}
    for row in rows:
        key = f"{row['controller']}|{row['speed']:.3f}|{row['metric']}"
        groups.setdefault(key, []).append(row["value"])
    stats = {}
    for key, vals in sorted(groups.items()):
        v = np.asarray(vals, dtype=float)
        v = v[np.isfinite(v)]
        stats[key] = {"n": int(v.size),
                      "mean": float(v.mean()) if v.size else None,
                      "std": float(v.std()) if v.size else None}
    (dest / "report.json").write_text(json.dumps(stats, indent=1))
    return path
