"""JSON scenario files describing one campaign."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..behavioral import DdpcHyperparams
from ..errors import ConfigError
from ..plants.walker import COM_OFFSET_RANGE, PerturbationSchedule, WalkerParams
from ..reference import DEFAULT_GAIT_FILE, GaitLibrary, design_lip_gait

CONTROLLERS = ("nominal", "ddpc", "lip_mpc")
PLANTS = ("walker", "lti")

DESK_MODELS, FULL_MODELS = 20, 50
DESK_SPEEDS = (0.14, 0.165, 0.19)
FULL_SPEEDS = (0.14, 0.15, 0.16, 0.17, 0.18, 0.19)


def _floats(v, name) -> tuple:
    try:
        out = tuple(float(x) for x in np.atleast_1d(v))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected numbers, got {v!r}") from exc
    return out


@dataclass(frozen=True)
class PlantConfig:
    """Which plant to run and how many randomized models to draw."""

    kind: str = "walker"
    models: int = DESK_MODELS
    offset_range: tuple = COM_OFFSET_RANGE
    height_range: tuple = (0.95, 1.05)
    reach: Optional[float] = None
    # LTI oracle plants
    order: int = 3
    inputs: int = 2
    outputs: int = 2

    def __post_init__(self):
        if self.kind not in PLANTS:
            raise ConfigError(f"unknown plant {self.kind!r}; expected one of {PLANTS}")
        if self.models < 1:
            raise ConfigError("plant.models must be at least 1")

    def walker_params(self) -> WalkerParams:
        p = WalkerParams()
        return p if self.reach is None else replace(p, reach=float(self.reach))


@dataclass(frozen=True)
class CollectionConfig:
    """Data recorded with the dithered nominal controller before fitting ``G``."""

    step_lengths: tuple = (0.10, 0.11, 0.12, 0.13, 0.14, 0.15)
    amplitude: float = 0.02
    held_out_step: float = 0.125


@dataclass(frozen=True)
class OnlineConfig:
    enabled: bool = False
    T: int = 250
    period: float = 1.5
    warmup: float = 5.0
    dither: float = 0.01


@dataclass(frozen=True)
class GridConfig:
    """Hyperparameter grid.

    The defaults are a desk-sized subset of the full search space
    (``delta_t`` in [0.01, 0.03], ``T`` in [50, 600], ``T_ini`` in [5, 50],
    ``N`` in [10, 300]).
    """

    delta_t: tuple = (0.01, 0.02, 0.03)
    T: tuple = (200, 400, 600)
    T_ini: tuple = (5, 10, 20)
    N: tuple = (10, 20, 50)


@dataclass(frozen=True)
class Scenario:
    """One campaign: plant, controllers, sweep axes and output location.

    Every source of randomness is derived from ``seed``; model ``i`` uses
    ``seed + i``.
    """

    name: str = "desk"
    plant: PlantConfig = field(default_factory=PlantConfig)
    controllers: tuple = CONTROLLERS
    speeds: tuple = DESK_SPEEDS
    step_duration: float = 1.0
    max_time: float = 11.0
    hyper: DdpcHyperparams = DdpcHyperparams(400, 10, 20, 0.02)
    q: float = 10.0
    r: float = 0.1
    tracker_gain: float = 3.0
    collection: CollectionConfig = field(default_factory=CollectionConfig)
    online: OnlineConfig = field(default_factory=OnlineConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    perturbation: Optional[PerturbationSchedule] = None
    gait_file: Optional[str] = None
    output_dir: str = "runs"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        bad = [c for c in self.controllers if c not in CONTROLLERS]
        if bad:
            raise ConfigError(f"unknown controllers {bad}; expected a subset of {CONTROLLERS}")
        if not self.speeds:
            raise ConfigError("at least one speed is required")
        if not self.step_duration > 0 or not self.max_time > 0:
            raise ConfigError("step_duration and max_time must be positive")
        if self.gait_file is not None and not Path(self.gait_file).is_file():
            raise ConfigError(f"gait file {self.gait_file} does not exist")

    def step_length(self, speed: float) -> float:
        return float(speed) * self.step_duration

    def gait(self) -> GaitLibrary:
        if self.gait_file is not None:
            try:
                return GaitLibrary.load(self.gait_file)
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ConfigError(f"gait file {self.gait_file} does not parse: {exc}") from exc
        if self.step_duration == 1.0:
            return GaitLibrary.load(DEFAULT_GAIT_FILE)
        return design_lip_gait(step_duration=self.step_duration)

    def model_seeds(self) -> List[int]:
        return [self.seed + i for i in range(self.plant.models)]

    def full_scale(self) -> "Scenario":
        """The full sweep: 50 models and six speed points."""
        return replace(self, plant=replace(self.plant, models=FULL_MODELS), speeds=FULL_SPEEDS)

    def output_path(self) -> Path:
        return Path(self.output_dir) / self.name

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hyper"] = asdict(self.hyper)
        d["perturbation"] = None if self.perturbation is None else asdict(self.perturbation)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        try:
            if "plant" in d:
                p = dict(d["plant"])
                for k in ("offset_range", "height_range"):
                    if k in p:
                        p[k] = _floats(p[k], f"plant.{k}")
                d["plant"] = PlantConfig(**p)
            if "collection" in d:
                c = dict(d["collection"])
                if "step_lengths" in c:
                    c["step_lengths"] = _floats(c["step_lengths"], "collection.step_lengths")
                d["collection"] = CollectionConfig(**c)
            if "online" in d:
                d["online"] = OnlineConfig(**d["online"])
            if "grid" in d:
                g = {k: tuple(v) for k, v in d["grid"].items()}
                d["grid"] = GridConfig(**g)
            if "hyper" in d:
                d["hyper"] = DdpcHyperparams(**d["hyper"])
            if d.get("perturbation") is not None:
                pt = dict(d["perturbation"])
                if "direction" in pt:
                    pt["direction"] = _floats(pt["direction"], "perturbation.direction")
                d["perturbation"] = PerturbationSchedule(**pt)
            for k in ("speeds",):
                if k in d:
                    d[k] = _floats(d[k], k)
            if "controllers" in d:
                d["controllers"] = tuple(d["controllers"])
        except TypeError as exc:
            raise ConfigError(f"malformed scenario: {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid scenario value: {exc}") from exc
        return cls(**d)


def load_scenario(path) -> Scenario:
    """Parse a scenario JSON file.

    Raises:
        ConfigError: If the file is missing, is not JSON, or holds
            unknown or invalid fields.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"scenario file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"scenario file {path} must hold a JSON object")
    return Scenario.from_dict(raw)


def save_scenario(path, scenario: Scenario) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(scenario.to_dict(), indent=2))
    return path
