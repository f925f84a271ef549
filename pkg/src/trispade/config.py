"""Experiment configuration: YAML parsing, defaults, validation, round-tripping.

A config is a single human-editable YAML document.  Every field has a
default (the minimal config is `scenario: {name: ...}`), unknown keys are
rejected with their dotted path, and the resolved config serializes back
to an equivalent document (parse -> serialize -> parse is the identity).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import yaml

from . import scene
from .channels import PixelGrid, Scenario, default_grid
from .errors import ConfigError
from .optics import AIRY, GAUSSIAN, Psf

NAMED_SCENARIOS = ("square-to-corners", "square-to-fragments", "two-point-collapse", "custom")

# Fig. 3D-style gamma ladder: 0.125 to 1 in factors of 2**(1/4)
GAMMA_LADDER = tuple(round(0.125 * 2 ** (k / 4), 12) for k in range(13))

_DEFAULT_FRAGMENT_CENTERS = ((0.3, 0.3), (0.3, -0.3), (-0.3, 0.3), (-0.3, -0.3))


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "square-to-corners"
    pre: dict | None = None            # object spec, custom scenarios only
    post: dict | None = None
    gamma: float = 0.25
    photons_per_step: float = 500.0
    psf: str = GAUSSIAN
    raster_resolution: int = 128
    fragment_side: float = 0.25
    fragment_centers: tuple = _DEFAULT_FRAGMENT_CENTERS


@dataclass(frozen=True)
class GridConfig:
    pitch: float | None = None         # None -> per-PSF default
    half_extent: float | None = None
    subsample: int = 2


@dataclass(frozen=True)
class DetectorConfig:
    h: float | None = None             # None -> ln(window / pfa)
    pfa: float = 0.001
    window: int = 25
    change_time: float = 25
    n_trials: int = 2000
    max_steps: int = 20000
    fa_trials: int = 100
    fa_max_steps: int | None = None    # None -> 50 * e^h, capped
    master_seed: int = 20260810


@dataclass(frozen=True)
class QreConfig:
    n_max: int = 8


@dataclass(frozen=True)
class EntropySweepConfig:
    gamma_grid: tuple = (0.05, 0.07, 0.1, 0.14, 0.2)
    slope_window: tuple = (0.05, 0.2)


@dataclass(frozen=True)
class ThresholdSweepConfig:
    h_grid: tuple = (8.0, 9.0, 10.0, 11.0, 12.0)


@dataclass(frozen=True)
class LatencyEnsembleConfig:
    gamma_grid: tuple = GAMMA_LADDER
    n_trials_direct: int = 200


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    formats: tuple = ("csv", "svg", "json")
    dump_channels: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    receivers: tuple = ("trispade", "direct")
    grid: GridConfig = field(default_factory=GridConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    qre: QreConfig = field(default_factory=QreConfig)
    entropy_sweep: EntropySweepConfig = field(default_factory=EntropySweepConfig)
    threshold_sweep: ThresholdSweepConfig = field(default_factory=ThresholdSweepConfig)
    latency_ensemble: LatencyEnsembleConfig = field(default_factory=LatencyEnsembleConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    workers: int | None = None

    @property
    def threshold(self) -> float:
        det = self.detector
        if det.h is not None:
            return det.h
        return math.log(det.window / det.pfa)


_SECTION_TYPES = {
    "scenario": ScenarioConfig,
    "grid": GridConfig,
    "detector": DetectorConfig,
    "qre": QreConfig,
    "entropy_sweep": EntropySweepConfig,
    "threshold_sweep": ThresholdSweepConfig,
    "latency_ensemble": LatencyEnsembleConfig,
    "output": OutputConfig,
}


def _freeze(value):
    """Lists from YAML become tuples so configs hash/compare structurally."""
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _build_section(cls, data: dict, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping, got {type(data).__name__}", path)
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}", path)
    kwargs = {k: _freeze(v) for k, v in data.items()}
    return cls(**kwargs)


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    sc = cfg.scenario
    if sc.name not in NAMED_SCENARIOS:
        raise ConfigError(f"must be one of {NAMED_SCENARIOS}", "scenario.name")
    if sc.name == "custom" and (sc.pre is None or sc.post is None):
        raise ConfigError("custom scenario needs pre and post object specs", "scenario.pre")
    if not sc.gamma > 0:
        raise ConfigError("gamma must be positive", "scenario.gamma")
    if not sc.photons_per_step > 0:
        raise ConfigError("photons_per_step must be positive", "scenario.photons_per_step")
    if sc.psf not in (GAUSSIAN, AIRY):
        raise ConfigError(f"must be {GAUSSIAN!r} or {AIRY!r}", "scenario.psf")
    if sc.raster_resolution < 1:
        raise ConfigError("raster_resolution must be >= 1", "scenario.raster_resolution")
    for r in cfg.receivers:
        if r not in ("trispade", "direct"):
            raise ConfigError(f"unknown receiver {r!r}", "receivers")
    if not cfg.receivers:
        raise ConfigError("at least one receiver required", "receivers")
    det = cfg.detector
    if det.h is not None and det.h <= 0:
        raise ConfigError("threshold must be positive", "detector.h")
    if not 0 < det.pfa < 1:
        raise ConfigError("pfa must lie in (0, 1)", "detector.pfa")
    if det.window < 1:
        raise ConfigError("window must be >= 1", "detector.window")
    if det.change_time < 0:
        raise ConfigError("change_time cannot be negative", "detector.change_time")
    if det.n_trials < 1:
        raise ConfigError("n_trials must be >= 1", "detector.n_trials")
    if det.max_steps < 1:
        raise ConfigError("max_steps must be >= 1", "detector.max_steps")
    if det.fa_trials < 0:
        raise ConfigError("fa_trials cannot be negative", "detector.fa_trials")
    if cfg.qre.n_max < 2:
        raise ConfigError("n_max must be >= 2", "qre.n_max")
    for name, grid in (("entropy_sweep.gamma_grid", cfg.entropy_sweep.gamma_grid),
                       ("threshold_sweep.h_grid", cfg.threshold_sweep.h_grid),
                       ("latency_ensemble.gamma_grid", cfg.latency_ensemble.gamma_grid)):
        if not grid:
            raise ConfigError("grid must be nonempty", name)
        if any(not v > 0 for v in grid):
            raise ConfigError("grid values must be positive", name)
    lo, hi = cfg.entropy_sweep.slope_window
    if not 0 < lo < hi:
        raise ConfigError("slope_window must be (lo, hi) with 0 < lo < hi",
                          "entropy_sweep.slope_window")
    if cfg.latency_ensemble.n_trials_direct < 1:
        raise ConfigError("n_trials_direct must be >= 1", "latency_ensemble.n_trials_direct")
    for fmt in cfg.output.formats:
        if fmt not in ("csv", "svg", "json"):
            raise ConfigError(f"unknown output format {fmt!r}", "output.formats")
    if cfg.workers is not None and cfg.workers < 1:
        raise ConfigError("workers must be >= 1", "workers")
    return cfg


def from_dict(data: dict) -> ExperimentConfig:
    """Validated config from a plain mapping, defaults applied."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    unknown = set(data) - set(_SECTION_TYPES) - {"receivers", "workers"}
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}")
    kwargs = {}
    for name, cls in _SECTION_TYPES.items():
        if name in data:
            kwargs[name] = _build_section(cls, data[name], name)
    if "receivers" in data:
        recv = data["receivers"]
        if not isinstance(recv, (list, tuple)):
            raise ConfigError("expected a list", "receivers")
        kwargs["receivers"] = tuple(recv)
    if "workers" in data:
        kwargs["workers"] = data["workers"]
    return _validate(ExperimentConfig(**kwargs))


def parse_config(text: str) -> ExperimentConfig:
    """Parse a YAML config document; syntax errors keep their line info."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return from_dict(data)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def to_dict(cfg: ExperimentConfig) -> dict:
    """Resolved config as plain JSON/YAML-serializable data."""
    raw = asdict(cfg)
    return {k: ({kk: _plain(vv) for kk, vv in v.items()} if isinstance(v, dict)
                else _plain(v))
            for k, v in raw.items()}


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=True)


def serialize_config_json(cfg: ExperimentConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# scenario assembly


def scenario_objects(cfg: ExperimentConfig) -> tuple[scene.ObjectModel, scene.ObjectModel]:
    """Pre/post object pair for the configured scenario."""
    sc = cfg.scenario
    res = sc.raster_resolution
    if sc.name == "two-point-collapse":
        pre = scene.from_points([[0.5, 0.0], [-0.5, 0.0]], label="two-point")
        post = scene.from_points([[0.0, 0.0]], label="origin-point")
    elif sc.name == "square-to-corners":
        pre = scene.uniform_square(1.0, res, label="uniform-square")
        post = scene.from_points([[0.5, 0.5], [0.5, -0.5], [-0.5, 0.5], [-0.5, -0.5]],
                                 label="corner-points")
    elif sc.name == "square-to-fragments":
        pre = scene.uniform_square(1.0, res, label="uniform-square")
        frag_res = max(1, round(res * sc.fragment_side))
        post = scene.square_fragments(sc.fragment_centers, sc.fragment_side, frag_res,
                                      label="fragments")
    else:
        pre = scene.build_object(dict(sc.pre), label="pre")
        post = scene.build_object(dict(sc.post), label="post")
    return pre, post


def make_psf(cfg: ExperimentConfig) -> Psf:
    return Psf(cfg.scenario.psf)


def make_scenario(cfg: ExperimentConfig, gamma: float | None = None,
                  objects=None) -> Scenario:
    pre, post = objects if objects is not None else scenario_objects(cfg)
    return Scenario(pre=pre, post=post,
                    gamma=cfg.scenario.gamma if gamma is None else gamma,
                    photons_per_step=cfg.scenario.photons_per_step,
                    psf=make_psf(cfg))


def make_grid(cfg: ExperimentConfig) -> PixelGrid:
    base = default_grid(make_psf(cfg))
    g = cfg.grid
    return PixelGrid(pitch=g.pitch if g.pitch is not None else base.pitch,
                     half_extent=(g.half_extent if g.half_extent is not None
                                  else base.half_extent),
                     subsample=g.subsample)
