"""Pipeline configuration: every tunable threshold in one place."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

# Class-specific confidence gates for pseudo-label filtering.
DEFAULT_TAU_CONF = {"Car": 0.5, "Pedestrian": 0.4}


@dataclass(frozen=True)
class PipelineConfig:
    tau_static: float = 0.5          # max pairwise centroid displacement, meters
    mask_conf_min: float = 0.6       # below this, fall back to the 2D box
    centroid: str = "mean"           # "mean" | "median"
    dbscan_eps: float = 0.5          # meters
    dbscan_min_pts: int = 10
    min_cluster_points: int = 10     # quality gate on |C*|
    min_views: int = 2
    tau_iou: float = 0.6             # geometric verification gate
    hull_metric: str = "iou"         # "iou" | "coverage" (see verify_geometry)
    extent_floor: float = 0.05       # meters; minimum box extent
    lambda_2d: float = 0.5           # weight of the multi-view 2D loss
    mu_fit: float = 1.0              # weight of the point-fit loss
    refine_budget: int = 2000        # objective evaluations per track
    refine: bool = True
    tau_conf: dict = field(default_factory=lambda: dict(DEFAULT_TAU_CONF))
    tau_conf_default: float = 0.5
    z_near: float = 1e-3             # meters; camera near plane
    curve_thresholds: tuple = (0, 5, 10, 25, 50, 100, 200)

    def __post_init__(self):
        if self.centroid not in ("mean", "median"):
            raise ConfigError(f"centroid must be 'mean' or 'median', got {self.centroid!r}")
        if self.hull_metric not in ("iou", "coverage"):
            raise ConfigError(f"hull_metric must be 'iou' or 'coverage', got {self.hull_metric!r}")
        for name in ("tau_static", "dbscan_eps", "extent_floor", "z_near"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.tau_iou <= 1:
            raise ConfigError("tau_iou must be in [0, 1]")
        if self.lambda_2d < 0 or self.mu_fit < 0:
            raise ConfigError("objective weights must be non-negative")
        for cls, tau in self.tau_conf.items():
            if not 0 <= tau <= 1:
                raise ConfigError(f"tau_conf[{cls!r}] must be in [0, 1]")
        if not 0 <= self.tau_conf_default <= 1:
            raise ConfigError("tau_conf_default must be in [0, 1]")

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(PipelineConfig)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "curve_thresholds" in d:
            d["curve_thresholds"] = tuple(d["curve_thresholds"])
        return PipelineConfig(**d)

    @staticmethod
    def from_json_file(path) -> "PipelineConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return PipelineConfig.from_dict(data)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["curve_thresholds"] = list(self.curve_thresholds)
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
