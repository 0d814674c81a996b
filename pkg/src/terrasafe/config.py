"""Pipeline configuration: one flat parameter set covering every stage.

Loaded from a TOML file, overridable by CLI flags (flags win), and
snapshotted next to every run's outputs so any artifact is reproducible
from the snapshot alone.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(Exception):
    """Unknown key, bad type, or out-of-range value."""


@dataclass
class PipelineConfig:
    # ingestion
    voxel_cell: float = 0.10
    # geometric features
    feature_radius: float = 0.5
    min_neighbors: int = 8
    # safety labeling
    verticality_threshold: float = 0.01
    surface_variation_threshold: float = 0.002
    smooth_sigma: float = 0.5
    chunk: float = 50.0
    # terrain + rendering
    heightfield_cell: float = 0.25
    vfov: float = 60.0
    resolution: int = 512
    h_min: float = 5.0
    h_max: float = 20.0
    d_max_deg: float = 45.0
    # dataset generation
    min_coverage: float = 0.5
    retry_cap: int = 50
    # evaluation
    safety_threshold: float = 0.5
    blur_kernel: int = 15
    temporal_window: int = 5
    region_fraction: float = 0.25
    # global
    seed: int = 0
    backend: str = "auto"

    def __post_init__(self):
        checks = [
            (self.voxel_cell > 0, "voxel_cell must be positive"),
            (self.feature_radius > 0, "feature_radius must be positive"),
            (self.min_neighbors >= 3, "min_neighbors must be >= 3"),
            (0 < self.verticality_threshold < 1,
             "verticality_threshold must lie in (0, 1)"),
            (0 < self.surface_variation_threshold < 1,
             "surface_variation_threshold must lie in (0, 1)"),
            (self.smooth_sigma >= 0, "smooth_sigma must be non-negative"),
            (self.chunk > 0, "chunk must be positive"),
            (self.heightfield_cell > 0, "heightfield_cell must be positive"),
            (0 < self.vfov < 180, "vfov must lie in (0, 180)"),
            (self.resolution >= 8, "resolution must be >= 8"),
            (0 < self.h_min <= self.h_max, "need 0 < h_min <= h_max"),
            (0 <= self.d_max_deg < 90, "d_max_deg must lie in [0, 90)"),
            (0 <= self.min_coverage <= 1, "min_coverage must lie in [0, 1]"),
            (self.retry_cap >= 1, "retry_cap must be >= 1"),
            (0 < self.safety_threshold < 1,
             "safety_threshold must lie in (0, 1)"),
            (self.blur_kernel >= 1 and self.blur_kernel % 2 == 1,
             "blur_kernel must be odd and >= 1"),
            (self.temporal_window >= 1, "temporal_window must be >= 1"),
            (0 < self.region_fraction <= 1,
             "region_fraction must lie in (0, 1]"),
            (self.backend in ("auto", "compiled", "numpy"),
             "backend must be auto, compiled, or numpy"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @staticmethod
    def load(path=None, overrides: dict | None = None) -> "PipelineConfig":
        """Build a config from an optional TOML file plus flag overrides;
        unknown keys are rejected."""
        values: dict = {}
        if path is not None:
            with open(path, "rb") as fh:
                values.update(tomllib.load(fh))
        if overrides:
            values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(PipelineConfig)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return PipelineConfig(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def snapshot(self, out_dir, name: str = "resolved_config.json") -> Path:
        """Write the resolved parameter set next to a run's outputs."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / name
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path
