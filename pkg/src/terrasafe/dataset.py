"""Synthetic dataset generation: paired aerial images and safety masks.

Samples are spread round-robin over terrain slices. Each sample draws a
random camera pose, raycasts an appearance/safety pair, and writes both
as 8-bit grayscale PNGs (255 = safe/bright). Low-coverage renders are
rejected and redrawn so the dataset is not dominated by off-terrain
borders. Everything is seed-deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .heightfield import (DEFAULT_CELL, DEFAULT_D_MAX, DEFAULT_H_MAX,
                          DEFAULT_H_MIN, DEFAULT_RESOLUTION, DEFAULT_VFOV,
                          CameraPose, CameraSamplingError, build_heightfield,
                          render_pair, sample_camera)
from .labeling import TerrainSlice


@dataclass
class GeneratorConfig:
    cell: float = DEFAULT_CELL
    resolution: int = DEFAULT_RESOLUTION
    vfov: float = DEFAULT_VFOV
    h_min: float = DEFAULT_H_MIN
    h_max: float = DEFAULT_H_MAX
    d_max_deg: float = math.degrees(DEFAULT_D_MAX)
    min_coverage: float = 0.5
    retry_cap: int = 50
    seed: int = 0
    backend: str = "auto"


@dataclass
class ManifestEntry:
    image_path: str
    mask_path: str
    pose: list          # 9 numbers, CameraPose.as_row layout
    slice_id: int
    coverage: float
    seed: int

    def camera_pose(self) -> CameraPose:
        return CameraPose.from_row(self.pose)


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    generator_config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"entries": [asdict(e) for e in self.entries],
                "generator_config": self.generator_config}

    @staticmethod
    def from_json(obj: dict) -> "DatasetManifest":
        return DatasetManifest(
            entries=[ManifestEntry(**e) for e in obj["entries"]],
            generator_config=obj.get("generator_config", {}))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @staticmethod
    def load(path) -> "DatasetManifest":
        with open(path) as fh:
            return DatasetManifest.from_json(json.load(fh))


class GenerationError(RuntimeError):
    """Retry cap exhausted or unusable slice."""


def write_gray_png(array: np.ndarray, path) -> None:
    """8-bit grayscale, rounding half up from [0, 1]."""
    data = np.clip(np.floor(array * 255.0 + 0.5), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def read_gray_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.float64) / 255.0


def generate_dataset(slices: list[TerrainSlice], n_samples: int,
                     config: GeneratorConfig, out_dir) -> DatasetManifest:
    """Render n_samples image/mask pairs into out_dir and write
    manifest.json alongside them."""
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if not slices:
        raise ValueError("need at least one slice")
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    msk_dir = out_dir / "masks"
    img_dir.mkdir(parents=True, exist_ok=True)
    msk_dir.mkdir(parents=True, exist_ok=True)
    fields = [build_heightfield(s.labeled, cell=config.cell) for s in slices]
    d_max = math.radians(config.d_max_deg)
    manifest = DatasetManifest(generator_config=asdict(config))
    for i in range(n_samples):
        slice_id = i % len(slices)
        field_ = fields[slice_id]
        sample = None
        for attempt in range(config.retry_cap):
            rng = np.random.default_rng([config.seed, i, attempt])
            try:
                pose = sample_camera(field_, rng, h_min=config.h_min,
                                     h_max=config.h_max, d_max=d_max)
            except CameraSamplingError as exc:
                raise GenerationError(f"slice {slice_id}: {exc}") from exc
            candidate = render_pair(field_, pose, resolution=config.resolution,
                                    vfov=config.vfov, backend=config.backend)
            if candidate.coverage >= config.min_coverage:
                sample = candidate
                break
        if sample is None:
            raise GenerationError(
                f"sample {i}: retry cap {config.retry_cap} exhausted "
                f"(coverage stayed below {config.min_coverage})")
        image_path = img_dir / f"img_{i:06d}.png"
        mask_path = msk_dir / f"msk_{i:06d}.png"
        write_gray_png(sample.image, image_path)
        write_gray_png(sample.mask, mask_path)
        manifest.entries.append(ManifestEntry(
            image_path=str(image_path.relative_to(out_dir)),
            mask_path=str(mask_path.relative_to(out_dir)),
            pose=sample.pose.as_row(), slice_id=slice_id,
            coverage=sample.coverage, seed=config.seed))
    manifest.save(out_dir / "manifest.json")
    return manifest


def split_dataset(manifest: DatasetManifest, train_fraction: float,
                  seed: int) -> tuple[DatasetManifest, DatasetManifest]:
    """Disjoint, exhaustive, seed-deterministic split stratified by
    slice_id."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    if len(manifest.entries) < 2:
        raise ValueError("too few entries to split")
    rng = np.random.default_rng(seed)
    by_slice: dict[int, list] = {}
    for entry in manifest.entries:
        by_slice.setdefault(entry.slice_id, []).append(entry)
    train, test = [], []
    for slice_id in sorted(by_slice):
        group = by_slice[slice_id]
        order = rng.permutation(len(group))
        n_train = int(round(train_fraction * len(group)))
        for rank, j in enumerate(order):
            (train if rank < n_train else test).append(group[j])
    if not train or not test:
        raise ValueError("too few entries to split")
    return (replace(manifest, entries=train), replace(manifest, entries=test))
