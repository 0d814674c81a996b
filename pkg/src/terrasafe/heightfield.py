"""Heightfield terrain, random camera sampling, and raycast rendering.

The terrain is 2.5D: a regular xy grid holding the upper surface
elevation plus grayscale appearance and safety textures. The virtual
camera never looks above the horizon, so a heightfield replaces a full 3D
mesh and rendering reduces to marching pinhole rays against the grid.

Appearance image and safety mask are sampled at the same per-pixel hit
point, so their geometric correspondence is exact by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kernels import march_py
from .labeling import LabeledCloud

DEFAULT_CELL = 0.25
DEFAULT_VFOV = 60.0
DEFAULT_RESOLUTION = 512
DEFAULT_H_MIN = 5.0
DEFAULT_H_MAX = 20.0
DEFAULT_D_MAX = math.radians(45.0)


@dataclass
class HeightField:
    origin: np.ndarray     # (2,) x0, y0 of the grid's lower corner
    cell: float
    elevation: np.ndarray  # (H, W) float64, meaningful where valid
    gray: np.ndarray       # (H, W) in [0, 1]
    safety: np.ndarray     # (H, W) in [0, 1]
    valid: np.ndarray      # (H, W) bool

    @property
    def shape(self):
        return self.elevation.shape

    def cell_center(self, row, col):
        """World xy of a cell center; row indexes y, col indexes x."""
        return self.origin + (np.array([col, row]) + 0.5) * self.cell

    def elevation_at(self, x, y):
        """Bilinear elevation at world xy, or None off the valid surface."""
        vals, ok = march_py._bilin(
            self.elevation, self.valid,
            np.atleast_1d((x - self.origin[0]) / self.cell),
            np.atleast_1d((y - self.origin[1]) / self.cell))
        return float(vals[0]) if ok[0] else None


def build_heightfield(labeled: LabeledCloud, cell: float = DEFAULT_CELL,
                      fill_holes: bool = True) -> HeightField:
    """Grid the labeled cloud: per cell, elevation takes the max z (upper
    surface), gray and safety the member means. Optionally fill 1-cell
    holes from the 8-neighborhood average."""
    if cell <= 0:
        raise ValueError("cell must be positive")
    xyz = labeled.base.xyz
    lo = xyz[:, :2].min(axis=0)
    hi = xyz[:, :2].max(axis=0)
    extent = float((hi - lo).max())
    if cell > extent:
        raise ValueError("cell exceeds cloud extent")
    w, h = np.maximum(np.ceil((hi - lo) / cell).astype(np.int64), 1)
    cols = np.minimum(((xyz[:, 0] - lo[0]) / cell).astype(np.int64), w - 1)
    rows = np.minimum(((xyz[:, 1] - lo[1]) / cell).astype(np.int64), h - 1)
    flat = rows * w + cols
    n = h * w
    counts = np.bincount(flat, minlength=n)
    valid = counts > 0
    elevation = np.full(n, -np.inf)
    np.maximum.at(elevation, flat, xyz[:, 2])
    elevation[~valid] = np.nan
    gray_src = labeled.base.gray if labeled.base.gray is not None \
        else np.full(len(xyz), 0.5)
    safe_counts = np.maximum(counts, 1)
    gray = np.bincount(flat, weights=gray_src, minlength=n) / safe_counts
    safety = np.bincount(flat, weights=labeled.smooth_safety, minlength=n) / safe_counts
    field_ = HeightField(
        origin=lo.copy(), cell=float(cell),
        elevation=elevation.reshape(h, w), gray=gray.reshape(h, w),
        safety=safety.reshape(h, w), valid=valid.reshape(h, w))
    if fill_holes:
        _fill_single_holes(field_)
    return field_


def _fill_single_holes(field_: HeightField) -> None:
    """One pass: invalid cells adjacent to >= 3 valid neighbors take the
    neighbor average."""
    v = field_.valid
    h, w = v.shape
    nbr_sum = {"elevation": np.zeros((h, w)), "gray": np.zeros((h, w)),
               "safety": np.zeros((h, w))}
    nbr_cnt = np.zeros((h, w))
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            src = np.zeros((h, w), dtype=bool)
            i_lo, i_hi = max(di, 0), h + min(di, 0)
            j_lo, j_hi = max(dj, 0), w + min(dj, 0)
            src[i_lo:i_hi, j_lo:j_hi] = v[i_lo - di:i_hi - di, j_lo - dj:j_hi - dj]
            nbr_cnt += src
            for name in nbr_sum:
                arr = getattr(field_, name)
                shifted = np.zeros((h, w))
                shifted[i_lo:i_hi, j_lo:j_hi] = np.where(
                    v[i_lo - di:i_hi - di, j_lo - dj:j_hi - dj],
                    arr[i_lo - di:i_hi - di, j_lo - dj:j_hi - dj], 0.0)
                nbr_sum[name] += shifted
    fill = ~v & (nbr_cnt >= 3)
    cnt = np.where(fill, nbr_cnt, 1.0)
    for name, total in nbr_sum.items():
        arr = getattr(field_, name)
        arr[fill] = (total / cnt)[fill]
    field_.valid |= fill


@dataclass(frozen=True)
class CameraPose:
    position: np.ndarray   # (3,)
    look_at: np.ndarray    # (3,) on the terrain surface
    deflection: float      # radians from nadir
    height_above_terrain: float
    azimuth: float = 0.0

    def as_row(self) -> list:
        """Flatten to the 9-number manifest layout."""
        return [*map(float, self.position), *map(float, self.look_at),
                float(self.deflection), float(self.height_above_terrain),
                float(self.azimuth)]

    @staticmethod
    def from_row(row) -> "CameraPose":
        row = list(map(float, row))
        return CameraPose(position=np.array(row[0:3]), look_at=np.array(row[3:6]),
                          deflection=row[6], height_above_terrain=row[7],
                          azimuth=row[8])


class CameraSamplingError(RuntimeError):
    """No valid terrain, or too many consecutive rejected poses."""


def sample_camera(field_: HeightField, rng, h_min: float = DEFAULT_H_MIN,
                  h_max: float = DEFAULT_H_MAX, d_max: float = DEFAULT_D_MAX,
                  max_rejects: int = 1000) -> CameraPose:
    """Draw a pose: aim point uniform over valid cells, deflection uniform
    in [0, d_max], azimuth uniform, height above the aim point uniform in
    [h_min, h_max]. Poses whose position ends up below the terrain are
    rejected and redrawn."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    valid_flat = np.flatnonzero(field_.valid.ravel())
    if len(valid_flat) == 0:
        raise CameraSamplingError("heightfield has no valid cells")
    h_, w = field_.shape
    for _ in range(max_rejects):
        pick = valid_flat[rng.integers(len(valid_flat))]
        row, col = divmod(int(pick), w)
        xy = field_.cell_center(row, col)
        look_at = np.array([xy[0], xy[1], field_.elevation[row, col]])
        deflection = rng.uniform(0.0, d_max) if d_max > 0 else 0.0
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        height = rng.uniform(h_min, h_max) if h_max > h_min else float(h_min)
        offset = np.array([
            math.sin(deflection) * math.cos(azimuth),
            math.sin(deflection) * math.sin(azimuth),
            math.cos(deflection),
        ]) * (height / math.cos(deflection))
        position = look_at + offset
        ground = field_.elevation_at(position[0], position[1])
        if ground is not None and position[2] <= ground:
            continue
        return CameraPose(position=position, look_at=look_at,
                          deflection=float(deflection),
                          height_above_terrain=float(height),
                          azimuth=float(azimuth))
    raise CameraSamplingError(f"{max_rejects} consecutive pose rejections")


@dataclass
class RenderedSample:
    image: np.ndarray   # (H, W) gray in [0, 1]
    mask: np.ndarray    # (H, W) safety in [0, 1]
    pose: CameraPose
    coverage: float
    hit_t: np.ndarray | None = None       # debug: per-pixel ray parameter
    hit_points: np.ndarray | None = None  # debug: (H, W, 3) hit positions


def camera_rays(pose: CameraPose, resolution: int, vfov: float):
    """Pinhole ray directions, row-major, roll fixed to zero."""
    forward = pose.look_at - pose.position
    forward = forward / np.linalg.norm(forward)
    up_hint = np.array([0.0, 0.0, 1.0])
    if abs(forward[2]) > 1.0 - 1e-9:
        up_hint = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up_hint)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    half_h = math.tan(math.radians(vfov) / 2.0)
    half_w = half_h  # square sensor
    px = (np.arange(resolution) + 0.5) / resolution * 2.0 - 1.0
    u, v = np.meshgrid(px, -px)
    dirs = (forward[None, None, :]
            + u[:, :, None] * half_w * right[None, None, :]
            + v[:, :, None] * half_h * up[None, None, :])
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    return dirs.reshape(-1, 3)


def _ray_bounds(field_: HeightField, origin, dirs):
    """Slab intersection of each ray with the grid bbox and the attainable
    elevation band; returns (t_start, t_end, z_min, z_max)."""
    h, w = field_.shape
    z_vals = field_.elevation[field_.valid]
    z_min = float(z_vals.min())
    z_max = float(z_vals.max())
    lo = np.array([field_.origin[0], field_.origin[1], z_min - field_.cell])
    hi = np.array([field_.origin[0] + w * field_.cell,
                   field_.origin[1] + h * field_.cell, z_max])
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (lo[None, :] - origin[None, :]) / dirs
        t_hi = (hi[None, :] - origin[None, :]) / dirs
    t_near = np.minimum(t_lo, t_hi)
    t_far = np.maximum(t_lo, t_hi)
    # parallel rays: inside the slab -> unbounded, outside -> empty
    parallel = dirs == 0.0
    inside = (origin[None, :] >= lo[None, :]) & (origin[None, :] <= hi[None, :])
    t_near = np.where(parallel, np.where(inside, -np.inf, np.inf), t_near)
    t_far = np.where(parallel, np.where(inside, np.inf, -np.inf), t_far)
    t_start = np.maximum(t_near.max(axis=1), 0.0)
    t_end = t_far.min(axis=1)
    return t_start, t_end, z_min, z_max


def render_pair(field_: HeightField, pose: CameraPose,
                resolution: int = DEFAULT_RESOLUTION, vfov: float = DEFAULT_VFOV,
                step: float | None = None, debug: bool = False,
                backend: str = "auto") -> RenderedSample:
    """March one ray per pixel; sample appearance and safety at the same
    hit point. Pixels that miss the terrain get image 0 and mask 0
    (unsafe). Coverage below 1% flags the render for upstream rejection."""
    if step is None:
        step = field_.cell / 2.0
    march = kernels.get_march(backend)
    origin = np.asarray(pose.position, dtype=np.float64)
    dirs = camera_rays(pose, resolution, vfov)
    t_start, t_end, z_min, z_max = _ray_bounds(field_, origin, dirs)
    hit_t = np.asarray(march(
        np.ascontiguousarray(field_.elevation, dtype=np.float64),
        np.ascontiguousarray(field_.valid.astype(np.uint8)),
        float(field_.origin[0]), float(field_.origin[1]), float(field_.cell),
        origin, np.ascontiguousarray(dirs),
        np.ascontiguousarray(t_start), np.ascontiguousarray(t_end),
        float(step), z_min - field_.cell, z_max))
    hit = hit_t >= 0.0
    pts = origin[None, :] + dirs * hit_t[:, None]
    gx = (pts[:, 0] - field_.origin[0]) / field_.cell
    gy = (pts[:, 1] - field_.origin[1]) / field_.cell
    gray_vals, ok_g = march_py._bilin(field_.gray, field_.valid, gx, gy)
    safety_vals, ok_s = march_py._bilin(field_.safety, field_.valid, gx, gy)
    image = np.where(hit & ok_g, gray_vals, 0.0).reshape(resolution, resolution)
    mask = np.where(hit & ok_s, safety_vals, 0.0).reshape(resolution, resolution)
    coverage = float(hit.mean())
    sample = RenderedSample(image=image, mask=mask, pose=pose, coverage=coverage)
    if debug:
        sample.hit_t = hit_t.reshape(resolution, resolution)
        pts = np.where(hit[:, None], pts, np.nan)
        sample.hit_points = pts.reshape(resolution, resolution, 3)
    return sample
