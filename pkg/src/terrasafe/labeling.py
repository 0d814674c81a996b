"""Binary safety labeling, manual overrides, label smoothing, and slicing.

A point is geometrically unsafe when its verticality or surface variation
exceeds the (experimentally determined) thresholds, or when its
neighborhood was too sparse to fit a frame at all. Manual overrides are
2D polygon prisms in the xy plane: the terrain may slope, so selecting by
altitude does not work, but a vertical prism always does.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cloud_io import ManualClass, PointCloud
from .geometry import CloudFeatures, NeighborIndex

DEFAULT_VERTICALITY_THRESHOLD = 0.01
DEFAULT_SURFACE_VARIATION_THRESHOLD = 0.002
DEFAULT_SMOOTH_SIGMA = 0.5
DEFAULT_CHUNK = 50.0


@dataclass(frozen=True)
class SafetyThresholds:
    verticality: float = DEFAULT_VERTICALITY_THRESHOLD
    surface_variation: float = DEFAULT_SURFACE_VARIATION_THRESHOLD

    def __post_init__(self):
        for v in (self.verticality, self.surface_variation):
            if not 0.0 < v < 1.0:
                raise ValueError("thresholds must lie in (0, 1)")


@dataclass(frozen=True)
class OverrideRegion:
    """Simple xy polygon forcing every point inside it safe or unsafe."""

    polygon: np.ndarray  # (M, 2)
    forced: str          # "force_unsafe" | "force_safe"

    def __post_init__(self):
        poly = np.asarray(self.polygon, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "polygon", poly)
        if len(poly) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if self.forced not in ("force_unsafe", "force_safe"):
            raise ValueError(f"bad forced value {self.forced!r}")
        if _self_intersects(poly):
            raise ValueError("polygon is self-intersecting")

    @staticmethod
    def from_json(obj: dict) -> "OverrideRegion":
        return OverrideRegion(polygon=np.asarray(obj["polygon"]), forced=obj["forced"])


def _segments_cross(a, b, c, d):
    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        return 0 if v == 0 else (1 if v > 0 else -1)
    return (orient(a, b, c) != orient(a, b, d)
            and orient(c, d, a) != orient(c, d, b)
            and orient(a, b, c) != 0 and orient(a, b, d) != 0)


def _self_intersects(poly):
    n = len(poly)
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue  # shared vertex with the closing edge
            if _segments_cross(*edges[i], *edges[j]):
                return True
    return False


def points_in_polygon(xy: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd ray casting, vectorized over the query points."""
    xy = np.asarray(xy, dtype=np.float64)
    inside = np.zeros(len(xy), dtype=bool)
    x, y = xy[:, 0], xy[:, 1]
    px, py = polygon[:, 0], polygon[:, 1]
    n = len(polygon)
    for i in range(n):
        x0, y0 = px[i], py[i]
        x1, y1 = px[(i + 1) % n], py[(i + 1) % n]
        crosses = (y0 > y) != (y1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (x < xint)
    return inside


@dataclass
class LabeledCloud:
    """Cloud plus features and the binary / smoothed safety fields."""

    base: PointCloud
    features: CloudFeatures
    raw_safety: np.ndarray       # (N,) uint8, 1 = safe
    smooth_safety: np.ndarray    # (N,) float in [0, 1]

    def __len__(self):
        return len(self.base)

    def to_cloud(self) -> PointCloud:
        """Flatten back to a PointCloud carrying smooth_safety as an extra
        scalar, for PLY persistence."""
        extras = dict(self.base.extras)
        extras["smooth_safety"] = self.smooth_safety.astype(np.float64)
        return PointCloud(xyz=self.base.xyz, gray=self.base.gray,
                          manual_class=self.base.manual_class, extras=extras,
                          crs_note=self.base.crs_note)


def labeled_from_cloud(cloud: PointCloud) -> LabeledCloud:
    """Rehydrate a LabeledCloud from a PLY that carries the persisted
    smooth_safety scalar; raw_safety binarizes it at 0.5."""
    if "smooth_safety" not in cloud.extras:
        raise ValueError("cloud has no smooth_safety attribute")
    smooth = cloud.extras["smooth_safety"].astype(np.float64)
    n = len(cloud)
    feats = CloudFeatures(
        normals=np.zeros((n, 3)), verticality=np.zeros(n),
        surface_variation=np.zeros(n), valid=np.ones(n, dtype=bool),
        radius=0.0, min_neighbors=0)
    return LabeledCloud(base=cloud, features=feats,
                        raw_safety=(smooth >= 0.5).astype(np.uint8),
                        smooth_safety=smooth)


def classify_safety(cloud: PointCloud, features: CloudFeatures,
                    thresholds: SafetyThresholds = SafetyThresholds()) -> LabeledCloud:
    """Assign the binary safety label from the geometric features.

    Unsafe when verticality or surface variation exceeds its threshold,
    when the frame was insufficient (conservative), or when the point
    carries a force_unsafe manual class. A per-point force_safe class wins
    over the geometric rule; region-level overrides are applied separately.
    """
    if features.valid.shape != (len(cloud),):
        raise ValueError("features do not match cloud")
    unsafe = (
        ~features.valid
        | (features.verticality > thresholds.verticality)
        | (features.surface_variation > thresholds.surface_variation)
    )
    safety = (~unsafe).astype(np.uint8)
    if cloud.manual_class is not None:
        safety[cloud.manual_class == ManualClass.FORCE_UNSAFE] = 0
        safety[cloud.manual_class == ManualClass.FORCE_SAFE] = 1
    return LabeledCloud(base=cloud, features=features, raw_safety=safety,
                        smooth_safety=safety.astype(np.float64))


def apply_overrides(labeled: LabeledCloud,
                    regions: list[OverrideRegion]) -> LabeledCloud:
    """Force raw_safety inside each region; later regions win overlaps."""
    safety = labeled.raw_safety.copy()
    xy = labeled.base.xyz[:, :2]
    for region in regions:
        inside = points_in_polygon(xy, region.polygon)
        safety[inside] = 0 if region.forced == "force_unsafe" else 1
    return replace(labeled, raw_safety=safety,
                   smooth_safety=safety.astype(np.float64))


def smooth_safety(labeled: LabeledCloud, index: NeighborIndex | None = None,
                  sigma: float = DEFAULT_SMOOTH_SIGMA) -> LabeledCloud:
    """Gaussian-smooth raw_safety over each point's 3-sigma neighborhood."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    raw = labeled.raw_safety.astype(np.float64)
    if sigma == 0:
        return replace(labeled, smooth_safety=raw)
    if index is None:
        index = NeighborIndex(labeled.base)
    xyz = labeled.base.xyz
    smooth = np.empty(len(raw))
    inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma)
    for i, nbrs in enumerate(index.radius_query_all(3.0 * sigma)):
        nbrs = np.asarray(nbrs, dtype=np.intp)
        d2 = np.sum((xyz[nbrs] - xyz[i]) ** 2, axis=1)
        w = np.exp(-d2 * inv_two_sigma_sq)
        smooth[i] = np.dot(w, raw[nbrs]) / w.sum()
    return replace(labeled, smooth_safety=smooth)


@dataclass
class TerrainSlice:
    """One xy tile of a labeled cloud.

    Points inside the interior rectangle belong exclusively to this slice;
    margin points are duplicated from neighboring tiles so features and
    smoothing stay valid near the edges.
    """

    labeled: LabeledCloud
    interior_min: np.ndarray  # (2,)
    interior_max: np.ndarray  # (2,)
    interior: np.ndarray      # (N,) bool mask into labeled
    tile_id: tuple = field(default_factory=tuple)


def slice_terrain(labeled: LabeledCloud, chunk: float = DEFAULT_CHUNK,
                  overlap: float = 0.5) -> list[TerrainSlice]:
    """Cut the cloud into axis-aligned xy tiles of side `chunk` with a
    margin of `overlap` meters on each side."""
    if chunk <= 0:
        raise ValueError("chunk must be positive")
    if chunk < 2 * overlap:
        raise ValueError("chunk smaller than twice the overlap margin")
    xy = labeled.base.xyz[:, :2]
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    # interior tile index per point; top edge points folded into the last tile
    tiles = np.floor((xy - lo) / chunk).astype(np.int64)
    n_tiles = np.maximum(np.ceil((hi - lo) / chunk).astype(np.int64), 1)
    tiles = np.minimum(tiles, n_tiles - 1)
    slices = []
    for ix in range(n_tiles[0]):
        for iy in range(n_tiles[1]):
            interior = (tiles[:, 0] == ix) & (tiles[:, 1] == iy)
            if not interior.any():
                continue
            tmin = lo + np.array([ix, iy]) * chunk
            tmax = tmin + chunk
            member = np.all((xy >= tmin - overlap) & (xy <= tmax + overlap), axis=1)
            member |= interior
            sub = _subset(labeled, member)
            slices.append(TerrainSlice(
                labeled=sub, interior_min=tmin, interior_max=tmax,
                interior=interior[member], tile_id=(ix, iy)))
    return slices


def _subset(labeled: LabeledCloud, mask: np.ndarray) -> LabeledCloud:
    base = labeled.base
    cloud = PointCloud(
        xyz=base.xyz[mask],
        gray=None if base.gray is None else base.gray[mask],
        manual_class=None if base.manual_class is None else base.manual_class[mask],
        extras={k: v[mask] for k, v in base.extras.items()},
        crs_note=base.crs_note,
    )
    f = labeled.features
    feats = CloudFeatures(
        normals=f.normals[mask], verticality=f.verticality[mask],
        surface_variation=f.surface_variation[mask], valid=f.valid[mask],
        radius=f.radius, min_neighbors=f.min_neighbors,
    )
    return LabeledCloud(base=cloud, features=feats,
                        raw_safety=labeled.raw_safety[mask],
                        smooth_safety=labeled.smooth_safety[mask])


def merge_interiors(slices: list[TerrainSlice]) -> np.ndarray:
    """Stack the interior points of all slices (order not preserved)."""
    return np.vstack([s.labeled.base.xyz[s.interior] for s in slices])
