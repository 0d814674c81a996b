"""Neighborhood search, normal estimation, and the two geometric features.

Verticality (1 - |n_z|) measures how slanted the local surface is;
surface variation (smallest covariance eigenvalue over the eigenvalue sum)
measures local roughness. Both come from a PCA of the radius neighborhood
around each point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud_io import PointCloud

DEFAULT_RADIUS = 0.5
DEFAULT_MIN_NEIGHBORS = 8

#: sentinel for neighborhoods too sparse to fit a frame
INSUFFICIENT = None


@dataclass(frozen=True)
class LocalFrame:
    """PCA of one point's radius neighborhood.

    normal is the unit eigenvector of the smallest eigenvalue, flipped to
    the upper hemisphere (n_z >= 0). eigenvalues are sorted descending and
    clamped non-negative.
    """

    normal: np.ndarray
    eigenvalues: np.ndarray
    neighbor_count: int


class NeighborIndex:
    """kd-tree over a cloud; immutable and safe for concurrent queries."""

    def __init__(self, cloud: PointCloud | np.ndarray):
        xyz = cloud.xyz if isinstance(cloud, PointCloud) else np.asarray(cloud)
        if len(xyz) == 0:
            raise ValueError("cannot index an empty cloud")
        self.xyz = xyz
        self._tree = cKDTree(xyz)

    def __len__(self):
        return len(self.xyz)

    def radius_query(self, p, r: float) -> np.ndarray:
        """Indices of all points within Euclidean distance r of p."""
        return np.asarray(self._tree.query_ball_point(np.asarray(p), r), dtype=np.intp)

    def radius_query_all(self, r: float) -> list:
        """Neighbor index lists for every indexed point at once."""
        return self._tree.query_ball_point(self.xyz, r)

    def knn_query(self, p, k: int):
        """(distances, indices) of the k nearest points to p."""
        d, i = self._tree.query(np.asarray(p), k=k)
        return np.atleast_1d(d), np.atleast_1d(i)


def build_index(cloud: PointCloud) -> NeighborIndex:
    return NeighborIndex(cloud)


def _frame_from_neighbors(pts: np.ndarray) -> LocalFrame:
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    evals, evecs = np.linalg.eigh(cov)  # ascending
    evals = np.clip(evals, 0.0, None)
    normal = evecs[:, 0]
    if normal[2] < 0:
        normal = -normal
    return LocalFrame(
        normal=normal,
        eigenvalues=evals[::-1].copy(),
        neighbor_count=len(pts),
    )


def local_frame(index: NeighborIndex, p, radius: float,
                min_neighbors: int = DEFAULT_MIN_NEIGHBORS):
    """Fit a LocalFrame at p, or INSUFFICIENT when the neighborhood is
    smaller than min_neighbors."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if min_neighbors < 3:
        raise ValueError("min_neighbors must be >= 3")
    idx = index.radius_query(p, radius)
    if len(idx) < min_neighbors:
        return INSUFFICIENT
    return _frame_from_neighbors(index.xyz[idx])


def verticality(frame: LocalFrame) -> float:
    return 1.0 - abs(float(frame.normal[2]))


def surface_variation(frame: LocalFrame) -> float:
    total = float(frame.eigenvalues.sum())
    if total <= 0.0:
        return 0.0
    return float(frame.eigenvalues[2]) / total


@dataclass
class CloudFeatures:
    """Per-point frames for a whole cloud; valid marks points whose
    neighborhood met the min_neighbors requirement."""

    normals: np.ndarray          # (N, 3); rows undefined where not valid
    verticality: np.ndarray      # (N,)
    surface_variation: np.ndarray  # (N,)
    valid: np.ndarray            # (N,) bool
    radius: float
    min_neighbors: int


def compute_features(cloud: PointCloud, radius: float = DEFAULT_RADIUS,
                     min_neighbors: int = DEFAULT_MIN_NEIGHBORS,
                     index: NeighborIndex | None = None) -> CloudFeatures:
    """Frames + features for every point in one pass over the index."""
    if index is None:
        index = NeighborIndex(cloud)
    n = len(cloud)
    normals = np.zeros((n, 3))
    vert = np.zeros(n)
    sv = np.zeros(n)
    valid = np.zeros(n, dtype=bool)
    neighbor_lists = index.radius_query_all(radius)
    for i, nbrs in enumerate(neighbor_lists):
        if len(nbrs) < min_neighbors:
            continue
        frame = _frame_from_neighbors(index.xyz[nbrs])
        normals[i] = frame.normal
        vert[i] = verticality(frame)
        sv[i] = surface_variation(frame)
        valid[i] = True
    return CloudFeatures(normals=normals, verticality=vert, surface_variation=sv,
                         valid=valid, radius=radius, min_neighbors=min_neighbors)
