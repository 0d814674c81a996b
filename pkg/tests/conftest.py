import sys

import numpy as np
import pytest

from terrasafe.cloud_io import PointCloud
from terrasafe.geometry import CloudFeatures
from terrasafe.heightfield import HeightField
from terrasafe.labeling import LabeledCloud


def make_labeled(xyz, gray=None, safety=None):
    """LabeledCloud straight from arrays, bypassing feature estimation."""
    cloud = PointCloud(xyz=xyz, gray=gray)
    n = len(cloud)
    feats = CloudFeatures(
        normals=np.tile([0.0, 0.0, 1.0], (n, 1)), verticality=np.zeros(n),
        surface_variation=np.zeros(n), valid=np.ones(n, dtype=bool),
        radius=0.5, min_neighbors=8)
    if safety is None:
        safety = np.ones(n)
    safety = np.asarray(safety, dtype=np.float64)
    return LabeledCloud(base=cloud, features=feats,
                        raw_safety=(safety >= 0.5).astype(np.uint8),
                        smooth_safety=safety)


def flat_labeled(extent=20.0, spacing=0.25, z=0.0, safety_fn=None,
                 gray_fn=None):
    ax = np.arange(0, extent + spacing / 2, spacing)
    xx, yy = np.meshgrid(ax, ax)
    xyz = np.column_stack([xx.ravel(), yy.ravel(),
                           np.full(xx.size, float(z))])
    safety = safety_fn(xyz) if safety_fn else None
    gray = gray_fn(xyz) if gray_fn else None
    return make_labeled(xyz, gray=gray, safety=safety)


def make_field(elevation, cell=0.25, origin=(0.0, 0.0), gray=None,
               safety=None, valid=None):
    """HeightField straight from grids."""
    elevation = np.asarray(elevation, dtype=np.float64)
    if gray is None:
        gray = np.full_like(elevation, 0.5)
    if safety is None:
        safety = np.ones_like(elevation)
    if valid is None:
        valid = np.isfinite(elevation)
    return HeightField(origin=np.asarray(origin, dtype=np.float64),
                       cell=float(cell), elevation=elevation,
                       gray=np.asarray(gray, dtype=np.float64),
                       safety=np.asarray(safety, dtype=np.float64),
                       valid=np.asarray(valid, dtype=bool))


@pytest.fixture
def flat_field():
    return make_field(np.zeros((80, 80)), cell=0.25)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance suite's one-line-per-criterion verdicts."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "SUMMARY_LINES", None) if module else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def speckle_frames(n_frames=20, size=512, region_fraction=0.25,
                   cluster=10, cycle=5):
    """Danger speckle that defeats raw thresholding but not E1 + E2.

    Each frame paints ~5% of the central region as small danger clusters,
    at positions that change frame to frame on a 5-frame cycle. Per frame
    the danger is too sparse to flip the center verdict, but a 15x15 blur
    plus a 5-frame pointwise max accumulates the clusters into contiguous
    danger covering most of the region.
    """
    from terrasafe.evaluate import PredictionFrame

    side = int(round(region_fraction * size))
    r0 = (size - side) // 2
    # anchor grid spread over the central region, 8 anchors per cycle slot
    n_anchor = 1 + (side - cluster - 8) // 18
    ax = r0 + 4 + 18 * np.arange(n_anchor)
    anchors = [(int(y), int(x)) for y in ax for x in ax]
    frames = []
    for t in range(n_frames):
        danger = np.zeros((size, size))
        slot = t % cycle
        for k, (y, x) in enumerate(anchors):
            if k % cycle == slot:
                danger[y:y + cluster, x:x + cluster] = 1.0
        frames.append(PredictionFrame(p_safe=1.0 - danger, p_danger=danger,
                                      timestamp=t))
    return frames
