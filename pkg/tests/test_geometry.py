import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from terrasafe.cloud_io import PointCloud
from terrasafe.geometry import (INSUFFICIENT, NeighborIndex, build_index,
                                compute_features, local_frame,
                                surface_variation, verticality)


def plane_cloud(normal, n=200, extent=2.0, seed=0):
    """Random points on the plane through the origin with the given normal."""
    rng = np.random.default_rng(seed)
    normal = np.asarray(normal, dtype=float)
    normal /= np.linalg.norm(normal)
    # two in-plane directions
    helper = np.array([1.0, 0, 0]) if abs(normal[0]) < 0.9 else np.array([0, 1.0, 0])
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    coeff = rng.uniform(-extent, extent, (n, 2))
    return coeff[:, :1] * u + coeff[:, 1:] * v


class TestNeighborIndex:
    def test_square_radius_query_returns_all(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], float)
        index = build_index(PointCloud(xyz=pts))
        for p in pts:
            assert len(index.radius_query(p, np.sqrt(2) + 1e-9)) == 4

    def test_self_is_nearest(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [5, 5, 5]], float)
        index = NeighborIndex(pts)
        _d, i = index.knn_query([1, 0, 0], k=1)
        assert i[0] == 1

    def test_empty_cloud_rejected(self):
        with pytest.raises(ValueError):
            NeighborIndex(np.empty((0, 3)))

    def test_radius_queries_match_brute_force(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-3, 3, (200, 3))
        index = NeighborIndex(pts)
        for _ in range(50):
            q = rng.uniform(-3, 3, 3)
            r = rng.uniform(0.2, 3.0)
            got = set(index.radius_query(q, r).tolist())
            want = set(np.flatnonzero(
                np.linalg.norm(pts - q, axis=1) <= r).tolist())
            assert got == want

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 9999))
    def test_brute_force_property_small_clouds(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-2, 2, (rng.integers(5, 500), 3))
        index = NeighborIndex(pts)
        q = rng.uniform(-2, 2, 3)
        r = rng.uniform(0.1, 2.5)
        got = set(index.radius_query(q, r).tolist())
        want = set(np.flatnonzero(np.linalg.norm(pts - q, axis=1) <= r).tolist())
        assert got == want


class TestLocalFrame:
    def test_horizontal_plane(self):
        pts = plane_cloud([0, 0, 1])
        index = NeighborIndex(pts)
        frame = local_frame(index, [0, 0, 0], radius=3.0)
        np.testing.assert_allclose(np.abs(frame.normal), [0, 0, 1], atol=1e-9)
        assert frame.eigenvalues[2] == pytest.approx(0.0, abs=1e-12)

    def test_vertical_plane_sign_free(self):
        pts = plane_cloud([1, 0, 0])
        index = NeighborIndex(pts)
        frame = local_frame(index, [0, 0, 0], radius=3.0)
        assert abs(frame.normal[0]) == pytest.approx(1.0, abs=1e-9)
        assert frame.normal[2] == pytest.approx(0.0, abs=1e-9)

    def test_tilted_45_degrees(self):
        # plane z = x, normal (-1, 0, 1)/sqrt(2) after hemisphere flip
        pts = plane_cloud([-1, 0, 1])
        index = NeighborIndex(pts)
        frame = local_frame(index, [0, 0, 0], radius=4.0)
        np.testing.assert_allclose(
            frame.normal, [-np.sqrt(2) / 2, 0, np.sqrt(2) / 2], atol=1e-6)

    def test_normal_is_unit_and_upper_hemisphere(self):
        rng = np.random.default_rng(9)
        pts = rng.normal(size=(100, 3))
        frame = local_frame(NeighborIndex(pts), [0, 0, 0], radius=5.0)
        assert np.linalg.norm(frame.normal) == pytest.approx(1.0, abs=1e-9)
        assert frame.normal[2] >= 0
        assert np.all(np.diff(frame.eigenvalues) <= 0)

    def test_insufficient_neighbors(self):
        pts = np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0], [10, 10, 0]], float)
        frame = local_frame(NeighborIndex(pts), [0, 0, 0], radius=0.5,
                            min_neighbors=3)
        assert frame is INSUFFICIENT

    def test_parameter_validation(self):
        index = NeighborIndex(np.zeros((5, 3)))
        with pytest.raises(ValueError):
            local_frame(index, [0, 0, 0], radius=-1.0)
        with pytest.raises(ValueError):
            local_frame(index, [0, 0, 0], radius=1.0, min_neighbors=2)


class TestFeatures:
    def test_verticality_values(self):
        pts = plane_cloud([0, 0, 1])
        frame = local_frame(NeighborIndex(pts), [0, 0, 0], radius=3.0)
        assert verticality(frame) == pytest.approx(0.0, abs=1e-9)

        pts = plane_cloud([1, 0, 0])
        frame = local_frame(NeighborIndex(pts), [0, 0, 0], radius=3.0)
        assert verticality(frame) == pytest.approx(1.0, abs=1e-9)

    def test_verticality_45_degree_slope(self):
        pts = plane_cloud([-1, 0, 1], n=400, seed=3)
        frame = local_frame(NeighborIndex(pts), [0, 0, 0], radius=4.0)
        assert verticality(frame) == pytest.approx(1 - np.cos(np.pi / 4),
                                                   abs=1e-9)

    def test_surface_variation_plane_is_zero(self):
        pts = plane_cloud([0, 0, 1])
        frame = local_frame(NeighborIndex(pts), [0, 0, 0], radius=3.0)
        assert surface_variation(frame) == pytest.approx(0.0, abs=1e-12)

    def test_surface_variation_isotropic_blob(self):
        # sampled isotropic Gaussian, checked against a brute-force
        # covariance eigen-decomposition
        errs = []
        for seed in range(10):
            rng = np.random.default_rng(seed)
            pts = rng.normal(size=(20_000, 3))
            frame = local_frame(NeighborIndex(pts), [0, 0, 0], radius=50.0)
            sv = surface_variation(frame)
            centered = pts - pts.mean(axis=0)
            evs = np.linalg.eigvalsh(centered.T @ centered / len(pts))
            assert sv == pytest.approx(evs[0] / evs.sum(), abs=1e-12)
            errs.append(abs(sv - 1 / 3))
        assert max(errs) < 0.02

    def test_degenerate_frame_is_zero(self):
        pts = np.zeros((10, 3))
        frame = local_frame(NeighborIndex(pts), [0, 0, 0], radius=1.0)
        assert surface_variation(frame) == 0.0

    def test_feature_ranges(self):
        rng = np.random.default_rng(17)
        pts = rng.uniform(-2, 2, (300, 3))
        feats = compute_features(PointCloud(xyz=pts), radius=1.0,
                                 min_neighbors=4)
        v = feats.verticality[feats.valid]
        sv = feats.surface_variation[feats.valid]
        assert np.all((v >= 0) & (v <= 1))
        assert np.all((sv >= 0) & (sv <= 1 / 3 + 1e-12))


class TestInvariances:
    @pytest.fixture
    def rough_cloud(self):
        rng = np.random.default_rng(23)
        xy = rng.uniform(0, 8, (600, 2))
        z = 0.3 * np.sin(xy[:, 0]) + rng.normal(0, 0.05, 600)
        return np.column_stack([xy, z])

    def test_z_rotation_invariance(self, rough_cloud):
        theta = 0.7
        rot = np.array([[np.cos(theta), -np.sin(theta), 0],
                        [np.sin(theta), np.cos(theta), 0],
                        [0, 0, 1]])
        a = compute_features(PointCloud(xyz=rough_cloud), radius=1.0)
        b = compute_features(PointCloud(xyz=rough_cloud @ rot.T), radius=1.0)
        np.testing.assert_array_equal(a.valid, b.valid)
        np.testing.assert_allclose(a.verticality[a.valid],
                                   b.verticality[a.valid], atol=1e-9)
        np.testing.assert_allclose(a.surface_variation[a.valid],
                                   b.surface_variation[a.valid], atol=1e-9)

    def test_translation_leaves_eigenvalues(self, rough_cloud):
        index_a = NeighborIndex(rough_cloud)
        index_b = NeighborIndex(rough_cloud + np.array([100.0, -50.0, 7.0]))
        fa = local_frame(index_a, rough_cloud[0], radius=1.5)
        fb = local_frame(index_b, rough_cloud[0] + [100, -50, 7], radius=1.5)
        np.testing.assert_allclose(fa.eigenvalues, fb.eigenvalues, atol=1e-9)
