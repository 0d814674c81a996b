import math

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import flat_labeled, make_field, make_labeled
from terrasafe.heightfield import (CameraPose, CameraSamplingError,
                                   build_heightfield, camera_rays,
                                   render_pair, sample_camera)
from terrasafe.kernels import march_py


class TestBuildHeightfield:
    def test_flat_cloud(self):
        lab = flat_labeled(extent=10, spacing=0.25, z=2.0)
        field = build_heightfield(lab, cell=0.5)
        assert np.allclose(field.elevation[field.valid], 2.0)
        assert field.valid.all()

    def test_upper_surface_rule(self):
        lab = flat_labeled(extent=4, spacing=0.5, z=0.0)
        stacked = np.vstack([lab.base.xyz,
                             lab.base.xyz + np.array([0, 0, 3.0])])
        field = build_heightfield(make_labeled(stacked), cell=1.0)
        assert np.allclose(field.elevation[field.valid], 3.0)

    def test_matches_brute_force_max(self):
        rng = np.random.default_rng(12)
        xyz = rng.uniform(0, 10, (4000, 3))
        lab = make_labeled(xyz)
        cell = 0.5
        field = build_heightfield(lab, cell=cell, fill_holes=False)
        cols = np.minimum(((xyz[:, 0] - field.origin[0]) / cell).astype(int),
                          field.shape[1] - 1)
        rows = np.minimum(((xyz[:, 1] - field.origin[1]) / cell).astype(int),
                          field.shape[0] - 1)
        for r in range(field.shape[0]):
            for c in range(field.shape[1]):
                member = (rows == r) & (cols == c)
                if member.any():
                    assert field.valid[r, c]
                    assert field.elevation[r, c] == xyz[member, 2].max()
                else:
                    assert not field.valid[r, c]

    def test_cell_larger_than_extent(self):
        lab = flat_labeled(extent=2, spacing=0.5)
        with pytest.raises(ValueError, match="extent"):
            build_heightfield(lab, cell=5.0)

    def test_hole_fill(self):
        lab = flat_labeled(extent=10, spacing=1.0, z=1.0)
        # knock out the points of one interior cell
        keep = ~((lab.base.xyz[:, 0] == 5.0) & (lab.base.xyz[:, 1] == 5.0))
        sub = make_labeled(lab.base.xyz[keep])
        field = build_heightfield(sub, cell=1.0, fill_holes=True)
        assert field.valid.all()
        assert np.allclose(field.elevation, 1.0)


class TestSampleCamera:
    def test_degenerate_ranges_nadir(self, flat_field):
        pose = sample_camera(flat_field, 0, h_min=10, h_max=10, d_max=0.0)
        np.testing.assert_allclose(
            pose.position, pose.look_at + [0, 0, 10], atol=1e-12)
        assert pose.deflection == 0.0
        assert pose.height_above_terrain == 10.0

    def test_bounds_hold_for_1000_samples(self, flat_field):
        rng = np.random.default_rng(77)
        d_max = math.radians(45)
        for _ in range(1000):
            pose = sample_camera(flat_field, rng, h_min=5, h_max=20,
                                 d_max=d_max)
            assert 5.0 <= pose.height_above_terrain <= 20.0
            assert 0.0 <= pose.deflection <= d_max
            # look_at sits on a valid terrain cell
            col = int((pose.look_at[0] - flat_field.origin[0])
                      / flat_field.cell)
            row = int((pose.look_at[1] - flat_field.origin[1])
                      / flat_field.cell)
            assert flat_field.valid[row, col]

    def test_seed_determinism(self, flat_field):
        a = sample_camera(flat_field, 123)
        b = sample_camera(flat_field, 123)
        np.testing.assert_array_equal(a.position, b.position)
        np.testing.assert_array_equal(a.look_at, b.look_at)
        assert a.deflection == b.deflection

    def test_no_valid_cells(self):
        field = make_field(np.full((10, 10), np.nan))
        with pytest.raises(CameraSamplingError, match="no valid cells"):
            sample_camera(field, 0)

    def test_azimuth_uniformity_chi_square(self, flat_field):
        rng = np.random.default_rng(5)
        azimuths = np.array([
            sample_camera(flat_field, rng, d_max=math.radians(45)).azimuth
            for _ in range(10_000)])
        counts, _edges = np.histogram(azimuths, bins=16,
                                      range=(0, 2 * math.pi))
        assert chisquare(counts).pvalue > 0.001

    def test_pose_row_round_trip(self, flat_field):
        pose = sample_camera(flat_field, 9)
        back = CameraPose.from_row(pose.as_row())
        np.testing.assert_array_equal(back.position, pose.position)
        assert back.deflection == pose.deflection


def nadir_pose(x, y, h, ground=0.0):
    return CameraPose(position=np.array([x, y, ground + h]),
                      look_at=np.array([x, y, ground]),
                      deflection=0.0, height_above_terrain=h)


class TestRenderPair:
    def test_uniform_safe_field_nadir(self, flat_field):
        pose = nadir_pose(10, 10, 8.0)
        sample = render_pair(flat_field, pose, resolution=64)
        assert sample.coverage == 1.0
        np.testing.assert_allclose(sample.mask, 1.0)
        np.testing.assert_allclose(sample.image, 0.5)

    def test_missing_terrain_is_black_and_unsafe(self, flat_field):
        pose = nadir_pose(10, 10, 60.0)  # footprint much wider than field
        sample = render_pair(flat_field, pose, resolution=64)
        assert sample.coverage < 1.0
        miss = sample.mask == 0.0
        assert miss.any()
        assert np.all(sample.image[miss] == 0.0)

    def test_analytic_patch_projection(self):
        # flat field with a safety-0 rectangle aligned to cell boundaries
        cell = 0.25
        n = 160  # 40 m
        safety = np.ones((n, n))
        # patch x in [14, 18], y in [22, 26] (world meters)
        c0, c1 = int(14 / cell), int(18 / cell)
        r0, r1 = int(22 / cell), int(26 / cell)
        safety[r0:r1, c0:c1] = 0.0
        field = make_field(np.zeros((n, n)), cell=cell, safety=safety)
        h = 10.0
        vfov = 60.0
        cx, cy = 17.0, 23.0
        sample = render_pair(field, nadir_pose(cx, cy, h), resolution=512,
                             vfov=vfov)
        dark = sample.mask < 0.5
        rows = np.flatnonzero(dark.any(axis=1))
        cols = np.flatnonzero(dark.any(axis=0))
        half = h * math.tan(math.radians(vfov) / 2)

        def col_of(x):
            return ((x - cx) / half + 1) / 2 * 512 - 0.5

        def row_of(y):
            # +y maps to image up, i.e. decreasing row index
            return (1 - (y - cy) / half) / 2 * 512 - 0.5

        assert abs(cols[0] - col_of(14.0)) <= 1.0
        assert abs(cols[-1] - col_of(18.0)) <= 1.0
        assert abs(rows[0] - row_of(26.0)) <= 1.0
        assert abs(rows[-1] - row_of(22.0)) <= 1.0

    def test_image_equals_mask_when_gray_equals_safety(self):
        rng = np.random.default_rng(3)
        tex = rng.uniform(0, 1, (60, 60))
        elev = 0.2 * np.sin(np.arange(60) / 5.0)[None, :] * np.ones((60, 1))
        field = make_field(elev, cell=0.5, gray=tex, safety=tex)
        pose = CameraPose(position=np.array([15.0, 5.0, 12.0]),
                          look_at=np.array([15.0, 15.0, 0.0]),
                          deflection=0.6, height_above_terrain=12.0)
        sample = render_pair(field, pose, resolution=128)
        np.testing.assert_array_equal(sample.image, sample.mask)

    def test_hit_points_shared_between_image_and_mask(self, flat_field):
        rng = np.random.default_rng(31)
        for _ in range(5):
            pose = sample_camera(flat_field, rng)
            a = render_pair(flat_field, pose, resolution=32, debug=True)
            b = render_pair(flat_field, pose, resolution=32, debug=True)
            np.testing.assert_array_equal(a.hit_t, b.hit_t)
            hit = a.hit_t >= 0
            assert np.isfinite(a.hit_points[hit]).all()
            np.testing.assert_array_equal(a.hit_points[hit],
                                          b.hit_points[hit])

    def test_occlusion_matches_fine_march_oracle(self):
        # tall ridge across the middle; oblique camera behind it
        n = 80
        cell = 0.5
        elev = np.zeros((n, n))
        elev[:, 38:42] = 6.0  # ridge along y at x ~ 19-21 m
        field = make_field(elev, cell=cell)
        pose = CameraPose(position=np.array([5.0, 20.0, 8.0]),
                          look_at=np.array([20.0, 20.0, 6.0]),
                          deflection=math.radians(45),
                          height_above_terrain=8.0)
        res = 48
        sample = render_pair(field, pose, resolution=res, debug=True)
        dirs = camera_rays(pose, res, 60.0)
        fine = march_py.march(
            field.elevation, field.valid.astype(np.uint8),
            field.origin[0], field.origin[1], cell,
            pose.position, dirs,
            np.zeros(len(dirs)), np.full(len(dirs), 100.0),
            cell / 40.0, -1.0, 6.0)
        render_t = sample.hit_t.ravel()
        both = (render_t >= 0) & (fine >= 0)
        agree_flags = ((render_t >= 0) == (fine >= 0)).mean()
        assert agree_flags >= 0.97
        close = np.abs(render_t[both] - fine[both]) <= 2 * cell
        assert close.mean() >= 0.97
        # low ground behind the ridge must be occluded for every pixel
        hits = sample.hit_points.reshape(-1, 3)[render_t >= 0]
        shadow = (hits[:, 0] > 21.5) & (hits[:, 2] < 1.0)
        assert not shadow.any()

    def test_resolution_doubling_keeps_landmark(self):
        cell = 0.25
        n = 160
        safety = np.ones((n, n))
        safety[80:82, 80:82] = 0.0  # small landmark
        field = make_field(np.zeros((n, n)), cell=cell, safety=safety)
        pose = nadir_pose(20.0, 20.0, 10.0)
        lo = render_pair(field, pose, resolution=128)
        hi = render_pair(field, pose, resolution=256)

        def centroid(mask):
            dark = mask < 0.5
            rows, cols = np.nonzero(dark)
            return np.array([rows.mean(), cols.mean()])

        scaled = centroid(hi.mask) / 2.0
        assert np.abs(scaled - centroid(lo.mask)).max() <= 0.5

    def test_low_coverage_flagged(self, flat_field):
        pose = CameraPose(position=np.array([200.0, 200.0, 20.0]),
                          look_at=np.array([190.0, 190.0, 0.0]),
                          deflection=0.5, height_above_terrain=20.0)
        sample = render_pair(flat_field, pose, resolution=32)
        assert sample.coverage < 0.01
