import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panosplat import geometry
from panosplat.errors import CoverageError, GeometryError

from conftest import direction_color, smooth_pano

DIMS = (1024, 2048)


class TestPixelAngles:
    def test_equator_center(self):
        theta, phi = geometry.pixel_to_angles(512, 1024, DIMS)
        assert theta == pytest.approx(np.pi / 2, abs=1e-12)
        assert phi == pytest.approx(0.0, abs=1e-12)

    def test_pole_seam(self):
        theta, phi = geometry.pixel_to_angles(0, 0, DIMS)
        assert theta == 0.0
        assert phi == pytest.approx(np.pi, abs=1e-12)

    def test_quarter_point(self):
        theta, phi = geometry.pixel_to_angles(256, 512, DIMS)
        assert theta == pytest.approx(np.pi / 4, abs=1e-12)
        assert phi == pytest.approx(np.pi / 2, abs=1e-12)

    def test_out_of_range(self):
        with pytest.raises(GeometryError):
            geometry.pixel_to_angles(1024, 0, DIMS)
        with pytest.raises(GeometryError):
            geometry.pixel_to_angles(0, -1, DIMS)

    def test_inverse_examples(self):
        assert geometry.angles_to_pixel(np.pi / 2, 0.0, DIMS) == pytest.approx((512, 1024))
        assert geometry.angles_to_pixel(0.0, np.pi, DIMS) == pytest.approx((0, 0))

    def test_round_trip_bulk(self, rng):
        i = rng.uniform(0, DIMS[0], 10_000)
        j = rng.uniform(0, DIMS[1], 10_000)
        theta, phi = geometry.pixel_to_angles(i, j, DIMS)
        i2, j2 = geometry.angles_to_pixel(theta, phi, DIMS)
        assert np.max(np.abs(i2 - i)) < 0.5
        assert np.max(np.abs(j2 - j)) < 0.5

    @given(st.floats(0, np.pi), st.floats(-np.pi + 1e-9, np.pi))
    @settings(max_examples=200)
    def test_angle_round_trip(self, theta, phi):
        i, j = geometry.angles_to_pixel(theta, phi, DIMS)
        t2, p2 = geometry.pixel_to_angles(min(i, DIMS[0] - 1e-9), j, DIMS)
        assert abs(t2 - theta) < 1e-9 or theta > np.pi - 1e-8
        # longitude is meaningless at the poles
        if 1e-6 < theta < np.pi - 1e-6:
            d = abs(p2 - phi)
            assert min(d, 2 * np.pi - d) < 1e-9

    def test_seam_continuity(self):
        _, phi0 = geometry.pixel_to_angles(100, 0, DIMS)
        _, phi_last = geometry.pixel_to_angles(100, DIMS[1] - 1, DIMS)
        step = (phi_last - phi0) % (2 * np.pi)
        assert step == pytest.approx(2 * np.pi / DIMS[1], rel=1e-9)


class TestUnproject:
    def test_axis_cases(self):
        p = geometry.unproject(512, 1024, 2.0, DIMS)  # theta=pi/2, phi=0
        np.testing.assert_allclose(p, [2, 0, 0], atol=1e-12)
        p = geometry.unproject(0, 300, 1.0, DIMS)  # top pole
        np.testing.assert_allclose(p, [0, 1, 0], atol=1e-12)
        p = geometry.unproject(512, 512, 3.0, DIMS)  # phi=pi/2
        np.testing.assert_allclose(p, [0, 0, 3], atol=1e-12)

    def test_invalid_depth(self):
        with pytest.raises(GeometryError):
            geometry.unproject(10, 10, 0.0, DIMS)
        with pytest.raises(GeometryError):
            geometry.unproject(10, 10, -1.0, DIMS)

    def test_radius_invariant_bulk(self, rng):
        i = rng.uniform(0, DIMS[0], 10_000)
        j = rng.uniform(0, DIMS[1], 10_000)
        d = rng.uniform(0.1, 100.0, 10_000)
        p = geometry.unproject(i, j, d, DIMS)
        np.testing.assert_allclose(np.linalg.norm(p, axis=-1), d, rtol=1e-6)

    def test_project_point_pole_and_axis(self):
        theta, phi, d = geometry.project_point(np.array([0.0, 5.0, 0.0]))
        assert (theta, phi, d) == pytest.approx((0.0, 0.0, 5.0))
        theta, phi, d = geometry.project_point(np.array([1.0, 0.0, 0.0]))
        assert (theta, phi, d) == pytest.approx((np.pi / 2, 0.0, 1.0))

    def test_project_origin_raises(self):
        with pytest.raises(GeometryError):
            geometry.project_point(np.zeros(3))

    def test_project_round_trip(self, rng):
        p = rng.normal(0, 10, (5000, 3))
        p = p[np.linalg.norm(p, axis=1) > 1e-3]
        theta, phi, d = geometry.project_point(p)
        i, j = geometry.angles_to_pixel(theta, phi, DIMS)
        back = geometry.unproject(np.clip(i, 0, DIMS[0] - 1e-9), j, d, DIMS)
        err = np.linalg.norm(back - p, axis=1) / np.linalg.norm(p, axis=1)
        assert np.max(err) < 1e-6


class TestPerspective:
    def test_linear_mapping_substitution(self):
        intr = geometry.CameraIntrinsics(np.pi / 2, np.pi / 2, 2, 2)
        view = geometry.CameraView(intr, yaw=0.0, pitch=0.0)
        # x = 0 exactly: evaluate the formula directly
        x_e = (0.0 * intr.fov_x + 2 * 0.0 + 2 * np.pi) / (4 * np.pi) * 2048
        assert x_e == 1024.0
        y_e, x_grid = geometry.linear_source_coords(view, DIMS)
        # the two columns straddle x=0 symmetrically
        assert np.allclose(x_grid.mean(), 1024.0)

    def test_constant_pano_both_modes(self):
        pano = np.full((64, 128, 3), 0.42)
        intr = geometry.CameraIntrinsics(np.pi / 2, np.pi / 2, 32, 32)
        view = geometry.CameraView(intr, yaw=1.0, pitch=0.3)
        for mode in ("gnomonic", "linear"):
            img = geometry.sample_perspective(pano, view, mode=mode)
            np.testing.assert_allclose(img, 0.42, atol=1e-12)

    def test_gnomonic_center_pixel(self):
        pano = smooth_pano(512)
        intr = geometry.CameraIntrinsics(np.pi / 2, np.pi / 2, 512, 512)
        for yaw, pitch in [(0.0, 0.0), (2.1, 0.0), (-1.0, 0.0)]:
            view = geometry.CameraView(intr, yaw=yaw, pitch=pitch)
            img = geometry.sample_perspective(pano, view)
            center = img[256, 256]
            expected = direction_color(view.forward())
            assert np.max(np.abs(center - expected)) < 1 / 255

    def test_gnomonic_matches_direct_pinhole_render(self):
        # pano rendered from a smooth direction-colored world; a pinhole
        # render of the same world is the independent reference
        pano = smooth_pano(256)
        intr = geometry.CameraIntrinsics(np.pi / 2, np.pi / 2, 128, 128)
        for yaw, pitch in [(0.5, 0.2), (3.0, -0.7), (0.0, 1.2)]:
            view = geometry.CameraView(intr, yaw=yaw, pitch=pitch)
            sampled = geometry.sample_perspective(pano, view)
            direct = direction_color(view.pixel_rays())
            assert np.mean(np.abs(sampled - direct)) < 2 / 255

    def test_linear_gnomonic_center_agreement_pose(self):
        # the printed linear mapping coincides with the pinhole ray only at
        # yaw=0, pitch=pi/6; verify agreement there
        pano = smooth_pano(512)
        intr = geometry.CameraIntrinsics(np.pi / 2, np.pi / 2, 512, 512)
        view = geometry.CameraView(intr, yaw=0.0, pitch=np.pi / 6)
        a = geometry.sample_perspective(pano, view, mode="gnomonic")
        b = geometry.sample_perspective(pano, view, mode="linear")
        assert np.max(np.abs(a[256, 256] - b[256, 256])) < 2 / 255


class TestProjectMask:
    def test_all_ones_and_zeros(self):
        intr = geometry.CameraIntrinsics(np.pi / 2, np.pi / 2, 64, 64)
        view = geometry.CameraView(intr, yaw=0.4, pitch=-0.2)
        ones = geometry.project_mask(np.ones((64, 128), dtype=np.uint8), view)
        zeros = geometry.project_mask(np.zeros((64, 128), dtype=np.uint8), view)
        assert ones.all() and ones.dtype == np.uint8
        assert not zeros.any()

    def test_half_sphere_fraction(self):
        # mask covers longitudes phi > 0; view centered on the boundary
        H, W = 256, 512
        j = np.arange(W)
        phi = -2 * np.pi * j / W + np.pi
        mask = np.tile((phi > 0).astype(np.uint8), (H, 1))
        intr = geometry.CameraIntrinsics(np.pi / 2, np.pi / 2, 128, 128)
        view = geometry.CameraView(intr, yaw=0.0, pitch=0.0)
        out = geometry.project_mask(mask, view)
        # brute-force oracle: count rays with positive longitude
        theta, phi_r = geometry.angles_from_direction(view.pixel_rays())
        frac_oracle = np.mean(phi_r > 0)
        assert abs(out.mean() - 0.5) < 0.05
        assert abs(out.mean() - frac_oracle) < 0.02

    def test_dim_mismatch(self):
        intr = geometry.CameraIntrinsics(np.pi / 2, np.pi / 2, 8, 8)
        view = geometry.CameraView(intr, 0.0, 0.0)
        with pytest.raises(GeometryError):
            geometry.project_mask(np.ones((4, 4, 3)), view)


def _independent_frustum_test(view, dirs):
    """Coverage oracle via an explicitly assembled rotation matrix."""
    f = view.forward()
    r = view.right()
    u = np.cross(f, r)
    R = np.stack([r, -u, f])
    cam = dirs @ R.T
    t = np.tan(view.intrinsics.fov_x / 2)
    ty = np.tan(view.intrinsics.fov_y / 2)
    z = cam[..., 2]
    return (z > 0) & (np.abs(cam[..., 0]) <= z * t + 1e-12) & (np.abs(cam[..., 1]) <= z * ty + 1e-12)


class TestRig:
    def test_default_rig_covers(self, rng):
        rig = geometry.default_rig(64, 64)
        assert len(rig) == 26
        # brute force: 20k random directions must each fall in some frustum
        v = rng.normal(size=(20_000, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        covered = np.zeros(len(v), dtype=bool)
        for view in rig.views:
            covered |= _independent_frustum_test(view, v)
        assert covered.all()

    def test_single_view_fails_coverage(self):
        intr = geometry.CameraIntrinsics(np.pi / 2, np.pi / 2, 8, 8)
        with pytest.raises(CoverageError):
            geometry.build_rig(intr, yaw_count=1, pitch_rows=[0.0], include_poles=False)

    def test_four_wide_views_plus_poles(self, rng):
        # brute force decides whether this layout covers; build_rig must agree
        intr = geometry.CameraIntrinsics(2 * np.pi / 3, 2 * np.pi / 3, 8, 8)
        views = []
        for k in range(4):
            views.append(geometry.CameraView(intr, yaw=2 * np.pi * k / 4, pitch=0.0))
        views.append(geometry.CameraView(intr, yaw=0.0, pitch=np.pi / 2))
        views.append(geometry.CameraView(intr, yaw=0.0, pitch=-np.pi / 2))
        v = rng.normal(size=(20_000, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        covered = np.zeros(len(v), dtype=bool)
        for view in views:
            covered |= _independent_frustum_test(view, v)
        brute_force_covers = covered.all()
        try:
            geometry.build_rig(intr, yaw_count=4, pitch_rows=[0.0], include_poles=True)
            rig_covers = True
        except CoverageError:
            rig_covers = False
        assert rig_covers == brute_force_covers

    def test_shared_intrinsics_enforced(self):
        a = geometry.CameraIntrinsics(np.pi / 2, np.pi / 2, 8, 8)
        b = geometry.CameraIntrinsics(np.pi / 3, np.pi / 3, 8, 8)
        with pytest.raises(GeometryError):
            geometry.CameraRig((geometry.CameraView(a, 0, 0), geometry.CameraView(b, 1, 0)))
