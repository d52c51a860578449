import numpy as np
import pytest

from panosplat import lift
from panosplat.errors import MissingDepthError


class TestPanoToPoints:
    def test_single_pixel_axis_case(self):
        H, W = 1024, 2048
        rgb = np.zeros((H, W, 3))
        rgb[512, 1024] = [0.2, 0.4, 0.6]
        depth = np.zeros((H, W))
        depth[512, 1024] = 2.0
        mask = np.zeros((H, W), dtype=np.uint8)
        mask[512, 1024] = 1
        pts = lift.pano_to_points(rgb, depth, mask)
        assert len(pts) == 1
        np.testing.assert_allclose(pts.positions[0], [2, 0, 0], atol=1e-12)
        np.testing.assert_allclose(pts.colors[0], [0.2, 0.4, 0.6])
        assert tuple(pts.pixels[0]) == (512, 1024)

    def test_empty_mask(self):
        pts = lift.pano_to_points(np.zeros((8, 16, 3)), np.ones((8, 16)), np.zeros((8, 16)))
        assert len(pts) == 0

    def test_full_mask_count_and_norms(self, rng):
        H, W = 64, 128
        rgb = rng.random((H, W, 3))
        depth = 1.0 + rng.random((H, W))
        pts = lift.pano_to_points(rgb, depth, np.ones((H, W)))
        assert len(pts) == H * W
        # brute-force pixel loop oracle on a subsample
        for k in range(0, H * W, 997):
            i, j = pts.pixels[k]
            assert np.linalg.norm(pts.positions[k]) == pytest.approx(depth[i, j], rel=1e-12)

    def test_stride_subsampling(self):
        H, W = 16, 32
        pts = lift.pano_to_points(np.zeros((H, W, 3)), np.ones((H, W)), np.ones((H, W)), stride=2)
        assert len(pts) == (H // 2) * (W // 2)
        assert (pts.pixels % 2 == 0).all()

    def test_missing_depth_error(self):
        depth = np.ones((8, 16))
        depth[4, 7] = 0.0
        with pytest.raises(MissingDepthError) as ei:
            lift.pano_to_points(np.zeros((8, 16, 3)), depth, np.ones((8, 16)))
        assert (4, 7) in ei.value.pixels

    def test_row_major_order(self):
        mask = np.zeros((4, 8), dtype=np.uint8)
        mask[2, 5] = mask[1, 3] = mask[2, 1] = 1
        pts = lift.pano_to_points(np.zeros((4, 8, 3)), np.ones((4, 8)), mask)
        assert [tuple(p) for p in pts.pixels] == [(1, 3), (2, 1), (2, 5)]


class TestPointsToSplats:
    def _one_point(self, depth):
        return lift.LayerPoints(
            np.array([[depth, 0.0, 0.0]]), np.array([[0.5, 0.5, 0.5]]),
            np.array([[0, 0]]),
        )

    def test_scale_formula(self):
        splats = lift.points_to_splats(self._one_point(2.0), pano_width=2048, stride=1)
        scale = np.exp(splats.log_scales[0, 0])
        assert scale == pytest.approx(2.0 * 2 * np.pi / 2048, rel=1e-12)
        assert scale == pytest.approx(0.00614, rel=1e-2)

    def test_identity_rotation_and_opacity(self, rng):
        pts = lift.LayerPoints(rng.normal(size=(10, 3)) + 5, rng.random((10, 3)),
                               np.zeros((10, 2), np.int64))
        splats = lift.points_to_splats(pts, pano_width=512)
        np.testing.assert_array_equal(splats.rotations, np.tile([1, 0, 0, 0], (10, 1)))
        sigmoid = 1 / (1 + np.exp(-splats.opacity_logits))
        np.testing.assert_allclose(sigmoid, 0.7, atol=1e-12)

    def test_scale_linear_in_depth(self):
        s1 = lift.points_to_splats(self._one_point(2.0), 1024)
        s2 = lift.points_to_splats(self._one_point(4.0), 1024)
        ratio = np.exp(s2.log_scales[0, 0] - s1.log_scales[0, 0])
        assert ratio == pytest.approx(2.0, rel=1e-12)

    def test_count_conservation(self, rng):
        pts = lift.LayerPoints(rng.normal(size=(37, 3)) + 4, rng.random((37, 3)),
                               np.zeros((37, 2), np.int64))
        assert len(lift.points_to_splats(pts, 256)) == 37


class TestPly:
    def test_round_trip(self, tmp_path, rng):
        layers = {
            1: lift.LayerPoints(rng.normal(size=(20, 3)), rng.random((20, 3)),
                                np.zeros((20, 2), np.int64)),
            3: lift.LayerPoints(rng.normal(size=(5, 3)), rng.random((5, 3)),
                                np.zeros((5, 2), np.int64)),
        }
        path = tmp_path / "cloud.ply"
        lift.save_ply(path, layers)
        pos, col, lay = lift.load_ply(path)
        assert len(pos) == 25
        np.testing.assert_allclose(pos[:20], layers[1].positions, atol=1e-6)
        assert (lay[:20] == 1).all() and (lay[20:] == 3).all()
        assert np.max(np.abs(col[:20] - layers[1].colors)) <= 0.5 / 255
