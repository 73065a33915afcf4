"""Rendering, summed-area tables, window detection and feature extraction."""

import math

import numpy as np
import pytest

from btevolve import bt, sim, vision

ROOM = sim.RoomConfig()
NORTH = math.pi / 2
SOUTH = -math.pi / 2


def features_of(disparity, params=None):
    detection = vision.detect_window(disparity, params)
    eps = (params or vision.VisionParams()).epsilon
    return vision.extract_features(disparity, detection, eps)


class TestIntegralImage:
    def test_hand_worked_table(self):
        table = vision.integral_image(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert table.shape == (3, 3)
        assert np.array_equal(table,
                              [[0, 0, 0], [0, 1, 3], [0, 4, 10]])

    def test_rect_sum_hand_cases(self):
        table = vision.integral_image(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert vision.rect_sum(table, 0, 0, 2, 2) == 10
        assert vision.rect_sum(table, 1, 0, 1, 2) == 6
        assert vision.rect_sum(table, 0, 1, 2, 1) == 7
        assert vision.rect_sum(table, 1, 1, 1, 1) == 4
        assert vision.rect_sum(table, 0, 0, 0, 0) == 0

    def test_rect_sum_matches_direct_sum(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            h = int(rng.integers(1, 40))
            w = int(rng.integers(1, 40))
            image = rng.uniform(0.0, 10.0, size=(h, w))
            table = vision.integral_image(image)
            for _ in range(20):
                x = int(rng.integers(0, w))
                y = int(rng.integers(0, h))
                rw = int(rng.integers(0, w - x + 1))
                rh = int(rng.integers(0, h - y + 1))
                got = vision.rect_sum(table, x, y, rw, rh)
                assert got == pytest.approx(image[y:y + rh, x:x + rw].sum(),
                                            abs=1e-9)

    def test_rect_sum_rejects_out_of_bounds(self):
        table = vision.integral_image(np.ones((4, 6)))
        for rect in ((-1, 0, 2, 2), (0, -1, 2, 2), (5, 0, 2, 2),
                     (0, 3, 2, 2), (0, 0, 7, 1), (0, 0, 1, 5),
                     (0, 0, -1, 1)):
            with pytest.raises(ValueError):
                vision.rect_sum(table, *rect)

    def test_total_in_bottom_right_corner(self):
        rng = np.random.default_rng(8)
        image = rng.uniform(size=(96, 128))
        table = vision.integral_image(image)
        assert table[-1, -1] == pytest.approx(image.sum(), abs=1e-9)
        assert np.all(table[0, :] == 0)
        assert np.all(table[:, 0] == 0)


class TestDisparity:
    def test_one_metre_maps_to_about_6_65_pixels(self):
        got = vision.to_disparity(np.array([[1.0]]))[0, 0]
        assert got == pytest.approx(6.651, abs=1e-3)

    def test_inverse_in_depth(self):
        assert (vision.to_disparity(np.array([[2.0]]))[0, 0]
                == pytest.approx(6.651 / 2, abs=1e-3))

    def test_maximum_at_closest_range(self):
        got = vision.to_disparity(np.array([[vision.CLOSEST_RANGE]]))[0, 0]
        assert got == vision.DISPARITY_MAX


class TestRenderDepth:
    def test_centre_pixel_facing_blank_wall(self):
        depth = vision.render_depth((4.0, 4.0), SOUTH, ROOM)
        assert depth.shape == (96, 128)
        assert depth[48, 64] == pytest.approx(4.0, abs=1e-6)

    def test_centre_ray_passes_through_window_to_back_wall(self):
        # 4 m to the window wall plus the 8 m deep back room
        depth = vision.render_depth((4.0, 4.0), NORTH, ROOM)
        assert depth[48, 64] == pytest.approx(12.0, abs=1e-6)

    def test_wall_pixels_around_window_stay_at_front_distance(self):
        depth = vision.render_depth((4.0, 4.0), NORTH, ROOM)
        # v = 36 looks above the window top edge, still on the front wall
        slope = (48 - 36) / vision.FOCAL_Y
        assert depth[36, 64] == pytest.approx(4.0 * math.hypot(1.0, slope),
                                              abs=1e-6)
        # v = 40 is inside the vertical span, so the ray continues 12 m
        slope = (48 - 40) / vision.FOCAL_Y
        assert depth[40, 64] == pytest.approx(12.0 * math.hypot(1.0, slope),
                                              abs=1e-6)

    def test_edge_column_hits_wall_at_secant_distance(self):
        # leftmost column looks 30 degrees left of the axis
        depth = vision.render_depth((4.0, 4.0), NORTH, ROOM)
        assert depth[48, 0] == pytest.approx(4.0 / math.cos(math.radians(30)),
                                             abs=1e-6)

    def test_floor_pixel_distance(self):
        depth = vision.render_depth((4.0, 4.0), SOUTH, ROOM)
        slope = (48 - 95) / vision.FOCAL_Y
        t = 1.5 / abs(slope)
        assert depth[95, 64] == pytest.approx(math.hypot(t, 1.5), abs=1e-6)

    def test_full_image_matches_closed_form_on_facing_wall(self):
        # from (4, 1) facing south every ray lands on the blank wall, at
        # distance D * sqrt(1 + a^2 + b^2) for pixel ray tangents (a, b);
        # at D = 1 the vertical fan stays between floor and ceiling
        depth = vision.render_depth((4.0, 1.0), SOUTH, ROOM)
        a = (np.arange(128) - 64) / vision.FOCAL_X
        b = (48 - np.arange(96)) / vision.FOCAL_Y
        expected = np.sqrt(1.0 + a[None, :] ** 2 + b[:, None] ** 2)
        assert np.allclose(depth, expected, atol=1e-9)

    def test_all_depths_finite_and_positive(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            pose = (rng.uniform(0.5, 7.5), rng.uniform(0.5, 7.5))
            depth = vision.render_depth(pose, rng.uniform(-math.pi, math.pi),
                                        ROOM)
            assert np.all(np.isfinite(depth))
            assert np.all(depth > 0)

    def test_paired_columns_mirror_on_symmetric_pose(self):
        depth = vision.render_depth((4.0, 2.0), NORTH, ROOM)
        for j in (1, 5, 20, 63):
            assert np.allclose(depth[:, 64 - j], depth[:, 64 + j],
                               rtol=1e-12, atol=0.0)

    def test_window_wall_frames_render_identically(self):
        """One scene expressed against each of the four walls."""
        base = vision.render_depth((3.0, 2.0), 0.3,
                                   sim.RoomConfig(window_offset=1.0))
        others = [
            vision.render_depth((5.0, 6.0), 0.3 - math.pi,
                                sim.RoomConfig(window_wall="south",
                                               window_offset=-1.0)),
            vision.render_depth((2.0, 5.0), 0.3 - math.pi / 2,
                                sim.RoomConfig(window_wall="east",
                                               window_offset=-1.0)),
            vision.render_depth((6.0, 3.0), 0.3 + math.pi / 2,
                                sim.RoomConfig(window_wall="west",
                                               window_offset=1.0)),
        ]
        for other in others:
            assert np.allclose(base, other, atol=1e-9)


class TestDetection:
    def test_aligned_zero_block_scores_zero(self):
        disparity = np.ones((96, 128))
        disparity[32:48, 48:64] = 0.0
        detection = vision.detect_window(disparity)
        assert detection.sigma == 0.0
        assert detection.rect == (48, 32, 16)
        assert detection.x == -0.125

    def test_uniform_map_scores_near_100(self):
        detection = vision.detect_window(np.ones((96, 128)))
        assert detection.sigma == pytest.approx(100.0, abs=1e-3)
        assert detection.sigma < 100.0

    def test_bright_core_clamps_to_100(self):
        # a dark frame dilutes every candidate's border more than its
        # interior, so all raw scores exceed 100 and the best is clamped
        disparity = np.full((24, 24), 1.0)
        disparity[:4, :] = disparity[-4:, :] = 0.001
        disparity[:, :4] = disparity[:, -4:] = 0.001
        detection = vision.detect_window(disparity)
        assert detection.sigma == 100.0

    def test_off_grid_block_found_within_stride(self):
        disparity = np.ones((96, 128))
        disparity[34:50, 50:66] = 0.0
        x, y, side = vision.detect_window(disparity).rect
        assert side == 16
        assert abs(x - 50) <= 4 and abs(y - 34) <= 4

    def test_detected_x_matches_projected_window_centre(self):
        # window centre sits 0.8 m right of the camera axis, 4 m ahead
        disparity = vision.to_disparity(
            vision.render_depth((3.2, 4.0), NORTH, ROOM))
        detection = vision.detect_window(disparity)
        expected = vision.FOCAL_X * (0.8 / 4.0) / 64.0
        assert detection.x == pytest.approx(expected, abs=0.1)
        assert detection.sigma < 60.0

    def test_head_on_window_detected_at_centre(self):
        disparity = vision.to_disparity(
            vision.render_depth((4.0, 4.0), NORTH, ROOM))
        detection = vision.detect_window(disparity)
        assert detection.x == pytest.approx(0.0, abs=0.05)

    def test_larger_scales_win_as_window_grows_closer(self):
        far = vision.detect_window(vision.to_disparity(
            vision.render_depth((4.0, 1.0), NORTH, ROOM))).rect[2]
        near = vision.detect_window(vision.to_disparity(
            vision.render_depth((4.0, 6.5), NORTH, ROOM))).rect[2]
        assert near > far

    def test_no_candidate_fits_tiny_image(self):
        detection = vision.detect_window(np.ones((8, 8)))
        assert detection.sigma == 100.0
        assert detection.rect == (0, 0, 0)
        assert detection.x == 0.0


class TestFeatures:
    def test_sigma_total_matches_closed_form(self):
        depth = vision.render_depth((4.0, 1.0), SOUTH, ROOM)
        feats = features_of(vision.to_disparity(depth))
        a = (np.arange(128) - 64) / vision.FOCAL_X
        b = (48 - np.arange(96)) / vision.FOCAL_Y
        oracle = vision.DISPARITY_COEFF / np.sqrt(
            1.0 + a[None, :] ** 2 + b[:, None] ** 2)
        expected = oracle.sum() / (96 * 128 * vision.DISPARITY_MAX)
        assert feats.Sigma == pytest.approx(expected, abs=1e-9)

    def test_sigma_total_grows_on_approach(self):
        values = []
        for y in (6.5, 5.0, 3.0, 1.0):
            feats = features_of(vision.to_disparity(
                vision.render_depth((4.0, y), SOUTH, ROOM)))
            values.append(feats.Sigma)
        assert values == sorted(values)

    def test_delta_small_on_symmetric_scene(self):
        feats = features_of(vision.to_disparity(
            vision.render_depth((4.0, 4.0), SOUTH, ROOM)))
        assert abs(feats.Delta) < 1e-2

    def test_delta_sign_tracks_nearer_side(self):
        # wall much closer on the left of the camera axis
        feats = features_of(vision.to_disparity(
            vision.render_depth((1.0, 4.0), NORTH, ROOM)))
        assert feats.Delta > 0.05
        feats = features_of(vision.to_disparity(
            vision.render_depth((7.0, 4.0), NORTH, ROOM)))
        assert feats.Delta < -0.05

    def test_ranges_hold_over_random_poses(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            feats = features_of(vision.to_disparity(vision.render_depth(
                (rng.uniform(0.5, 7.5), rng.uniform(0.5, 7.5)),
                rng.uniform(-math.pi, math.pi), ROOM)))
            assert -1.0 <= feats.x <= 1.0
            assert 0.0 <= feats.sigma <= 100.0
            assert 0.0 <= feats.Sigma <= 1.0
            assert -1.0 <= feats.Delta <= 1.0
            assert feats.r == 0.0

    def test_mirrored_map_negates_x_and_delta(self):
        """Left-right flipping the disparity map flips the lateral features
        and preserves the scalar ones."""
        rng = np.random.default_rng(13)
        for _ in range(12):
            disparity = vision.to_disparity(vision.render_depth(
                (rng.uniform(0.5, 7.5), rng.uniform(0.5, 7.5)),
                rng.uniform(-math.pi, math.pi), ROOM))
            mirrored = np.ascontiguousarray(np.fliplr(disparity))
            f = features_of(disparity)
            g = features_of(mirrored)
            assert g.x == pytest.approx(-f.x, abs=1e-9)
            assert g.sigma == pytest.approx(f.sigma, abs=1e-9)
            assert g.Sigma == pytest.approx(f.Sigma, abs=1e-9)
            assert g.Delta == pytest.approx(-f.Delta, abs=1e-9)


class TestFusedSense:
    def test_identical_to_step_by_step_pipeline(self):
        rng = np.random.default_rng(14)
        for _ in range(15):
            pose = (rng.uniform(0.5, 7.5), rng.uniform(0.5, 7.5))
            heading = rng.uniform(-math.pi, math.pi)
            fused = vision.sense(pose, heading, ROOM, 1.5)
            feats = features_of(vision.to_disparity(
                vision.render_depth(pose, heading, ROOM)))
            assert fused.x == feats.x
            assert fused.sigma == feats.sigma
            assert fused.Sigma == feats.Sigma
            assert fused.Delta == feats.Delta

    def test_camera_height_changes_view(self):
        low = vision.sense((4.0, 4.0), NORTH, ROOM, 0.5)
        mid = vision.sense((4.0, 4.0), NORTH, ROOM, 1.5)
        assert low.Sigma != mid.Sigma


class TestPgmExport:
    def test_round_trip(self, tmp_path):
        image = np.array([[0.0, 1.24], [2.51, 3.99]])
        path = tmp_path / "out.pgm"
        vision.write_pgm(image, path, scale=10.0)
        lines = path.read_text().splitlines()
        assert lines[0] == "P2"
        assert lines[1] == "2 2"
        assert lines[2] == "40"
        values = [int(v) for line in lines[3:] for v in line.split()]
        assert values == [0, 12, 25, 40]

    def test_negative_values_floor_at_zero(self, tmp_path):
        path = tmp_path / "neg.pgm"
        vision.write_pgm(np.array([[-5.0, 2.0]]), path)
        assert path.read_text().splitlines()[3] == "0 2"
