# -*- coding: utf-8 -*-
"""Unit tests for eye patches, blink gating and sample weights."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import unittest
import warnings

import numpy as np
from scipy.spatial.transform import Rotation

from deskgaze import preprocess
from deskgaze.exceptions import (ClampedValueWarning, ConfigError,
                                 DegenerateEyeError, DegenerateQuadError,
                                 InvalidInputError)
from deskgaze.headpose import HeadPose
from deskgaze.simulator import (SyntheticFaceSpec, SyntheticScene,
                                render_scene, roll_pose)

EYE = np.array([[0.0, 0.0], [1.0, -1.0], [3.0, -1.0],
                [4.0, 0.0], [3.0, 1.0], [1.0, 1.0]])


def scene(pose=None, blink=False, image_size=(640, 480)):
    """A frontal synthetic scene at 50 cm."""
    pose = pose or HeadPose(np.eye(3), [0.0, 0.0, 50.0])
    return SyntheticScene(SyntheticFaceSpec(3), pose, blink=blink,
                          image_size=image_size)


class TestEyeAspectRatio(unittest.TestCase):
    """Test the eye aspect ratio and the blink gate."""

    def test_known_value(self):
        """Test EAR of a hand-made eye."""
        self.assertAlmostEqual(preprocess.ear(EYE), 0.5)

    def test_similarity_invariance(self):
        """Test that rotation, scale and shift leave EAR unchanged."""
        rng = np.random.default_rng(0)
        for _ in range(20):
            angle = rng.uniform(0, 2 * np.pi)
            c, s = np.cos(angle), np.sin(angle)
            R = np.array([[c, -s], [s, c]])
            moved = rng.uniform(0.1, 10) * EYE.dot(R.T) + rng.normal(size=2)
            self.assertAlmostEqual(preprocess.ear(moved),
                                   preprocess.ear(EYE), places=9)

    def test_degenerate_eye(self):
        """Test that coincident corners raise."""
        eye = EYE.copy()
        eye[3] = eye[0]
        with self.assertRaises(DegenerateEyeError):
            preprocess.ear(eye)

    def test_gate_boundary(self):
        """Test that the gate is strict at the threshold."""
        self.assertFalse(preprocess.blink_gate(0.19, 0.21, 0.2))
        self.assertTrue(preprocess.blink_gate(0.19, 0.20, 0.2))
        self.assertFalse(preprocess.blink_gate(0.3, 0.3))

    def test_synthetic_blink(self):
        """Test that rendered closed lids are gated and open ones pass."""
        frame, _, _ = render_scene(scene())
        left, right = preprocess.frame_ears(frame)
        self.assertAlmostEqual(left, 0.3, places=6)
        self.assertFalse(preprocess.blink_gate(left, right))

        frame, _, _ = render_scene(scene(blink=True))
        self.assertTrue(preprocess.blink_gate(*preprocess.frame_ears(frame)))


class TestHomography(unittest.TestCase):
    """Test the DLT homography and the eye patch warp."""

    def test_maps_corners(self):
        """Test that the four correspondences are reproduced."""
        src = np.array([[10.0, 20.0], [60.0, 25.0], [58.0, 40.0],
                        [12.0, 38.0]])
        dst = preprocess.patch_corners((32, 128))
        H = preprocess.homography_dlt(src, dst)
        np.testing.assert_allclose(preprocess.apply_homography(H, src), dst,
                                   atol=1e-6)

    def test_degenerate(self):
        """Test that collinear or coincident points raise."""
        line = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        with self.assertRaises(DegenerateQuadError):
            preprocess.homography_dlt(line,
                                      preprocess.patch_corners((4, 4)))
        with self.assertRaises(DegenerateQuadError):
            preprocess.homography_dlt(np.zeros((4, 2)),
                                      preprocess.patch_corners((4, 4)))
        with self.assertRaises(DegenerateQuadError):
            preprocess.homography_dlt(line[:3], line[:3])

    def test_frontal_is_scale_and_shift(self):
        """Test that level, centred eyes give an axis-aligned map."""
        frame, _, _ = render_scene(scene())
        quad = preprocess.eye_strip_quad(frame)
        H = preprocess.homography_dlt(
            quad, preprocess.patch_corners((32, 128)))
        self.assertAlmostEqual(H[0, 1], 0.0, places=6)
        self.assertAlmostEqual(H[1, 0], 0.0, places=6)
        np.testing.assert_allclose(H[2, :2], 0.0, atol=1e-6)

    def test_roll_invariance(self):
        """Test that a 30 degree roll yields the same upright patch."""
        base = scene()
        rolled = scene(roll_pose(base.pose, 30.0))
        patches = []
        for s in (base, rolled):
            frame, image, _ = render_scene(s)
            patches.append(preprocess.eye_patch_homography(
                image, frame, preprocess.REDUCED_PATCH_SIZE).pixels)
        self.assertLess(np.mean(np.abs(patches[0] - patches[1])), 0.02)

    def test_patch_shape_and_scaling(self):
        """Test the patch shape and 8-bit input scaling."""
        frame, image, _ = render_scene(scene())
        patch = preprocess.eye_patch_from_frame(
            image, frame, preprocess.GateConfig(patch_size=(16, 64)))
        self.assertEqual(patch.shape, (16, 64, 3))
        eight_bit = preprocess.eye_patch_from_frame(
            np.round(image * 255).astype(np.uint8), frame,
            preprocess.GateConfig(patch_size=(16, 64)))
        np.testing.assert_allclose(eight_bit.pixels, patch.pixels,
                                   atol=1.0 / 255)

    def test_float_highlight_is_not_rescaled(self):
        """Test that a float pixel above 1.0 leaves the scaling alone."""
        frame, image, _ = render_scene(scene())
        cfg = preprocess.GateConfig(patch_size=(16, 64))
        patch = preprocess.eye_patch_from_frame(image, frame, cfg)
        highlighted = np.array(image, dtype=np.float64)
        highlighted[0, 0, 0] = 1.05
        np.testing.assert_array_equal(
            preprocess.eye_patch_from_frame(highlighted, frame, cfg).pixels,
            patch.pixels)

    def test_patch_validation(self):
        """Test that malformed patches are rejected."""
        with self.assertRaises(InvalidInputError):
            preprocess.EyePatch(np.zeros((4, 4)))
        with self.assertRaises(InvalidInputError):
            preprocess.EyePatch(np.full((4, 4, 3), 2.0))


class TestWeightGrid(unittest.TestCase):
    """Test inverse-frequency sample weights."""

    def test_matches_recount(self):
        """Test weights against a direct recount of the labels."""
        rng = np.random.default_rng(5)
        labels = np.clip(rng.normal(0, 0.15, (400, 2)), -0.5, 0.5)
        grid = preprocess.build_weight_grid(labels)
        self.assertEqual(grid.shape, (30, 30))
        self.assertEqual(grid.count, 400)

        cells = np.minimum(((labels + 0.5) * 30).astype(int), 29)
        counts = {}
        for i, j in cells:
            counts[(i, j)] = counts.get((i, j), 0) + 1
        raw = dict((cell, 1.0 / n) for cell, n in counts.items())
        mean = np.mean(list(raw.values()))
        for g in labels[:50]:
            i, j = np.minimum(((g + 0.5) * 30).astype(int), 29)
            self.assertAlmostEqual(preprocess.weight_for(grid, g),
                                   raw[(i, j)] / mean)

    def test_mean_and_empty_cells(self):
        """Test that occupied weights average 1, empty cells take the max."""
        labels = [[0.0, 0.0]] * 3 + [[0.2, 0.2]]
        grid = preprocess.build_weight_grid(labels)
        occupied = grid.counts > 0
        self.assertAlmostEqual(grid.cells[occupied].mean(), 1.0)
        self.assertAlmostEqual(grid.cells[~occupied].min(),
                               grid.cells[occupied].max())
        self.assertAlmostEqual(preprocess.weight_for(grid, [0.2, 0.2]), 1.5)

    def test_cell_boundaries(self):
        """Test the half-open bins and the closed last bin."""
        np.testing.assert_array_equal(preprocess.cell_index([-0.5, 0.5]),
                                      [0, 29])
        np.testing.assert_array_equal(
            preprocess.cell_index([-0.5 + 1.5 / 30, 0.0]), [1, 15])

    def test_clamps_with_warning(self):
        """Test that out-of-range gaze is clamped and recorded."""
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter('always')
            grid = preprocess.build_weight_grid([[0.7, 0.0], [0.0, 0.0]])
        self.assertTrue(any(issubclass(x.category, ClampedValueWarning)
                            for x in w))
        self.assertEqual(len(grid.diagnostics), 1)
        self.assertEqual(grid.counts[29, 15], 1)

    def test_empty(self):
        """Test that an empty label list raises."""
        with self.assertRaises(InvalidInputError):
            preprocess.build_weight_grid([])

    def test_dict_round_trip(self):
        """Test that a grid survives to_dict and from_dict."""
        grid = preprocess.build_weight_grid([[0.1, 0.1], [0.3, -0.2]])
        again = preprocess.SampleWeightGrid.from_dict(grid.to_dict())
        np.testing.assert_array_equal(again.cells, grid.cells)
        self.assertEqual(again.count, 2)


class TestConfigs(unittest.TestCase):
    """Test screen and gate configuration."""

    def test_screen_validation(self):
        """Test that non-positive screen dimensions raise."""
        with self.assertRaises(InvalidInputError):
            preprocess.ScreenSpec(1920, 0, 53, 30)

    def test_gate_unknown_keys(self):
        """Test that unknown gate keys raise ConfigError."""
        with self.assertRaises(ConfigError):
            preprocess.GateConfig.from_dict({'threshold': 0.2})
        gate = preprocess.GateConfig.from_dict({'blink_threshold': 0.25})
        self.assertEqual(gate.blink_threshold, 0.25)
        self.assertEqual(gate.patch_size, preprocess.PATCH_SIZE)

    def test_rotation_helper_is_proper(self):
        """Test that the rolled pose used above is a valid rotation."""
        pose = roll_pose(HeadPose(np.eye(3), [0, 0, 50.0]), 30.0)
        np.testing.assert_allclose(
            pose.R, Rotation.from_euler('z', 30, degrees=True).as_matrix())
