# -*- coding: utf-8 -*-
"""Tests for the synthetic face generator."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import io
import os
import unittest

import numpy as np

from deskgaze import simulator
from deskgaze.exceptions import InvalidInputError
from deskgaze.headpose import HeadPose, depth_grid_oracle
from deskgaze.tests.misc import TempDirMixin


class TestCanonicalFace(unittest.TestCase):
    """Test the canonical mesh."""

    def test_dimensions(self):
        """Test the 14 cm face width and the 1.2 cm irises."""
        face = simulator.SyntheticFaceSpec()
        self.assertAlmostEqual(face.face_width_cm, 14.0)
        points = face.points
        self.assertEqual(points.shape, (31, 3))
        np.testing.assert_array_equal(points[simulator.NOSE], 0.0)
        for ring in (simulator.LEFT_IRIS, simulator.RIGHT_IRIS):
            iris = points[list(ring)]
            for i in range(2):
                self.assertAlmostEqual(
                    np.linalg.norm(iris[i] - iris[i + 2]), 1.2)

    def test_eye_state_moves_iris(self):
        """Test that the iris ring follows the eye state."""
        base = simulator.canonical_points()
        moved = simulator.canonical_points(iris_offset=(0.3, -0.1))
        ring = list(simulator.LEFT_IRIS)
        np.testing.assert_allclose(moved[ring] - base[ring],
                                   [[0.3, -0.1, 0.0]] * 4, atol=1e-12)
        others = list(simulator.LEFT_EYE)
        np.testing.assert_array_equal(moved[others], base[others])

    def test_textures_differ_by_seed(self):
        """Test that appearance depends on the texture seed."""
        a = simulator.SyntheticFaceSpec(1)
        b = simulator.SyntheticFaceSpec(2)
        self.assertFalse(np.allclose(a.skin, b.skin))


class TestScenes(unittest.TestCase):
    """Test scene validation and rendering."""

    def setUp(self):
        """Draw a pose."""
        self.pose = simulator.random_pose(np.random.default_rng(0))
        self.face = simulator.SyntheticFaceSpec()

    def test_validation(self):
        """Test depth, gaze and noise checks."""
        with self.assertRaises(InvalidInputError):
            simulator.SyntheticScene(self.face,
                                     HeadPose(np.eye(3), [0, 0, 20.0]))
        with self.assertRaises(InvalidInputError):
            simulator.SyntheticScene(self.face, self.pose, gaze=(0.6, 0.0))
        with self.assertRaises(InvalidInputError):
            simulator.SyntheticScene(self.face, self.pose, noise_px=-1)

    def test_landmarks(self):
        """Test the noise-free projection and the relative depth."""
        scene = simulator.SyntheticScene(self.face, self.pose)
        frame = simulator.render_landmarks(scene)
        self.assertEqual(frame.points.shape, (31, 3))
        self.assertEqual(frame.points[simulator.NOSE, 2], 1.0)
        self.assertIs(frame.topology, simulator.SYNTHETIC_TOPOLOGY)

    def test_noise_is_seeded(self):
        """Test that landmark noise depends only on the scene seed."""
        a = simulator.render_landmarks(simulator.SyntheticScene(
            self.face, self.pose, noise_px=1.0, seed=7))
        b = simulator.render_landmarks(simulator.SyntheticScene(
            self.face, self.pose, noise_px=1.0, seed=7))
        clean = simulator.render_landmarks(simulator.SyntheticScene(
            self.face, self.pose))
        np.testing.assert_array_equal(a.points, b.points)
        self.assertFalse(np.allclose(a.uv, clean.uv))

    def test_image(self):
        """Test the rendered image and the ground truth."""
        scene = simulator.SyntheticScene(self.face, self.pose,
                                         gaze=(0.1, -0.2), blink=True)
        frame, image, truth = simulator.render_scene(scene)
        self.assertEqual(image.shape, (240, 320, 3))
        self.assertGreaterEqual(image.min(), 0.0)
        self.assertLessEqual(image.max(), 1.0)
        self.assertTrue(truth.blink)
        np.testing.assert_array_equal(truth.gaze, [0.1, -0.2])
        self.assertEqual(scene.lid, simulator.CLOSED_LID)

    def test_oracle_agrees_with_truth(self):
        """Test the depth grid on true face points within its resolution."""
        rng = np.random.default_rng(3)
        for _ in range(10):
            pose = simulator.random_pose(rng, (45.0, 75.0))
            scene = simulator.SyntheticScene(self.face, pose)
            frame = simulator.render_landmarks(scene)
            z, rmse, t = depth_grid_oracle(frame, scene.points(), pose.R,
                                           scene.intrinsics)
            self.assertLessEqual(abs(z - pose.t[2]), 0.05)
            self.assertLess(rmse, 0.5)

    def test_roll_pose(self):
        """Test that a roll keeps the optical-axis distance."""
        rolled = simulator.roll_pose(self.pose, 30.0)
        self.assertAlmostEqual(rolled.t[2], self.pose.t[2])
        self.assertAlmostEqual(np.linalg.norm(rolled.t[:2]),
                               np.linalg.norm(self.pose.t[:2]))


class TestUsers(unittest.TestCase):
    """Test the per-user gaze mapping."""

    def test_eye_state_inverts_gaze(self):
        """Test that the eye state reproduces an in-range target."""
        user = simulator.SyntheticUser.sample('u00', 3)
        pose = HeadPose(np.eye(3), [2.0, -1.0, 60.0])
        e, g = user.eye_state_for([0.1, 0.2], pose)
        np.testing.assert_allclose(g, [0.1, 0.2], atol=1e-12)
        np.testing.assert_allclose(user.gaze(e, pose), g, atol=1e-12)

    def test_clips_eye_state(self):
        """Test that unreachable targets are clipped and relabelled."""
        user = simulator.SyntheticUser('u00', gain=(0.1, 0.1))
        pose = HeadPose(np.eye(3), [0.0, 0.0, 60.0])
        e, g = user.eye_state_for([0.4, 0.0], pose)
        self.assertEqual(e[0], 1.4)
        self.assertAlmostEqual(g[0], 0.14)

    def test_drift(self):
        """Test the time-dependent bias."""
        user = simulator.SyntheticUser('u00', drift=(0.01, 0.0))
        np.testing.assert_allclose(user.bias_at(10.0), [0.1, 0.0])

    def test_dict_round_trip(self):
        """Test to_dict and from_dict."""
        user = simulator.SyntheticUser.sample('u01', 5, drift_std=0.001)
        again = simulator.SyntheticUser.from_dict(user.to_dict())
        np.testing.assert_array_equal(again.gain, user.gain)
        np.testing.assert_array_equal(again.drift, user.drift)
        self.assertEqual(again.appearance_seed, 5)

    def test_validation(self):
        """Test that empty ids and non-positive gains raise."""
        with self.assertRaises(InvalidInputError):
            simulator.SyntheticUser('')
        with self.assertRaises(InvalidInputError):
            simulator.SyntheticUser('u', gain=(0.0, 1.0))

    def test_grid_targets(self):
        """Test the nine calibration targets."""
        grid = simulator.grid_support_gaze()
        self.assertEqual(grid.shape, (9, 2))
        self.assertEqual(len(set(map(tuple, grid))), 9)


class TestDatasets(TempDirMixin, unittest.TestCase):
    """Test rendered sample lists and dataset files."""

    def test_user_dataset(self):
        """Test ids, patches and labels of one user's samples."""
        user = simulator.make_users(1)[0]
        samples = simulator.make_user_dataset(user, 3, seed=1)
        self.assertEqual([s.sample_id for s in samples],
                         ['u00-0000', 'u00-0001', 'u00-0002'])
        self.assertEqual(samples[0].patch.shape, (32, 128, 3))
        self.assertEqual(samples[0].patch.dtype, np.float32)
        self.assertEqual(samples[2].timestamp, 2.0)
        again = simulator.make_user_dataset(user, 3, seed=1)
        np.testing.assert_array_equal(samples[1].patch, again[1].patch)

    def test_scenes_need_samples(self):
        """Test that n must be positive."""
        with self.assertRaises(InvalidInputError):
            simulator.make_scenes(simulator.SyntheticUser('u'), 0)

    def test_dataset_is_deterministic(self):
        """Test that a seed reproduces the manifest byte for byte."""
        contents = []
        for name in ('a', 'b'):
            out = os.path.join(self.tmp, name)
            path = simulator.write_synthetic_dataset(
                out, n_users=2, samples_per_user=2, patch_size=(16, 64))
            with io.open(path, 'rb') as f:
                contents.append(f.read())
        self.assertEqual(contents[0], contents[1])
