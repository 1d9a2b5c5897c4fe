# -*- coding: utf-8 -*-
"""Unit tests for the pinhole camera math."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import unittest
import warnings

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from deskgaze import geometry
from deskgaze.exceptions import (BehindCameraError, DegenerateFaceError,
                                 DegenerateIrisError,
                                 DefaultIntrinsicsWarning, InvalidInputError)
from deskgaze.headpose import HeadPose
from deskgaze.preprocess import ScreenSpec
from deskgaze.simulator import (SYNTHETIC_TOPOLOGY, SyntheticFaceSpec,
                                SyntheticScene, render_landmarks)

K = geometry.CameraIntrinsics(320.0, 330.0, 160.0, 120.0)


def random_frame(seed, n=31):
    """Return a random UVZ frame with strictly positive z."""
    rng = np.random.default_rng(seed)
    points = np.column_stack([rng.uniform(0, 320, n), rng.uniform(0, 240, n),
                              rng.uniform(0.8, 1.2, n)])
    return geometry.LandmarkFrame(points, SYNTHETIC_TOPOLOGY)


def frontal_frame(t=(0.0, 0.0, 60.0)):
    """Render the canonical face without rotation."""
    scene = SyntheticScene(SyntheticFaceSpec(), HeadPose(np.eye(3), t))
    return render_landmarks(scene)


class TestCameraIntrinsics(unittest.TestCase):
    """Test camera intrinsics validation and defaults."""

    def test_rejects_bad_focal_length(self):
        """Test that non-positive or non-finite values raise."""
        with self.assertRaises(InvalidInputError):
            geometry.CameraIntrinsics(0, 1, 0, 0)
        with self.assertRaises(InvalidInputError):
            geometry.CameraIntrinsics(1, 1, float('nan'), 0)

    def test_default_for(self):
        """Test that the default uses f = width and the image center."""
        K = geometry.CameraIntrinsics.default_for(640, 480)
        self.assertEqual(K, (640.0, 640.0, 320.0, 240.0))
        np.testing.assert_array_equal(K.matrix[2], [0, 0, 1])

    def test_resolve_warns_on_default(self):
        """Test that missing intrinsics fall back with a warning."""
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter('always')
            K, source = geometry.resolve_intrinsics(None, 320, 240)
        self.assertEqual(source, 'default')
        self.assertEqual(K.fx, 320.0)
        self.assertEqual(len(w), 1)
        self.assertTrue(issubclass(w[0].category, DefaultIntrinsicsWarning))

        given_K, source = geometry.resolve_intrinsics(K, 1, 1)
        self.assertIs(given_K, K)
        self.assertEqual(source, 'given')


class TestTopology(unittest.TestCase):
    """Test landmark topology validation."""

    def test_repeated_indices(self):
        """Test that a ring with repeated indices is rejected."""
        with self.assertRaises(InvalidInputError):
            geometry.LandmarkTopology(left_iris=(1, 1, 2, 3))

    def test_ring_lengths(self):
        """Test eye ring, corner and iris ring sizes."""
        with self.assertRaises(InvalidInputError):
            geometry.LandmarkTopology(left_eye_ring=(1, 2, 3, 4, 5))
        with self.assertRaises(InvalidInputError):
            geometry.LandmarkTopology(eye_corner_idxs=(1, 2, 3))
        with self.assertRaises(InvalidInputError):
            geometry.LandmarkTopology(left_iris=(1, 2, 3))

    def test_index_out_of_range(self):
        """Test that a frame too small for the topology is rejected."""
        with self.assertRaises(InvalidInputError):
            geometry.LandmarkFrame(np.ones((20, 3)), SYNTHETIC_TOPOLOGY)

    def test_dict_round_trip(self):
        """Test that a topology survives to_dict and from_dict."""
        topo = geometry.LandmarkTopology.from_dict(
            SYNTHETIC_TOPOLOGY.to_dict())
        self.assertEqual(topo, SYNTHETIC_TOPOLOGY)
        self.assertEqual(hash(topo), hash(SYNTHETIC_TOPOLOGY))
        self.assertEqual(geometry.LandmarkTopology().max_index, 477)


class TestLandmarkFrame(unittest.TestCase):
    """Test landmark frame validation."""

    def test_rejects_non_finite(self):
        """Test that NaN coordinates are rejected."""
        points = np.ones((31, 3))
        points[3, 1] = np.nan
        with self.assertRaises(InvalidInputError):
            geometry.LandmarkFrame(points, SYNTHETIC_TOPOLOGY)

    def test_rejects_bad_shape(self):
        """Test that a frame needs (N, 3) points and N >= 7."""
        with self.assertRaises(InvalidInputError):
            geometry.LandmarkFrame(np.ones((31, 2)), SYNTHETIC_TOPOLOGY)
        with self.assertRaises(InvalidInputError):
            geometry.LandmarkFrame(np.ones((6, 3)),
                                   geometry.LandmarkTopology(
                                       nose_idx=0, left_idx=1, right_idx=2,
                                       left_iris=(0, 1), right_iris=(2, 3),
                                       left_eye_ring=range(6),
                                       right_eye_ring=range(6),
                                       eye_corner_idxs=range(4)))

    def test_points_are_read_only(self):
        """Test that stored points cannot be modified."""
        frame = random_frame(0)
        with self.assertRaises(ValueError):
            frame.points[0, 0] = 1.0


class TestProjection(unittest.TestCase):
    """Test reprojection, rigid transforms and projection."""

    def test_round_trip(self):
        """Test that projecting reprojected landmarks restores (u, v)."""
        identity = HeadPose(np.eye(3), np.zeros(3))
        for seed in range(20):
            frame = random_frame(seed)
            uv = geometry.project(geometry.reproject(frame, K), K, identity)
            np.testing.assert_allclose(uv, frame.uv, atol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.2, 5.0), st.floats(-300, 300), st.floats(-300, 300))
    def test_round_trip_property(self, z, u, v):
        """Test the round trip for arbitrary positive depth and pixels."""
        points = np.tile([u, v, z], (31, 1))
        frame = geometry.LandmarkFrame(points, SYNTHETIC_TOPOLOGY)
        uv = geometry.project(geometry.reproject(frame, K), K,
                              HeadPose(np.eye(3), np.zeros(3)))
        np.testing.assert_allclose(uv, frame.uv, atol=1e-9)

    def test_transform_matches_matrix(self):
        """Test the rigid transform against a 3x4 matrix product."""
        rng = np.random.default_rng(4)
        for seed in range(10):
            R = Rotation.random(random_state=seed).as_matrix()
            t = rng.normal(size=3)
            p = rng.normal(size=(9, 3))
            P = np.hstack([R, t[:, None]])
            expected = np.hstack([p, np.ones((9, 1))]).dot(P.T)
            np.testing.assert_allclose(geometry.transform(p, R, t), expected,
                                       atol=1e-9)

    def test_behind_camera(self):
        """Test that a point behind the camera raises."""
        pose = HeadPose(np.eye(3), [0, 0, -1.0])
        with self.assertRaises(BehindCameraError):
            geometry.project(np.zeros((2, 3)), K, pose)

    def test_project_center(self):
        """Test that a point on the optical axis lands on the center."""
        uv = geometry.project(np.zeros((1, 3)), K,
                              HeadPose(np.eye(3), [0, 0, 50.0]))
        np.testing.assert_allclose(uv, [[160.0, 120.0]])


class TestNormalization(unittest.TestCase):
    """Test face normalization and the iris scale prior."""

    def test_normalize_invariance(self):
        """Test invariance to uniform scaling and translation."""
        frame = random_frame(7)
        points = geometry.reproject(frame, K)
        base = geometry.normalize_face(points, SYNTHETIC_TOPOLOGY)
        moved = geometry.FacePoints3D(points.points * 7.3 + [1.0, -2.0, 3.0],
                                      geometry.UNIT_RELATIVE)
        other = geometry.normalize_face(moved, SYNTHETIC_TOPOLOGY)
        np.testing.assert_allclose(other.points, base.points, atol=1e-9)
        self.assertEqual(other.unit, geometry.UNIT_NORMALIZED)
        np.testing.assert_allclose(
            other.points[SYNTHETIC_TOPOLOGY.nose_idx], 0, atol=1e-12)

    def test_degenerate_face(self):
        """Test that coincident left and right landmarks raise."""
        points = np.ones((31, 3))
        with self.assertRaises(DegenerateFaceError):
            geometry.normalize_face(
                geometry.FacePoints3D(points, geometry.UNIT_RELATIVE),
                SYNTHETIC_TOPOLOGY)

    def test_iris_diameter(self):
        """Test the mean opposing-pair distance on a hand-made frame."""
        points = np.zeros((31, 3))
        points[:, 2] = 1.0
        points[17:21, :2] = [[2, 0], [0, 2], [-2, 0], [0, -2]]
        points[21:25, :2] = [[3, 0], [0, 3], [-3, 0], [0, -3]]
        frame = geometry.LandmarkFrame(points, SYNTHETIC_TOPOLOGY)
        self.assertAlmostEqual(
            geometry.iris_diameter_px(frame, SYNTHETIC_TOPOLOGY), 5.0)

    def test_degenerate_iris(self):
        """Test that a zero iris diameter raises."""
        points = np.ones((31, 3))
        points[2, 0] = 0.0
        frame = geometry.LandmarkFrame(points, SYNTHETIC_TOPOLOGY)
        with self.assertRaises(DegenerateIrisError):
            geometry.estimate_face_scale(frame, SYNTHETIC_TOPOLOGY)

    def test_recovers_synthetic_face_width(self):
        """Test that a rendered 14 cm face with 1.2 cm irises gives 14 cm."""
        for t in [(0.0, 0.0, 60.0), (3.0, -2.0, 45.0), (-5.0, 1.0, 80.0)]:
            scale = geometry.estimate_face_scale(frontal_frame(t),
                                                 SYNTHETIC_TOPOLOGY)
            self.assertAlmostEqual(scale, 14.0, delta=0.01)

    def test_metric_scaling(self):
        """Test the unit tags of metric scaling."""
        points = geometry.FacePoints3D(np.ones((3, 3)),
                                       geometry.UNIT_NORMALIZED)
        metric = geometry.scale_to_metric(points, 14.0)
        self.assertEqual(metric.unit, geometry.UNIT_METRIC)
        np.testing.assert_array_equal(metric.points, 14.0)
        with self.assertRaises(InvalidInputError):
            geometry.scale_to_metric(metric, 2.0)
        with self.assertRaises(InvalidInputError):
            geometry.FacePoints3D(np.ones((3, 3)), 'inches')


class TestPogError(unittest.TestCase):
    """Test the point-of-gaze error in centimeters."""

    def test_scalar_and_batch(self):
        """Test one pair and a batch against the screen size."""
        screen = ScreenSpec(1920, 1080, 53.0, 30.0)
        self.assertAlmostEqual(
            geometry.pog_error_cm([0.1, 0.0], [0.0, 0.0], screen), 5.3)
        errors = geometry.pog_error_cm([[0.0, 0.1], [0.1, 0.1]],
                                       [[0.0, 0.0], [0.0, 0.0]], screen)
        np.testing.assert_allclose(errors, [3.0, np.hypot(5.3, 3.0)])
