# -*- coding: utf-8 -*-
"""Pinhole camera math for facial landmarks.

Conventions: image u grows to the right and v downwards; the camera and face
frames have X to the right, Y down and Z pointing away from the camera.
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import warnings
from collections import namedtuple

import numpy as np
import six

from .exceptions import (BehindCameraError, DegenerateFaceError,
                         DegenerateIrisError, DefaultIntrinsicsWarning,
                         InvalidInputError)

#: standard human iris diameter in centimeters
IRIS_DIAMETER_CM = 1.2

UNIT_RELATIVE = 'relative-reprojected'
UNIT_NORMALIZED = 'normalized'
UNIT_METRIC = 'metric-cm'
_UNITS = (UNIT_RELATIVE, UNIT_NORMALIZED, UNIT_METRIC)


class CameraIntrinsics(namedtuple('CameraIntrinsics', 'fx fy cx cy')):
    """Pinhole intrinsics, focal lengths and principal point in pixels."""

    __slots__ = ()

    def __new__(cls, fx, fy, cx, cy):
        """Validate and build the intrinsics."""
        values = [float(v) for v in (fx, fy, cx, cy)]
        if not all(np.isfinite(values)):
            raise InvalidInputError(
                'intrinsics must be finite, got {0}'.format(values))
        if values[0] <= 0 or values[1] <= 0:
            raise InvalidInputError(
                'focal lengths must be positive, got fx={0} fy={1}'
                .format(values[0], values[1]))
        return super(CameraIntrinsics, cls).__new__(cls, *values)

    @classmethod
    def default_for(cls, width, height):
        """Return the canonical intrinsics used when none are known.

        The focal length equals the image width in pixels and the principal
        point sits at the image center.
        """
        return cls(width, width, width / 2.0, height / 2.0)

    @property
    def matrix(self):
        """Return the 3x3 intrinsics matrix K."""
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def to_dict(self):
        """Return a JSON-serializable dict."""
        return dict(self._asdict())

    @classmethod
    def from_dict(cls, data):
        """Build intrinsics from a dict with fx, fy, cx, cy keys."""
        return cls(data['fx'], data['fy'], data['cx'], data['cy'])


def resolve_intrinsics(intrinsics, width, height):
    """Return ``intrinsics`` or the default for an image size.

    :returns: tuple ``(intrinsics, source)`` where source is ``'given'`` or
        ``'default'``
    """
    if intrinsics is not None:
        return intrinsics, 'given'
    warnings.warn(
        'no camera intrinsics supplied; using f=width={0}px and the image '
        'center'.format(width), DefaultIntrinsicsWarning)
    return CameraIntrinsics.default_for(width, height), 'default'


class LandmarkTopology(object):
    """Landmark indices the geometry needs, declared as data.

    :param nose_idx: index of the nose landmark, origin of the face frame
    :param left_idx: leftmost face landmark
    :param right_idx: rightmost face landmark
    :param left_iris: iris ring of the left eye, in angular order
    :param right_iris: iris ring of the right eye, in angular order
    :param left_eye_ring: six eyelid landmarks p1..p6
    :param right_eye_ring: six eyelid landmarks p1..p6
    :param eye_corner_idxs: left-outer, left-inner, right-inner, right-outer
    """

    _list_fields = ('left_iris', 'right_iris', 'left_eye_ring',
                    'right_eye_ring', 'eye_corner_idxs')

    def __init__(self, nose_idx=4, left_idx=356, right_idx=127,
                 left_iris=(474, 475, 476, 477),
                 right_iris=(469, 470, 471, 472),
                 left_eye_ring=(362, 385, 387, 263, 373, 380),
                 right_eye_ring=(33, 160, 158, 133, 153, 144),
                 eye_corner_idxs=(33, 133, 362, 263)):
        """Build a topology, defaulting to the 468+10 point face mesh."""
        self.nose_idx = int(nose_idx)
        self.left_idx = int(left_idx)
        self.right_idx = int(right_idx)
        self.left_iris = tuple(int(i) for i in left_iris)
        self.right_iris = tuple(int(i) for i in right_iris)
        self.left_eye_ring = tuple(int(i) for i in left_eye_ring)
        self.right_eye_ring = tuple(int(i) for i in right_eye_ring)
        self.eye_corner_idxs = tuple(int(i) for i in eye_corner_idxs)

        for name in self._list_fields:
            values = getattr(self, name)
            if len(set(values)) != len(values):
                raise InvalidInputError(
                    '{0} has repeated indices: {1}'.format(name, values))
        for name in ('left_eye_ring', 'right_eye_ring'):
            if len(getattr(self, name)) != 6:
                raise InvalidInputError(
                    '{0} needs exactly 6 indices'.format(name))
        if len(self.eye_corner_idxs) != 4:
            raise InvalidInputError('eye_corner_idxs needs exactly 4 indices')
        for name in ('left_iris', 'right_iris'):
            ring = getattr(self, name)
            if len(ring) < 2 or len(ring) % 2:
                raise InvalidInputError(
                    '{0} needs an even number of indices'.format(name))

    @property
    def max_index(self):
        """Return the largest referenced landmark index."""
        indices = [self.nose_idx, self.left_idx, self.right_idx]
        for name in self._list_fields:
            indices.extend(getattr(self, name))
        return max(indices)

    def check(self, n_points):
        """Raise if any index is not resolvable in ``n_points`` landmarks."""
        if self.max_index >= n_points:
            raise InvalidInputError(
                'topology references index {0} but the frame has {1} '
                'points'.format(self.max_index, n_points))

    def to_dict(self):
        """Return a JSON-serializable dict."""
        data = {'nose_idx': self.nose_idx,
                'left_idx': self.left_idx,
                'right_idx': self.right_idx}
        for name in self._list_fields:
            data[name] = list(getattr(self, name))
        return data

    @classmethod
    def from_dict(cls, data):
        """Build a topology from :meth:`to_dict` output."""
        return cls(**dict((str(k), v) for k, v in six.iteritems(data)))

    def __eq__(self, other):
        """Compare by declared indices."""
        return (isinstance(other, LandmarkTopology)
                and self.to_dict() == other.to_dict())

    def __ne__(self, other):
        """Negate :meth:`__eq__`."""
        return not self.__eq__(other)

    def __hash__(self):
        """Hash the declared indices."""
        return hash(repr(sorted(self.to_dict().items())))


class LandmarkFrame(object):
    """Image-plane landmarks of one frame.

    :param points: array of shape (N, 3) holding u px, v px and relative z
    :param topology: the :class:`LandmarkTopology` describing the points
    """

    def __init__(self, points, topology, frame_id=None):
        """Validate and store the landmarks."""
        points = np.array(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise InvalidInputError(
                'landmarks must have shape (N, 3), got {0}'
                .format(points.shape))
        if points.shape[0] < 7:
            raise InvalidInputError('a frame needs at least 7 landmarks')
        if not np.all(np.isfinite(points)):
            raise InvalidInputError('landmark coordinates must be finite')
        topology.check(points.shape[0])
        points.setflags(write=False)
        self.points = points
        self.topology = topology
        self.frame_id = frame_id

    @property
    def uv(self):
        """Return the (N, 2) pixel coordinates."""
        return self.points[:, :2]

    def __len__(self):
        """Return the number of landmarks."""
        return self.points.shape[0]


class FacePoints3D(object):
    """3D landmark positions tagged with their unit."""

    def __init__(self, points, unit):
        """Store the points; ``unit`` must be one of the known tags."""
        if unit not in _UNITS:
            raise InvalidInputError('unknown unit tag {0!r}'.format(unit))
        points = np.array(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise InvalidInputError(
                'points must have shape (N, 3), got {0}'.format(points.shape))
        points.setflags(write=False)
        self.points = points
        self.unit = unit

    def __len__(self):
        """Return the number of points."""
        return self.points.shape[0]


def reproject(frame, K):
    """Lift UVZ landmarks to 3D with the pinhole model.

    X = (u - cx) * z / fx and Y = (v - cy) * z / fy, Z = z.

    :rtype: :class:`FacePoints3D` tagged ``relative-reprojected``
    """
    u, v, z = frame.points[:, 0], frame.points[:, 1], frame.points[:, 2]
    xyz = np.stack([(u - K.cx) * z / K.fx,
                    (v - K.cy) * z / K.fy,
                    z], axis=1)
    return FacePoints3D(xyz, UNIT_RELATIVE)


def transform(points, R, t):
    """Apply the rigid transform ``R @ p + t`` to (N, 3) points."""
    return np.asarray(points, dtype=np.float64).dot(np.asarray(R).T) + \
        np.asarray(t, dtype=np.float64)


def project(points, K, pose):
    """Project 3D points through ``pose`` and the pinhole camera.

    :param points: :class:`FacePoints3D` or an (N, 3) array
    :param pose: object with rotation ``R`` and translation ``t``
    :returns: (N, 2) array of pixel coordinates
    :raises BehindCameraError: if a transformed point has Z <= 0
    """
    xyz = getattr(points, 'points', points)
    cam = transform(xyz, pose.R, pose.t)
    if np.any(cam[:, 2] <= 0):
        raise BehindCameraError(
            '{0} point(s) at or behind the camera plane'
            .format(int(np.sum(cam[:, 2] <= 0))))
    return np.stack([K.fx * cam[:, 0] / cam[:, 2] + K.cx,
                     K.fy * cam[:, 1] / cam[:, 2] + K.cy], axis=1)


def normalize_face(points, topo):
    """Center the face on the nose and scale left-right distance to 1.

    :rtype: :class:`FacePoints3D` tagged ``normalized``
    :raises DegenerateFaceError: if left and right landmarks coincide
    """
    xyz = points.points
    width = np.linalg.norm(xyz[topo.left_idx] - xyz[topo.right_idx])
    if not width > 0:
        raise DegenerateFaceError('left and right landmarks coincide')
    return FacePoints3D((xyz - xyz[topo.nose_idx]) / width, UNIT_NORMALIZED)


def iris_diameter_px(frame, topo):
    """Mean pixel iris diameter over both eyes.

    Each iris diameter is the mean distance between opposing ring landmarks.
    """
    diameters = []
    for ring in (topo.left_iris, topo.right_iris):
        uv = frame.uv[list(ring)]
        half = len(ring) // 2
        diameters.append(
            np.mean(np.linalg.norm(uv[:half] - uv[half:], axis=1)))
    return float(np.mean(diameters))


def estimate_face_scale(frame, topo, alpha_cm=IRIS_DIAMETER_CM):
    """Return the face width in cm implied by a fixed iris diameter.

    Multiplying normalized points by the result yields metric points.

    :raises DegenerateIrisError: if the iris pixel diameter is not positive
    """
    d_iris = iris_diameter_px(frame, topo)
    if not d_iris > 0:
        raise DegenerateIrisError(
            'iris diameter must be positive, got {0}'.format(d_iris))
    d_w = np.linalg.norm(frame.uv[topo.left_idx] - frame.uv[topo.right_idx])
    return float(alpha_cm * d_w / d_iris)


def scale_to_metric(points, scale_cm):
    """Turn normalized points into metric-cm points."""
    if points.unit != UNIT_NORMALIZED:
        raise InvalidInputError(
            'expected normalized points, got {0}'.format(points.unit))
    return FacePoints3D(points.points * scale_cm, UNIT_METRIC)


def pog_error_cm(g_pred, g_true, screen):
    """Point-of-gaze error in centimeters between normalized gaze values."""
    delta = np.asarray(g_pred, dtype=np.float64) - \
        np.asarray(g_true, dtype=np.float64)
    size = np.array([screen.width_cm, screen.height_cm])
    error = np.linalg.norm(delta * size, axis=-1)
    return float(error) if np.ndim(error) == 0 else error
