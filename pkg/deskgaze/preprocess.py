# -*- coding: utf-8 -*-
"""Network inputs: eye-strip patches, blink gating and sample weights."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import warnings
from collections import namedtuple

import numpy as np
from scipy import ndimage
from scipy.spatial import distance

from .exceptions import (ClampedValueWarning, ConfigError,
                         DegenerateEyeError, DegenerateQuadError,
                         InvalidInputError)

PATCH_SIZE = (128, 512)
REDUCED_PATCH_SIZE = (32, 128)
GRID_CELLS = 30
GAZE_MIN = -0.5
GAZE_MAX = 0.5


class ScreenSpec(namedtuple('ScreenSpec',
                            'width_px height_px width_cm height_cm')):
    """Screen resolution and physical size."""

    __slots__ = ()

    def __new__(cls, width_px, height_px, width_cm, height_cm):
        """Validate that every dimension is positive."""
        self = super(ScreenSpec, cls).__new__(
            cls, int(width_px), int(height_px), float(width_cm),
            float(height_cm))
        if min(self) <= 0:
            raise InvalidInputError(
                'screen dimensions must be positive, got {0}'
                .format(tuple(self)))
        return self

    def to_dict(self):
        """Return a JSON-serializable dict."""
        return dict(self._asdict())

    @classmethod
    def from_dict(cls, data):
        """Build a screen spec from :meth:`to_dict` output."""
        return cls(data['width_px'], data['height_px'], data['width_cm'],
                   data['height_cm'])


class GateConfig(object):
    """Blink threshold and eye-strip geometry.

    :param blink_threshold: mean EAR below which a frame is suppressed
    :param quad_height: half-height of the eye strip as a fraction of the
        outer-corner distance
    :param patch_size: (height, width) of the eye patch in pixels
    """

    def __init__(self, blink_threshold=0.2, quad_height=0.35,
                 patch_size=PATCH_SIZE):
        """Validate and store the gate parameters."""
        self.blink_threshold = float(blink_threshold)
        self.quad_height = float(quad_height)
        self.patch_size = tuple(int(s) for s in patch_size)
        if self.blink_threshold < 0 or self.quad_height <= 0 or \
                len(self.patch_size) != 2 or min(self.patch_size) < 2:
            raise ConfigError('invalid gate configuration')

    def to_dict(self):
        """Return the parameters as a dict."""
        return {'blink_threshold': self.blink_threshold,
                'quad_height': self.quad_height,
                'patch_size': list(self.patch_size)}

    @classmethod
    def from_dict(cls, data):
        """Build a config, rejecting unknown keys."""
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ConfigError(
                'unknown gate keys: {0}'.format(sorted(unknown)))
        return cls(**dict((str(k), v) for k, v in data.items()))


class EyePatch(object):
    """Upright eye-strip image, H x W x 3 RGB in [0, 1]."""

    def __init__(self, pixels, frame_id=None):
        """Validate and store the pixels."""
        pixels = np.asarray(pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise InvalidInputError(
                'patch must be H x W x 3, got {0}'.format(pixels.shape))
        if pixels.size and (pixels.min() < 0 or pixels.max() > 1):
            raise InvalidInputError('patch values must lie in [0, 1]')
        self.pixels = pixels
        self.frame_id = frame_id

    @property
    def shape(self):
        """Return the pixel array shape."""
        return self.pixels.shape


def ear(eye_ring):
    """Eye aspect ratio of six eyelid landmarks p1..p6.

    :raises DegenerateEyeError: if p1 and p4 coincide
    """
    p = np.asarray(eye_ring, dtype=np.float64)[:, :2]
    horizontal = distance.euclidean(p[0], p[3])
    if not horizontal > 0:
        raise DegenerateEyeError('eye corners p1 and p4 coincide')
    vertical = distance.euclidean(p[1], p[5]) + \
        distance.euclidean(p[2], p[4])
    return vertical / (2.0 * horizontal)


def frame_ears(frame):
    """Return the (left, right) eye aspect ratios of a landmark frame."""
    topo = frame.topology
    return (ear(frame.uv[list(topo.left_eye_ring)]),
            ear(frame.uv[list(topo.right_eye_ring)]))


def blink_gate(left_ear, right_ear, threshold=0.2):
    """Return True when the frame must be suppressed as a blink.

    The mean is compared at 1e-12 resolution, strictly below the threshold.
    """
    return round((left_ear + right_ear) / 2.0, 12) < threshold


def _hartley(points):
    mean = points.mean(axis=0)
    spread = np.sqrt(np.mean(np.sum((points - mean) ** 2, axis=1)))
    if not spread > 0:
        raise DegenerateQuadError('all points coincide')
    s = np.sqrt(2.0) / spread
    return np.array([[s, 0.0, -s * mean[0]],
                     [0.0, s, -s * mean[1]],
                     [0.0, 0.0, 1.0]])


def homography_dlt(src, dst):
    """Direct linear transform mapping ``src`` points onto ``dst`` points.

    Both point sets are Hartley-normalized before the SVD.

    :raises DegenerateQuadError: if the correspondences do not determine a
        unique homography
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.shape[0] < 4:
        raise DegenerateQuadError('need at least 4 matched points')

    T1, T2 = _hartley(src), _hartley(dst)
    a = np.hstack([src, np.ones((len(src), 1))]).dot(T1.T)
    b = np.hstack([dst, np.ones((len(dst), 1))]).dot(T2.T)

    rows = []
    for (x, y, w), (u, v, s) in zip(a, b):
        rows.append([0, 0, 0, -s * x, -s * y, -s * w, v * x, v * y, v * w])
        rows.append([s * x, s * y, s * w, 0, 0, 0, -u * x, -u * y, -u * w])
    _, sv, vt = np.linalg.svd(np.asarray(rows))
    if sv[7] < 1e-9 * sv[0]:
        raise DegenerateQuadError('collinear correspondences')

    H = np.linalg.inv(T2).dot(vt[-1].reshape(3, 3)).dot(T1)
    if abs(H[2, 2]) < 1e-15:
        raise DegenerateQuadError('homography maps a corner to infinity')
    return H / H[2, 2]


def apply_homography(H, points):
    """Map (N, 2) points through a homography."""
    points = np.asarray(points, dtype=np.float64)
    mapped = np.hstack([points, np.ones((len(points), 1))]).dot(H.T)
    return mapped[:, :2] / mapped[:, 2:3]


def eye_strip_quad(frame, quad_height=0.35):
    """Source quad of the eye strip: TL, TR, BR, BL in image pixels."""
    corners = frame.topology.eye_corner_idxs
    a = frame.uv[corners[0]]
    b = frame.uv[corners[3]]
    axis = b - a
    length = np.linalg.norm(axis)
    if not length > 1e-9:
        raise DegenerateQuadError('outer eye corners coincide')
    normal = np.array([-axis[1], axis[0]]) / length
    offset = quad_height * length * normal
    return np.array([a - offset, b - offset, b + offset, a + offset])


def patch_corners(size):
    """Destination corners of a patch of (height, width) pixels."""
    h, w = size
    return np.array([[0.0, 0.0], [w - 1.0, 0.0],
                     [w - 1.0, h - 1.0], [0.0, h - 1.0]])


def warp_patch(image, H, size):
    """Sample a patch through ``H`` (image to patch) bilinearly.

    Integer images are 8-bit and scaled by 1/255; float images are taken
    as is. Samples falling outside the image are zero.
    """
    image = np.asarray(image)
    if np.issubdtype(image.dtype, np.integer):
        image = image / 255.0
    image = image.astype(np.float64)
    h, w = size
    ys, xs = np.mgrid[0:h, 0:w]
    grid = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
    src = apply_homography(np.linalg.inv(H), grid)
    coords = [src[:, 1], src[:, 0]]
    channels = [ndimage.map_coordinates(image[:, :, c], coords, order=1,
                                        mode='constant', cval=0.0)
                for c in range(image.shape[2])]
    return np.clip(np.stack(channels, axis=1).reshape(h, w, -1), 0.0, 1.0)


def eye_patch_homography(image, landmarks, size=PATCH_SIZE,
                         quad_height=0.35):
    """Warp the eye region into an upright, centered strip.

    :param image: H x W x 3 float array in [0, 1] or 8-bit integer array
    :param landmarks: the frame's :class:`~deskgaze.geometry.LandmarkFrame`
    :rtype: :class:`EyePatch`
    """
    quad = eye_strip_quad(landmarks, quad_height)
    H = homography_dlt(quad, patch_corners(size))
    return EyePatch(warp_patch(image, H, size), frame_id=landmarks.frame_id)


def eye_patch_from_frame(image, landmarks, gate=None):
    """:func:`eye_patch_homography` driven by a :class:`GateConfig`."""
    gate = gate or GateConfig()
    return eye_patch_homography(image, landmarks, gate.patch_size,
                                gate.quad_height)


class SampleWeightGrid(object):
    """Inverse-frequency weights over a 30 x 30 grid of normalized gaze."""

    def __init__(self, cells, count, counts=None):
        """Store the weights, the sample count and the per-cell counts."""
        self.cells = np.asarray(cells, dtype=np.float64)
        self.count = int(count)
        self.counts = None if counts is None else np.asarray(counts)
        self.diagnostics = []

    @property
    def shape(self):
        """Return the grid shape."""
        return self.cells.shape

    def to_dict(self):
        """Return a JSON-serializable dict."""
        return {'cells': self.cells.tolist(), 'count': self.count,
                'counts': None if self.counts is None
                else self.counts.tolist()}

    @classmethod
    def from_dict(cls, data):
        """Build a grid from :meth:`to_dict` output."""
        return cls(data['cells'], data['count'], data.get('counts'))


def _clamp_gaze(g, diagnostics=None):
    g = np.asarray(g, dtype=np.float64)
    clamped = np.clip(g, GAZE_MIN, GAZE_MAX)
    if np.any(clamped != g):
        message = 'gaze {0} outside [-0.5, 0.5], clamped'.format(g.tolist())
        warnings.warn(message, ClampedValueWarning)
        if diagnostics is not None:
            diagnostics.append(message)
    return clamped


def cell_index(g, cells=GRID_CELLS):
    """Grid cell (column, row) containing normalized gaze ``g``.

    Bins are half-open [lo, hi) except the last one, which is closed.
    """
    g = np.asarray(g, dtype=np.float64)
    idx = np.floor((g - GAZE_MIN) / (GAZE_MAX - GAZE_MIN) * cells)
    return np.clip(idx, 0, cells - 1).astype(int)


def build_weight_grid(labels, cells=GRID_CELLS):
    """Build inverse-frequency sample weights from gaze labels.

    Non-empty cells are weighted 1 / count and normalized to mean 1; empty
    cells take the largest observed weight.

    :raises InvalidInputError: on an empty label list
    """
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 2)
    if len(labels) == 0:
        raise InvalidInputError('no labels to build a weight grid from')
    diagnostics = []
    labels = _clamp_gaze(labels, diagnostics)

    idx = cell_index(labels, cells)
    counts = np.zeros((cells, cells), dtype=np.int64)
    np.add.at(counts, (idx[:, 0], idx[:, 1]), 1)

    occupied = counts > 0
    weights = np.zeros((cells, cells))
    weights[occupied] = 1.0 / counts[occupied]
    weights[occupied] /= weights[occupied].mean()
    weights[~occupied] = weights[occupied].max()

    grid = SampleWeightGrid(weights, len(labels), counts)
    grid.diagnostics.extend(diagnostics)
    return grid


def weight_for(grid, g):
    """Weight of the cell containing ``g``; out-of-range gaze is clamped."""
    g = _clamp_gaze(g, grid.diagnostics)
    i, j = cell_index(g, grid.cells.shape[0])
    return float(grid.cells[i, j])
