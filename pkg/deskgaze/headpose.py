# -*- coding: utf-8 -*-
"""Metric head-pose translation from monocular landmarks.

The rotation comes from the landmark provider and is scale invariant; only
the metric translation is recovered. Depth is refined iteratively from
per-landmark expand/contract votes between observed and projected points,
and after every depth change the XY translation is recomputed so that the
projected nose stays on the observed nose (similar triangles).
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

from collections import namedtuple

import numpy as np

from . import geometry
from .exceptions import BehindCameraError, ConfigError, InvalidInputError

#: residual below which a landmark pair casts no vote, in pixels
MIN_SEPARATION_PX = 1e-9

STEP_PROCRUSTES = 'procrustes'
STEP_LITERAL = 'literal'


class HeadPose(object):
    """Rotation plus metric translation of the head in camera coordinates.

    :param R: 3x3 rotation matrix
    :param t: translation in centimeters
    """

    def __init__(self, R, t, check=True):
        """Validate and store the pose."""
        R = np.array(R, dtype=np.float64).reshape(3, 3)
        t = np.array(t, dtype=np.float64).reshape(3)
        if check:
            if not np.allclose(R.T.dot(R), np.eye(3), atol=1e-6):
                raise InvalidInputError('R is not orthonormal')
            if abs(np.linalg.det(R) - 1.0) > 1e-6:
                raise InvalidInputError('R is not a proper rotation')
        R.setflags(write=False)
        t.setflags(write=False)
        self.R = R
        self.t = t

    def features(self):
        """Return the 12 values [R | t] flattened row by row."""
        return np.concatenate([self.R.reshape(-1), self.t])

    def to_dict(self):
        """Return a JSON-serializable dict."""
        return {'R': self.R.tolist(), 't': self.t.tolist()}

    @classmethod
    def from_dict(cls, data):
        """Build a pose from :meth:`to_dict` output."""
        return cls(data['R'], data['t'])

    def __repr__(self):
        """Show the translation, the part this module estimates."""
        return 'HeadPose(t=[{0:.3f}, {1:.3f}, {2:.3f}] cm)'.format(*self.t)


class SolverConfig(object):
    """Parameters of the iterative depth refinement.

    :param z0: initial depth in cm
    :param beta: scaling factor of the vote step
    :param delta_max: largest allowed depth change per iteration, cm
    :param z_stop: stop once the applied depth change is below this, cm
    :param max_iters: iteration cap
    :param step_mode: ``'procrustes'`` scales the vote by the depth implied
        by the Procrustes scale of the landmark sets; ``'literal'`` applies
        the clipped vote step as is
    """

    def __init__(self, z0=60.0, beta=0.1, delta_max=5.0, z_stop=0.25,
                 max_iters=10, step_mode=STEP_PROCRUSTES):
        """Validate and store the solver parameters."""
        self.z0 = float(z0)
        self.beta = float(beta)
        self.delta_max = float(delta_max)
        self.z_stop = float(z_stop)
        self.max_iters = int(max_iters)
        self.step_mode = step_mode

        if min(self.z0, self.beta, self.delta_max, self.z_stop) <= 0 \
                or self.max_iters < 1:
            raise ConfigError('solver parameters must be positive')
        if self.z_stop >= self.delta_max:
            raise ConfigError('z_stop must be smaller than delta_max')
        if step_mode not in (STEP_PROCRUSTES, STEP_LITERAL):
            raise ConfigError('unknown step_mode {0!r}'.format(step_mode))

    def to_dict(self):
        """Return the parameters as a dict."""
        return {'z0': self.z0, 'beta': self.beta,
                'delta_max': self.delta_max, 'z_stop': self.z_stop,
                'max_iters': self.max_iters, 'step_mode': self.step_mode}

    @classmethod
    def from_dict(cls, data):
        """Build a config, rejecting unknown keys."""
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ConfigError(
                'unknown solver keys: {0}'.format(sorted(unknown)))
        return cls(**dict((str(k), v) for k, v in data.items()))


SolveReport = namedtuple(
    'SolveReport',
    ['pose', 'iterations', 'final_z_update', 'final_reprojection_rmse',
     'converged'])


def _metric_array(metric_points):
    return np.asarray(getattr(metric_points, 'points', metric_points),
                      dtype=np.float64)


def pin_nose(nose_uv, nose_point, R, K, z):
    """Return the depth-``z`` translation mapping the nose onto its pixel.

    :param nose_uv: observed nose pixel (u, v)
    :param nose_point: nose position in the face frame, cm
    :raises BehindCameraError: if the nose would lie behind the camera
    """
    rotated = np.asarray(R).dot(nose_point)
    depth = rotated[2] + z
    if depth <= 0:
        raise BehindCameraError('nose depth {0:.3f} cm'.format(depth))
    return np.array([(nose_uv[0] - K.cx) * depth / K.fx - rotated[0],
                     (nose_uv[1] - K.cy) * depth / K.fy - rotated[1],
                     z])


def init_translation(frame, metric_points, R, K, cfg):
    """Initial translation: depth ``cfg.z0``, nose pinned to its pixel."""
    nose = frame.topology.nose_idx
    return pin_nose(frame.uv[nose], _metric_array(metric_points)[nose], R, K,
                    cfg.z0)


def _vote_fraction(observed, projected):
    """Mean expand/contract vote, positive when observed lies outside."""
    observed = np.asarray(observed, dtype=np.float64)
    projected = np.asarray(projected, dtype=np.float64)
    diff = observed - projected
    dist = np.linalg.norm(diff, axis=1)
    mask = dist > MIN_SEPARATION_PX
    if not np.any(mask):
        return 0.0
    v = diff[mask] / dist[mask][:, None]
    c = projected[mask] - projected.mean(axis=0)
    votes = np.sign(np.sum(v * c, axis=1))
    return float(np.sum(votes) / observed.shape[0])


def radial_step(observed, projected, cfg):
    """Depth update from radial expand/contract votes.

    Each landmark votes with the sign of its unit residual direction against
    its outward radial direction from the projected centroid. Outward
    residuals mean the face is nearer than estimated, so the update is
    negative.

    :returns: depth update in cm, clipped to ``[-delta_max, delta_max]``
    """
    step = -cfg.beta * _vote_fraction(observed, projected)
    return float(np.clip(step, -cfg.delta_max, cfg.delta_max))


def procrustes_scale(observed, projected):
    """Least-squares scale from the centred projected set to the observed."""
    obs = observed - observed.mean(axis=0)
    proj = projected - projected.mean(axis=0)
    denom = np.sum(proj * proj)
    if not denom > 0:
        return float('nan')
    return float(np.sum(obs * proj) / denom)


def reprojection_rmse(observed, projected):
    """Root mean squared pixel distance between matched landmarks."""
    diff = np.asarray(observed) - np.asarray(projected)
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def _depth_update(observed, projected, rotated, t, cfg):
    if cfg.step_mode == STEP_LITERAL:
        return radial_step(observed, projected, cfg)

    fraction = radial_step(observed, projected, cfg) / cfg.beta
    if fraction == 0.0:
        return 0.0
    scale = procrustes_scale(observed, projected)
    if not (np.isfinite(scale) and scale > 0):
        return float('nan')
    depth = t[2] + rotated[:, 2].mean()
    implied = depth / scale
    return float(np.clip(fraction * abs(implied - depth),
                         -cfg.delta_max, cfg.delta_max))


def solve_translation(frame, metric_points, R, K, cfg=None):
    """Recover the metric translation of the head.

    Iterates depth updates, re-pinning the nose after each one, until the
    applied update is below ``cfg.z_stop`` or ``cfg.max_iters`` is reached.
    Degenerate configurations end the run with ``converged=False`` instead
    of raising.

    :param metric_points: face-frame landmarks in cm, nose at its own index
    :param R: head rotation supplied with the landmarks
    :rtype: :class:`SolveReport`
    """
    cfg = cfg or SolverConfig()
    R = np.asarray(R, dtype=np.float64)
    points = _metric_array(metric_points)
    observed = frame.uv
    nose = frame.topology.nose_idx
    rotated = points.dot(R.T)

    t = init_translation(frame, points, R, K, cfg)
    pose = HeadPose(R, t, check=False)
    projected = geometry.project(points, K, pose)

    iterations = 0
    z_update = 0.0
    converged = False
    while iterations < cfg.max_iters:
        z_update = _depth_update(observed, projected, rotated, t, cfg)
        if not np.isfinite(z_update):
            break
        try:
            candidate = pin_nose(observed[nose], points[nose], R, K,
                                 t[2] + z_update)
            candidate_projected = geometry.project(
                points, K, HeadPose(R, candidate, check=False))
        except BehindCameraError:
            break
        t, projected = candidate, candidate_projected
        iterations += 1
        if abs(z_update) < cfg.z_stop:
            converged = True
            break

    return SolveReport(
        pose=HeadPose(R, t, check=False),
        iterations=iterations,
        final_z_update=float(z_update) if np.isfinite(z_update) else
        float('nan'),
        final_reprojection_rmse=reprojection_rmse(observed, projected),
        converged=converged)


def depth_grid_oracle(frame, metric_points, R, K, z_min=30.0, z_max=90.0,
                      resolution=0.05):
    """Brute-force depth search minimizing the reprojection RMSE.

    Every candidate depth on the grid gets the nose-pinned XY translation.

    :returns: tuple ``(z, rmse, t)`` of the best grid point
    """
    R = np.asarray(R, dtype=np.float64)
    points = _metric_array(metric_points)
    nose = frame.topology.nose_idx
    n = int(round((z_max - z_min) / resolution)) + 1
    depths = z_min + resolution * np.arange(n)

    rotated = points.dot(R.T)
    rn = rotated[nose]
    nose_depth = rn[2] + depths
    t = np.stack([(frame.uv[nose, 0] - K.cx) * nose_depth / K.fx - rn[0],
                  (frame.uv[nose, 1] - K.cy) * nose_depth / K.fy - rn[1],
                  depths], axis=1)
    cam = rotated[None, :, :] + t[:, None, :]
    valid = np.all(cam[:, :, 2] > 0, axis=1)
    with np.errstate(divide='ignore', invalid='ignore'):
        u = K.fx * cam[:, :, 0] / cam[:, :, 2] + K.cx
        v = K.fy * cam[:, :, 1] / cam[:, :, 2] + K.cy
    sq = (u - frame.uv[None, :, 0]) ** 2 + (v - frame.uv[None, :, 1]) ** 2
    rmse = np.sqrt(np.mean(sq, axis=1))
    rmse[~valid] = np.inf
    best = int(np.argmin(rmse))
    return float(depths[best]), float(rmse[best]), t[best]


def metric_face_points(frame, R, K, alpha_cm=geometry.IRIS_DIAMETER_CM):
    """Face-frame metric landmarks from one frame.

    Reprojects, normalizes, scales with the iris prior, then removes the
    head rotation so the solver can apply ``[R | t]`` once.
    """
    topo = frame.topology
    normalized = geometry.normalize_face(geometry.reproject(frame, K), topo)
    scale = geometry.estimate_face_scale(frame, topo, alpha_cm)
    metric = geometry.scale_to_metric(normalized, scale)
    return geometry.FacePoints3D(metric.points.dot(np.asarray(R)),
                                 geometry.UNIT_METRIC)


def estimate_head_pose(frame, R, K, cfg=None,
                       alpha_cm=geometry.IRIS_DIAMETER_CM):
    """Run the whole pipeline from UVZ landmarks to a metric head pose."""
    metric = metric_face_points(frame, R, K, alpha_cm)
    return solve_translation(frame, metric, R, K, cfg)
