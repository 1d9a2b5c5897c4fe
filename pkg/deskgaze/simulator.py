# -*- coding: utf-8 -*-
"""Synthetic faces with known geometry, pose, eye appearance and gaze.

The canonical mesh has 31 landmarks in centimeters in the face frame (X
right, Y down, Z away from the camera) with the nose at the origin. Images
are rendered by intersecting each pixel ray with the eye plane and
evaluating a smooth procedural texture there, so the iris position in the
image follows the simulated gaze.

A user's gaze is linear in the eye state e (iris offset / 0.35 cm) and the
head position::

    g = gain * e + 0.05 * (t_x / 10, t_y / 10) + bias (+ drift * time)
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import os
from collections import OrderedDict, namedtuple

import numpy as np
from scipy.spatial.transform import Rotation
from scipy.special import expit

from . import geometry
from .data import GazeSample, MANIFEST_VERSION, denormalize_gaze, \
    user_split, write_manifest
from .exceptions import InvalidInputError
from .headpose import HeadPose
from .nn import container
from .preprocess import (GAZE_MAX, GAZE_MIN, REDUCED_PATCH_SIZE, ScreenSpec,
                         eye_patch_homography)

EYE_PLANE_Z = 2.5
EYE_CENTER_X = 3.2
EYE_CENTER_Y = -2.5
EYE_HALF_WIDTH = 1.5
OPEN_LID = 0.45
CLOSED_LID = 0.03
IRIS_RADIUS = geometry.IRIS_DIAMETER_CM / 2.0
PUPIL_RADIUS = 0.25
EYE_STATE_CM = 0.35
POSE_GAIN = 0.05
EDGE_CM = 0.08
DEFAULT_IMAGE_SIZE = (320, 240)
DEFAULT_SCREEN = ScreenSpec(1920, 1080, 53.0, 30.0)

NOSE = 4
LEFT_EDGE = 2
RIGHT_EDGE = 3
LEFT_EYE = tuple(range(5, 11))
RIGHT_EYE = tuple(range(11, 17))
LEFT_IRIS = tuple(range(17, 21))
RIGHT_IRIS = tuple(range(21, 25))

SYNTHETIC_TOPOLOGY = geometry.LandmarkTopology(
    nose_idx=NOSE, left_idx=LEFT_EDGE, right_idx=RIGHT_EDGE,
    left_iris=LEFT_IRIS, right_iris=RIGHT_IRIS,
    left_eye_ring=LEFT_EYE, right_eye_ring=RIGHT_EYE,
    eye_corner_idxs=(LEFT_EYE[0], LEFT_EYE[3], RIGHT_EYE[3], RIGHT_EYE[0]))


def _eye_ring(center_x, outward, lid):
    """Six lid points p1..p6; ``outward`` is -1 for the image-left eye."""
    a = EYE_HALF_WIDTH
    c = center_x
    return [(c + outward * a, EYE_CENTER_Y, EYE_PLANE_Z),
            (c + outward * 0.5 * a, EYE_CENTER_Y - lid, EYE_PLANE_Z),
            (c - outward * 0.5 * a, EYE_CENTER_Y - lid, EYE_PLANE_Z),
            (c - outward * a, EYE_CENTER_Y, EYE_PLANE_Z),
            (c - outward * 0.5 * a, EYE_CENTER_Y + lid, EYE_PLANE_Z),
            (c + outward * 0.5 * a, EYE_CENTER_Y + lid, EYE_PLANE_Z)]


def _iris_ring(center_x, offset):
    cx = center_x + offset[0]
    cy = EYE_CENTER_Y + offset[1]
    return [(cx + IRIS_RADIUS * np.cos(a), cy + IRIS_RADIUS * np.sin(a),
             EYE_PLANE_Z) for a in np.arange(4) * np.pi / 2]


def canonical_points(iris_offset=(0.0, 0.0), lid=OPEN_LID):
    """Face-frame landmarks for an eye state, shape (31, 3), cm."""
    points = [(0.0, -6.5, 2.0),
              (0.0, 7.0, 1.5),
              (-7.0, -2.5, EYE_PLANE_Z),
              (7.0, -2.5, EYE_PLANE_Z),
              (0.0, 0.0, 0.0)]
    points += _eye_ring(-EYE_CENTER_X, -1, lid)
    points += _eye_ring(EYE_CENTER_X, 1, lid)
    points += _iris_ring(-EYE_CENTER_X, iris_offset)
    points += _iris_ring(EYE_CENTER_X, iris_offset)
    points += [(-EYE_CENTER_X, -4.2, 2.2), (EYE_CENTER_X, -4.2, 2.2),
               (-5.5, 4.0, 3.0), (5.5, 4.0, 3.0),
               (-2.2, 3.2, 1.2), (2.2, 3.2, 1.2)]
    return np.array(points)


class SyntheticFaceSpec(object):
    """Canonical face geometry and texture seed.

    :param texture_seed: seeds skin tone, iris color and shading
    """

    def __init__(self, texture_seed=0, iris_diameter_cm=None):
        """Build the face and draw its colors."""
        self.iris_diameter_cm = iris_diameter_cm or geometry.IRIS_DIAMETER_CM
        self.topology = SYNTHETIC_TOPOLOGY
        self.texture_seed = texture_seed
        rng = np.random.default_rng(texture_seed)
        self.skin = np.array([0.78, 0.6, 0.5]) + rng.uniform(-0.08, 0.08, 3)
        self.iris_color = np.array([0.35, 0.22, 0.12]) + \
            rng.uniform(-0.1, 0.1, 3)
        self.shading_phase = rng.uniform(0, 2 * np.pi, 2)

    @property
    def points(self):
        """Canonical landmarks with the eyes open and centered."""
        return canonical_points()

    @property
    def face_width_cm(self):
        """Distance between the face-edge landmarks."""
        p = self.points
        return float(np.linalg.norm(p[LEFT_EDGE] - p[RIGHT_EDGE]))

    def metric_points(self):
        """Canonical landmarks as :class:`~deskgaze.geometry.FacePoints3D`."""
        return geometry.FacePoints3D(self.points, geometry.UNIT_METRIC)

    def texture(self, x, y, iris_offset, lid):
        """RGB in [0, 1] at face-frame eye-plane coordinates (cm)."""
        soft = lambda d: expit(d / EDGE_CM)  # noqa: E731
        ph = self.shading_phase
        shade = 0.05 * np.sin(0.8 * x + ph[0]) + 0.05 * np.cos(0.6 * y + ph[1])
        color = np.clip(self.skin + shade[..., None], 0, 1)

        brows = np.zeros_like(x)
        for cx in (-EYE_CENTER_X, EYE_CENTER_X):
            brows += soft(1.6 - np.abs(x - cx)) * soft(0.25 - np.abs(y + 4.2))
        brows = np.clip(brows, 0, 1)[..., None]
        color = color * (1 - brows) + np.array([0.25, 0.18, 0.12]) * brows

        semi_y = lid / np.sqrt(0.75)
        for cx in (-EYE_CENTER_X, EYE_CENTER_X):
            ellipse = np.hypot((x - cx) / EYE_HALF_WIDTH,
                               (y - EYE_CENTER_Y) / semi_y)
            inside = soft((1.0 - ellipse) * min(semi_y, EYE_HALF_WIDTH))
            r = np.hypot(x - cx - iris_offset[0],
                         y - EYE_CENTER_Y - iris_offset[1])
            iris = soft(IRIS_RADIUS - r)[..., None]
            pupil = soft(PUPIL_RADIUS - r)[..., None]
            eye = np.array([0.95, 0.95, 0.93]) * (1 - iris) + \
                self.iris_color * iris
            eye = eye * (1 - pupil) + 0.05 * pupil
            inside = inside[..., None]
            color = color * (1 - inside) + eye * inside

        face = soft(1.0 - np.hypot(x / 7.5, y / 9.5))[..., None]
        return np.clip(color * face + 0.2 * (1 - face), 0.0, 1.0)


def random_pose(rng, depth_range=(50.0, 70.0), max_angle_deg=5.0, xy_std=2.0):
    """Draw a head pose: small Euler angles and a translation in cm."""
    angles = rng.uniform(-max_angle_deg, max_angle_deg, 3)
    R = Rotation.from_euler('xyz', angles, degrees=True).as_matrix()
    t = np.array([rng.normal(0, xy_std), rng.normal(0, xy_std),
                  rng.uniform(*depth_range)])
    return HeadPose(R, t)


def roll_pose(pose, degrees):
    """Rotate ``pose`` about the optical axis by ``degrees``."""
    Rz = Rotation.from_euler('z', degrees, degrees=True).as_matrix()
    return HeadPose(Rz.dot(pose.R), Rz.dot(pose.t))


class SyntheticScene(object):
    """Everything needed to render one frame.

    :param pose: true :class:`~deskgaze.headpose.HeadPose` (cm)
    :param gaze: true normalized gaze g
    :param iris_offset: eye state, iris displacement in cm on the eye plane
    :param noise_px: isotropic Gaussian landmark noise
    :param blink: render closed lids
    """

    def __init__(self, face, pose, intrinsics=None, screen=DEFAULT_SCREEN,
                 gaze=(0.0, 0.0), iris_offset=(0.0, 0.0), noise_px=0.0,
                 blink=False, image_size=DEFAULT_IMAGE_SIZE, seed=0,
                 depth_range=(30.0, 90.0)):
        """Validate the scene."""
        self.face = face
        self.pose = pose
        self.image_size = tuple(int(s) for s in image_size)
        self.intrinsics = intrinsics or \
            geometry.CameraIntrinsics.default_for(*self.image_size)
        self.screen = screen
        self.gaze = np.asarray(gaze, dtype=np.float64).reshape(2)
        self.iris_offset = np.asarray(iris_offset, dtype=np.float64)
        self.noise_px = float(noise_px)
        self.blink = bool(blink)
        self.seed = seed
        if not depth_range[0] <= pose.t[2] <= depth_range[1]:
            raise InvalidInputError(
                'depth {0:.2f} cm outside {1}'.format(pose.t[2],
                                                     depth_range))
        if np.any(self.gaze < GAZE_MIN) or np.any(self.gaze > GAZE_MAX):
            raise InvalidInputError('gaze outside [-0.5, 0.5]')
        if self.noise_px < 0:
            raise InvalidInputError('noise must be non-negative')

    @property
    def lid(self):
        """Half-height of the lid opening, cm."""
        return CLOSED_LID if self.blink else OPEN_LID

    def points(self):
        """Face-frame landmarks for this scene's eye state."""
        return canonical_points(self.iris_offset, self.lid)


GroundTruth = namedtuple('GroundTruth',
                         ['pose', 'gaze', 'blink', 'iris_offset', 'points'])


def render_landmarks(scene):
    """Project the scene's landmarks to a noisy UVZ frame.

    z is depth relative to the nose.
    """
    points = scene.points()
    K = scene.intrinsics
    uv = geometry.project(points, K, scene.pose)
    cam = geometry.transform(points, scene.pose.R, scene.pose.t)
    if scene.noise_px > 0:
        rng = np.random.default_rng(scene.seed)
        uv = uv + rng.normal(0.0, scene.noise_px, uv.shape)
    z = cam[:, 2] / cam[NOSE, 2]
    return geometry.LandmarkFrame(np.column_stack([uv, z]),
                                  scene.face.topology)


def render_image(scene):
    """Render the procedural texture, H x W x 3 in [0, 1]."""
    w, h = scene.image_size
    K = scene.intrinsics
    R, t = scene.pose.R, scene.pose.t
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    rays = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy,
                     np.ones_like(u)], axis=-1)
    normal = R[:, 2]
    anchor = R.dot([0.0, 0.0, EYE_PLANE_Z]) + t
    denom = rays.dot(normal)
    with np.errstate(divide='ignore', invalid='ignore'):
        s = np.where(np.abs(denom) > 1e-12, anchor.dot(normal) / denom, -1.0)
    hit = s > 0
    cam = rays * s[..., None]
    q = (cam - t).dot(R)
    image = scene.face.texture(q[..., 0], q[..., 1], scene.iris_offset,
                               scene.lid)
    image[~hit] = 0.2
    return image


def render_scene(scene):
    """Render landmarks, image and ground truth of one scene.

    :returns: tuple ``(LandmarkFrame, image, GroundTruth)``
    :raises BehindCameraError: if the face is not in front of the camera
    """
    frame = render_landmarks(scene)
    image = render_image(scene)
    truth = GroundTruth(scene.pose, scene.gaze.copy(), scene.blink,
                        scene.iris_offset.copy(), scene.points())
    return frame, image, truth


class SyntheticUser(object):
    """Per-user gaze mapping.

    :param gain: per-axis gain on the eye state
    :param bias: constant gaze bias
    :param drift: bias change per second
    :param appearance_seed: texture seed of the user's face
    """

    def __init__(self, user_id, gain=(0.5, 0.5), bias=(0.0, 0.0),
                 drift=(0.0, 0.0), appearance_seed=0):
        """Store the mapping."""
        if not user_id:
            raise InvalidInputError('user id must not be empty')
        self.user_id = user_id
        self.gain = np.asarray(gain, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.drift = np.asarray(drift, dtype=np.float64)
        self.appearance_seed = int(appearance_seed)
        if np.any(self.gain <= 0):
            raise InvalidInputError('gain must be positive')

    @classmethod
    def sample(cls, user_id, seed, drift_std=0.0):
        """Draw a user deterministically from ``seed``."""
        rng = np.random.default_rng(seed)
        gain = 0.5 * (1.0 + rng.uniform(-0.15, 0.15, 2))
        bias = np.clip(rng.normal(0.0, 0.08, 2), -0.2, 0.2)
        drift = rng.normal(0.0, drift_std, 2) if drift_std else (0.0, 0.0)
        return cls(user_id, gain, bias, drift, appearance_seed=seed)

    def bias_at(self, timestamp):
        """Bias at ``timestamp`` seconds."""
        return self.bias + self.drift * timestamp

    def gaze(self, eye_state, pose, timestamp=0.0):
        """Normalized gaze for an eye state and head pose."""
        head = pose.t[:2] / 10.0
        return self.gain * np.asarray(eye_state) + POSE_GAIN * head + \
            self.bias_at(timestamp)

    def eye_state_for(self, target, pose, timestamp=0.0, limit=1.4):
        """Eye state producing ``target``, clipped to ``+-limit``.

        :returns: tuple ``(eye_state, gaze)`` where gaze is the exact label
        """
        head = pose.t[:2] / 10.0
        e = (np.asarray(target) - POSE_GAIN * head -
             self.bias_at(timestamp)) / self.gain
        e = np.clip(e, -limit, limit)
        g = np.clip(self.gaze(e, pose, timestamp), GAZE_MIN, GAZE_MAX)
        return e, g

    def to_dict(self):
        """Return a JSON-serializable dict."""
        return {'user_id': self.user_id, 'gain': self.gain.tolist(),
                'bias': self.bias.tolist(), 'drift': self.drift.tolist(),
                'appearance_seed': self.appearance_seed}

    @classmethod
    def from_dict(cls, data):
        """Build a user from :meth:`to_dict` output."""
        return cls(data['user_id'], data['gain'], data['bias'],
                   data.get('drift', (0.0, 0.0)),
                   data.get('appearance_seed', 0))


def grid_support_gaze(spacing=0.35):
    """The nine targets of a 3 x 3 calibration grid."""
    values = (-spacing, 0.0, spacing)
    return np.array([(x, y) for y in values for x in values])


def make_scenes(user, n, seed=0, gaze_targets=None, noise_px=0.0,
                blink_rate=0.0, image_size=DEFAULT_IMAGE_SIZE,
                screen=DEFAULT_SCREEN, depth_range=(50.0, 70.0),
                start_time=0.0, interval=1.0):
    """Scenes of one user; the pose and target draws depend only on ``seed``.

    :returns: list of ``(scene, timestamp)``
    """
    if n < 1:
        raise InvalidInputError('n must be at least 1')
    rng = np.random.default_rng(seed)
    face = SyntheticFaceSpec(user.appearance_seed)
    if gaze_targets is None:
        gaze_targets = rng.uniform(-0.45, 0.45, (n, 2))
    gaze_targets = np.asarray(gaze_targets, dtype=np.float64)
    scenes = []
    for i in range(n):
        pose = random_pose(rng, depth_range)
        blink = bool(rng.uniform() < blink_rate)
        noise_seed = int(rng.integers(0, 2 ** 31 - 1))
        timestamp = start_time + i * interval
        target = gaze_targets[i % len(gaze_targets)]
        e, g = user.eye_state_for(target, pose, timestamp)
        scenes.append((SyntheticScene(
            face, pose, screen=screen, gaze=g,
            iris_offset=EYE_STATE_CM * e, noise_px=noise_px, blink=blink,
            image_size=image_size, seed=noise_seed), timestamp))
    return scenes


def make_user_dataset(user, n, seed=0, patch_size=REDUCED_PATCH_SIZE,
                      **kwargs):
    """Render ``n`` labelled samples of one user.

    Samples carry the eye patch, the true head pose, the exact label and
    the landmark frame. Extra keyword arguments go to :func:`make_scenes`.

    :rtype: list of :class:`~deskgaze.data.GazeSample`
    """
    samples = []
    for i, (scene, timestamp) in enumerate(make_scenes(user, n, seed,
                                                       **kwargs)):
        frame, image, truth = render_scene(scene)
        patch = eye_patch_homography(image, frame, patch_size)
        samples.append(GazeSample(
            '{0}-{1:04d}'.format(user.user_id, i), user.user_id, timestamp,
            truth.gaze, 1.0, truth.pose,
            patch.pixels.astype(np.float32), None, frame))
    return samples


def make_users(n_users, seed=0, drift_std=0.0):
    """Users ``u00``, ``u01``, ... drawn from consecutive seeds."""
    return [SyntheticUser.sample('u{0:02d}'.format(i), seed * 1000 + i,
                                 drift_std) for i in range(n_users)]


def write_synthetic_dataset(out_dir, n_users=8, samples_per_user=25, seed=0,
                            noise_px=0.0, patch_size=REDUCED_PATCH_SIZE,
                            image_size=DEFAULT_IMAGE_SIZE,
                            screen=DEFAULT_SCREEN, test_fraction=0.5,
                            blink_rate=0.0, drift_std=0.0):
    """Render a dataset and write its manifest and patch containers.

    Samples store landmarks inline, the provider rotation and the ground
    truth; head poses are left to the solver. Users are split into
    ``train`` and ``test`` by ``test_fraction``.

    :returns: path of the written ``manifest.json``
    """
    if not os.path.isdir(os.path.join(out_dir, 'patches')):
        os.makedirs(os.path.join(out_dir, 'patches'))
    users = make_users(n_users, seed, drift_std)
    K = geometry.CameraIntrinsics.default_for(*image_size)
    entries = []
    files = {}
    for index, user in enumerate(users):
        relative = 'patches/{0}.dgzc'.format(user.user_id)
        tensors = OrderedDict()
        for i, (scene, timestamp) in enumerate(make_scenes(
                user, samples_per_user, seed * 1000 + 500 + index,
                noise_px=noise_px, blink_rate=blink_rate,
                image_size=image_size, screen=screen)):
            frame, image, truth = render_scene(scene)
            sample_id = '{0}-{1:04d}'.format(user.user_id, i)
            tensors[sample_id] = eye_patch_homography(
                image, frame, patch_size).pixels.astype(np.float32)
            entries.append({
                'id': sample_id,
                'user': user.user_id,
                'timestamp': timestamp,
                'gaze_px': denormalize_gaze(truth.gaze, screen).tolist(),
                'landmarks': frame.points.tolist(),
                'rotation': truth.pose.R.tolist(),
                'patch': {'file': relative, 'tensor': sample_id},
                'truth': {'t': truth.pose.t.tolist(),
                          'gaze': truth.gaze.tolist(),
                          'blink': truth.blink},
            })
        container.save(os.path.join(out_dir, relative), tensors,
                       meta={'user': user.user_id})
        files[relative] = None

    train, test = user_split([u.user_id for u in users], test_fraction,
                             seed)
    document = {
        'version': MANIFEST_VERSION,
        'topology': SYNTHETIC_TOPOLOGY.to_dict(),
        'screen': screen.to_dict(),
        'image_size': list(image_size),
        'intrinsics': K.to_dict(),
        'splits': {'train': train, 'test': test},
        'files': files,
        'meta': {'generator': 'deskgaze.simulator', 'seed': seed,
                 'noise_px': noise_px, 'patch_size': list(patch_size),
                 'users': dict((u.user_id, u.to_dict()) for u in users)},
        'samples': entries,
    }
    path = os.path.join(out_dir, 'manifest.json')
    write_manifest(path, document)
    return path
