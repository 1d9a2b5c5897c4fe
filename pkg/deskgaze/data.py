# -*- coding: utf-8 -*-
"""Dataset manifests, gaze samples and embedding caches.

A manifest is one JSON document describing a dataset: topology, screen,
optional camera intrinsics, user splits and sample entries. Bulk arrays
(eye patches, source images, embeddings) live in tensor containers next to
it and are referenced by relative path; every referenced file is listed in
``files`` with its SHA-256. See ``docs/source/formats.rst`` for the schema.
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import io
import json
import os
import warnings
from collections import OrderedDict, namedtuple

import numpy as np
import six

from . import geometry, headpose
from .exceptions import (ClampedValueWarning, DeskGazeError, IntegrityError,
                         InvalidInputError, ManifestError,
                         SkippedSampleWarning)
from .nn import container
from .preprocess import GAZE_MAX, GAZE_MIN, ScreenSpec

MANIFEST_VERSION = 1
SUPPORTED_VERSIONS = (1,)


def normalize_gaze(px, screen, diagnostics=None):
    """Map an on-screen pixel to normalized gaze in [-0.5, 0.5]^2.

    The origin is the screen center. Out-of-range values are clamped and
    flagged with :class:`~deskgaze.exceptions.ClampedValueWarning`.
    """
    if screen.width_px <= 0 or screen.height_px <= 0:
        raise InvalidInputError('screen resolution must be positive')
    px = np.asarray(px, dtype=np.float64)
    g = px / np.array([screen.width_px, screen.height_px]) - 0.5
    clamped = np.clip(g, GAZE_MIN, GAZE_MAX)
    if np.any(clamped != g):
        message = 'gaze pixel {0} is off screen, clamped'.format(px.tolist())
        warnings.warn(message, ClampedValueWarning)
        if diagnostics is not None:
            diagnostics.append(message)
    return clamped


def denormalize_gaze(g, screen):
    """Inverse of :func:`normalize_gaze` for in-range values."""
    g = np.asarray(g, dtype=np.float64)
    return (g + 0.5) * np.array([screen.width_px, screen.height_px])


class GazeSample(namedtuple('GazeSample',
                            ['sample_id', 'user_id', 'timestamp', 'gaze',
                             'weight', 'pose', 'patch', 'embedding',
                             'landmarks'])):
    """One unit of training data.

    :param gaze: normalized gaze g, shape (2,)
    :param weight: scalar loss weight w
    :param pose: :class:`~deskgaze.headpose.HeadPose` or None
    :param patch: eye-patch pixels (H, W, 3) in [0, 1] or None
    :param embedding: cached embedding z or None
    :param landmarks: the source :class:`~deskgaze.geometry.LandmarkFrame`
    """

    __slots__ = ()

    def __new__(cls, sample_id, user_id, timestamp, gaze, weight=1.0,
                pose=None, patch=None, embedding=None, landmarks=None):
        """Validate the label and the weight."""
        gaze = np.asarray(gaze, dtype=np.float64).reshape(2)
        if np.any(gaze < GAZE_MIN) or np.any(gaze > GAZE_MAX):
            raise InvalidInputError(
                'gaze {0} outside [-0.5, 0.5]'.format(gaze.tolist()))
        if not weight >= 0:
            raise InvalidInputError('weight must be non-negative')
        if not user_id:
            raise InvalidInputError('user id must not be empty')
        return super(GazeSample, cls).__new__(
            cls, sample_id, user_id, float(timestamp), gaze, float(weight),
            pose, patch, embedding, landmarks)

    def pose_features(self):
        """Return the 12 raw pose values [R | t]."""
        if self.pose is None:
            raise InvalidInputError(
                'sample {0} has no head pose'.format(self.sample_id))
        return self.pose.features()


def _require(data, key, kind, pointer):
    if not isinstance(data, dict) or key not in data:
        raise ManifestError('missing required key {0!r}'.format(key),
                            pointer)
    value = data[key]
    if kind is not None and not isinstance(value, kind):
        raise ManifestError('{0!r} has the wrong type'.format(key),
                            '{0}/{1}'.format(pointer, key))
    return value


def _wrap(pointer, fn, *args):
    try:
        return fn(*args)
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ManifestError):
            raise
        raise ManifestError(str(e), pointer)


class DatasetManifest(object):
    """A validated dataset description.

    :param root: directory that relative file references resolve against
    """

    def __init__(self, data, root='.'):
        """Validate ``data``, a decoded manifest document."""
        self.root = root
        self.diagnostics = []
        if not isinstance(data, dict):
            raise ManifestError('manifest must be a JSON object')

        self.version = _require(data, 'version', six.integer_types, '')
        if self.version not in SUPPORTED_VERSIONS:
            raise ManifestError(
                'unsupported version {0}'.format(self.version), '/version')

        self.topology = _wrap('/topology', geometry.LandmarkTopology.from_dict,
                              _require(data, 'topology', dict, ''))
        self.screen = _wrap('/screen', ScreenSpec.from_dict,
                            _require(data, 'screen', dict, ''))
        size = _require(data, 'image_size', list, '')
        if len(size) != 2:
            raise ManifestError('image_size needs [width, height]',
                                '/image_size')
        self.image_size = _wrap('/image_size',
                                lambda: (int(size[0]), int(size[1])))

        raw_k = data.get('intrinsics')
        if raw_k is None:
            self.intrinsics, self.intrinsics_source = \
                geometry.resolve_intrinsics(None, *self.image_size)
            self.diagnostics.append('intrinsics: default applied')
        else:
            self.intrinsics = _wrap('/intrinsics',
                                    geometry.CameraIntrinsics.from_dict,
                                    raw_k)
            self.intrinsics_source = 'given'

        self.files = OrderedDict(sorted(data.get('files', {}).items()))
        self.splits = dict((k, list(v)) for k, v in
                           six.iteritems(data.get('splits', {})))
        self.meta = dict(data.get('meta', {}))

        samples = _require(data, 'samples', list, '')
        seen = set()
        for i, entry in enumerate(samples):
            pointer = '/samples/{0}'.format(i)
            sample_id = _require(entry, 'id', six.string_types, pointer)
            user = _require(entry, 'user', six.string_types, pointer)
            if not user:
                raise ManifestError('user id must not be empty',
                                    pointer + '/user')
            if sample_id in seen:
                raise ManifestError(
                    'duplicate sample id {0!r}'.format(sample_id),
                    pointer + '/id')
            seen.add(sample_id)
        self.samples = samples
        self._containers = {}

    @property
    def users(self):
        """Return the sorted distinct user ids."""
        return sorted(set(s['user'] for s in self.samples))

    def entries(self, users=None):
        """Sample entries sorted by (user, timestamp, id).

        :param users: restrict to these user ids
        """
        wanted = None if users is None else set(users)
        return [e for e in sorted(self.samples, key=_sort_key)
                if wanted is None or e['user'] in wanted]

    def split(self, name):
        """Users of a materialized split, e.g. ``'train'`` or ``'test'``."""
        if name not in self.splits:
            raise ManifestError('no split named {0!r}'.format(name),
                                '/splits')
        return list(self.splits[name])

    def path(self, relative):
        """Resolve a manifest-relative path."""
        return os.path.join(self.root, relative)

    def verify(self):
        """Check that every listed file exists and matches its hash.

        :raises IntegrityError: on a missing file or a hash mismatch
        """
        for relative, expected in six.iteritems(self.files):
            path = self.path(relative)
            if not os.path.exists(path):
                raise IntegrityError('referenced file is missing', relative)
            actual = container.file_digest(path)
            if actual != expected:
                raise IntegrityError(
                    'sha256 mismatch (expected {0}, got {1})'
                    .format(expected, actual), relative)

    def tensor(self, ref):
        """Load ``{'file': ..., 'tensor': ...}`` from its container."""
        relative = ref['file']
        if relative not in self._containers:
            self._containers[relative] = \
                container.load(self.path(relative))[0]
        return self._containers[relative][ref['tensor']]

    def to_dict(self):
        """Return the manifest document."""
        return {'version': self.version,
                'topology': self.topology.to_dict(),
                'screen': self.screen.to_dict(),
                'image_size': list(self.image_size),
                'intrinsics': self.intrinsics.to_dict()
                if self.intrinsics_source == 'given' else None,
                'splits': self.splits,
                'files': dict(self.files),
                'meta': self.meta,
                'samples': self.samples}


def load_manifest(path, verify=True):
    """Read and validate a manifest file.

    :raises ManifestError: on a schema violation, with a JSON pointer
    :raises IntegrityError: on a missing file or hash mismatch
    """
    with io.open(path, 'r', encoding='utf-8') as f:
        try:
            data = json.load(f)
        except ValueError as e:
            raise ManifestError('invalid JSON: {0}'.format(e))
    manifest = DatasetManifest(data, root=os.path.dirname(path) or '.')
    if verify:
        manifest.verify()
    return manifest


def write_manifest(path, manifest):
    """Write a manifest, refreshing the hashes of its listed files.

    :param manifest: :class:`DatasetManifest` or a manifest document
    """
    root = os.path.dirname(path) or '.'
    data = manifest.to_dict() if isinstance(manifest, DatasetManifest) \
        else dict(manifest)
    data['files'] = dict(
        (relative, container.file_digest(os.path.join(root, relative)))
        for relative in sorted(data.get('files', {})))
    with io.open(path, 'w', encoding='utf-8') as f:
        f.write(six.text_type(json.dumps(data, indent=1, sort_keys=True)))
        f.write('\n')
    return data


def _sort_key(entry):
    try:
        timestamp = float(entry.get('timestamp', 0.0))
    except (TypeError, ValueError):
        timestamp = float('inf')
    return (entry['user'], timestamp, entry['id'])


def landmark_frame(manifest, entry):
    """Landmark frame of an entry, or None when it has no landmarks."""
    raw = entry.get('landmarks')
    if raw is None:
        return None
    array = manifest.tensor(raw) if isinstance(raw, dict) else raw
    return geometry.LandmarkFrame(array, manifest.topology, entry['id'])


def entry_intrinsics(manifest, entry):
    """Per-sample intrinsics override, else the manifest intrinsics."""
    if entry.get('intrinsics') is not None:
        return geometry.CameraIntrinsics.from_dict(entry['intrinsics'])
    return manifest.intrinsics


def _pose(manifest, entry, frame, solver):
    if entry.get('pose') is not None:
        return headpose.HeadPose.from_dict(entry['pose'])
    if frame is None or entry.get('rotation') is None:
        return None
    report = headpose.estimate_head_pose(
        frame, entry['rotation'], entry_intrinsics(manifest, entry), solver)
    return report.pose


def load_sample(manifest, entry, solver=None, load_patch=True):
    """Build the :class:`GazeSample` of one manifest entry."""
    frame = landmark_frame(manifest, entry)
    g = normalize_gaze(entry['gaze_px'], manifest.screen,
                       manifest.diagnostics)
    patch = None
    if load_patch and entry.get('patch') is not None:
        patch = np.asarray(manifest.tensor(entry['patch']))
        if patch.ndim != 3 or patch.shape[2] != 3:
            raise InvalidInputError('patch must be H x W x 3')
        if not np.all(np.isfinite(patch)) or patch.min() < 0 or \
                patch.max() > 1:
            raise InvalidInputError('patch values must lie in [0, 1]')
    embedding = None
    if entry.get('embedding') is not None:
        embedding = np.asarray(manifest.tensor(entry['embedding']))
    return GazeSample(entry['id'], entry['user'],
                      entry.get('timestamp', 0.0), g,
                      entry.get('weight', 1.0),
                      _pose(manifest, entry, frame, solver),
                      patch, embedding, frame)


def iterate(manifest, users=None, solver=None, load_patch=True):
    """Yield the manifest's samples in (user, timestamp, id) order.

    A sample that fails to load is skipped with a
    :class:`~deskgaze.exceptions.SkippedSampleWarning` and recorded in
    ``manifest.diagnostics``; the iteration carries on.

    :param users: restrict to these user ids
    """
    for entry in manifest.entries(users):
        try:
            yield load_sample(manifest, entry, solver, load_patch)
        except (DeskGazeError, KeyError, TypeError, ValueError,
                IndexError) as e:
            message = 'skipped sample {0}: {1}'.format(entry['id'], e)
            warnings.warn(message, SkippedSampleWarning)
            manifest.diagnostics.append(message)


def user_split(user_ids, fraction=0.1, seed=0):
    """Split users into (kept, held_out) sorted lists.

    At least one user is held out whenever two or more are available.
    """
    users = sorted(set(user_ids))
    if len(users) < 2 or fraction <= 0:
        return users, []
    n_held = min(len(users) - 1, max(1, int(round(fraction * len(users)))))
    order = np.random.default_rng(seed).permutation(len(users))
    held = sorted(users[i] for i in order[:n_held])
    return [u for u in users if u not in held], held


class EmbeddingCache(object):
    """Embeddings keyed by sample id, tied to one encoder checkpoint hash.

    Asking for embeddings under a different encoder hash drops every cached
    entry first.
    """

    def __init__(self, encoder_hash=None):
        """Start empty."""
        self.encoder_hash = encoder_hash
        self._values = OrderedDict()

    def __len__(self):
        """Return the number of cached embeddings."""
        return len(self._values)

    def __contains__(self, sample_id):
        """Return True if ``sample_id`` is cached."""
        return sample_id in self._values

    def invalidate(self, encoder_hash=None):
        """Drop every entry and bind to ``encoder_hash``."""
        self._values.clear()
        self.encoder_hash = encoder_hash

    def get(self, encoder_hash, samples, compute):
        """Return embeddings for ``samples``, computing the missing ones.

        :param compute: callable mapping a list of samples to an (n, d) array
        """
        if encoder_hash != self.encoder_hash:
            self.invalidate(encoder_hash)
        missing = [s for s in samples if s.sample_id not in self._values]
        if missing:
            values = compute(missing)
            for sample, z in zip(missing, values):
                self._values[sample.sample_id] = np.asarray(z)
        return np.stack([self._values[s.sample_id] for s in samples])

    def save(self, path):
        """Write the cache to a tensor container."""
        container.save(path, self._values,
                       meta={'encoder_hash': self.encoder_hash})

    @classmethod
    def load(cls, path):
        """Read a cache written by :meth:`save`."""
        tensors, meta = container.load(path)
        cache = cls(meta.get('encoder_hash'))
        cache._values.update(tensors)
        return cache
