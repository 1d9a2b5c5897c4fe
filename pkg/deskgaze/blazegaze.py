# -*- coding: utf-8 -*-
"""BlazeGaze: encoder, decoder, gaze head, losses and stage-1 training.

The encoder maps an eye-strip patch to a 512-d embedding z; the decoder
reconstructs the patch from z; the gaze head maps z concatenated with the
12 z-scored head-pose values to normalized gaze. Stage 1 trains all three
jointly on

    beta_r * L_reconstruction + beta_g * L_gaze + beta_c * L_consistency
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

from collections import OrderedDict, namedtuple

import numpy as np
import pandas as pd
from scipy.spatial import distance

from . import data as gaze_data
from . import metrics
from .exceptions import (ConfigError, InvalidInputError, NonFiniteError,
                         ShapeError, TrainingDivergedError)
from .nn import container
from .nn.blaze import BlazeBlockSpec, blaze_block
from .nn.layers import (SAME, Conv2D, Conv2DTranspose, Dense,
                        GlobalAveragePool2D, Layer, ReLU, Reshape,
                        Sequential, Sigmoid)
from .nn.optim import Adam, ExponentialDecay
from .nn.tensor import TRAIN_DTYPE, load_state_dict, state_dict
from .preprocess import PATCH_SIZE, REDUCED_PATCH_SIZE, build_weight_grid, \
    weight_for

EMBEDDING_DIM = 512
POSE_FEATURES = 12
HEAD_HIDDEN = (16, 16)


class ModelProfile(namedtuple('ModelProfile',
                              ['name', 'patch_size', 'stem_channels',
                               'blocks', 'decoder_channels',
                               'embedding_dim'])):
    """Channel ladder and patch geometry of one model size.

    :param blocks: sequence of :class:`~deskgaze.nn.blaze.BlazeBlockSpec`
    :param decoder_channels: widths of the seed map and the three hidden
        upsampling stages; the decoder upsamples 16x in four steps
    """

    __slots__ = ()


FULL = ModelProfile(
    name='full',
    patch_size=PATCH_SIZE,
    stem_channels=24,
    blocks=(
        BlazeBlockSpec.single(24, 24),
        BlazeBlockSpec.single(24, 32, stride=2),
        BlazeBlockSpec.single(32, 48),
        BlazeBlockSpec.single(48, 64, stride=2),
        BlazeBlockSpec.double(64, 128, 32, stride=2),
        BlazeBlockSpec.double(128, 128, 32),
        BlazeBlockSpec.double(128, 128, 32, stride=2),
        BlazeBlockSpec.double(128, 128, 32),
        BlazeBlockSpec.double(128, 128, 32),
    ),
    decoder_channels=(8, 8, 8, 8),
    embedding_dim=EMBEDDING_DIM)

REDUCED = ModelProfile(
    name='reduced',
    patch_size=REDUCED_PATCH_SIZE,
    stem_channels=8,
    blocks=(
        BlazeBlockSpec.single(8, 8),
        BlazeBlockSpec.single(8, 12, stride=2),
        BlazeBlockSpec.single(12, 16),
        BlazeBlockSpec.single(16, 24, stride=2),
        BlazeBlockSpec.double(24, 32, 16, stride=2),
        BlazeBlockSpec.double(32, 32, 16),
        BlazeBlockSpec.double(32, 32, 16, stride=2),
        BlazeBlockSpec.double(32, 32, 16),
        BlazeBlockSpec.double(32, 32, 16),
    ),
    decoder_channels=(16, 16, 8, 8),
    embedding_dim=EMBEDDING_DIM)

PROFILES = {'full': FULL, 'reduced': REDUCED}


def get_profile(profile):
    """Resolve a profile name or pass a :class:`ModelProfile` through."""
    if isinstance(profile, ModelProfile):
        return profile
    try:
        return PROFILES[profile]
    except KeyError:
        raise ConfigError('unknown model profile {0!r}'.format(profile))


def build_encoder(profile, rng, dtype=TRAIN_DTYPE):
    """Patch (H, W, 3) -> embedding (embedding_dim,)."""
    layers = [Conv2D(3, profile.stem_channels, 5, stride=2, padding=SAME,
                     rng=rng, dtype=dtype, name='stem'),
              ReLU()]
    for i, spec in enumerate(profile.blocks):
        layers.append(blaze_block(spec, rng=rng, dtype=dtype,
                                  name='block%d' % (i + 1)))
    layers.append(Conv2D(profile.blocks[-1].out_channels,
                         profile.embedding_dim, 1, rng=rng, dtype=dtype,
                         name='project'))
    layers.append(GlobalAveragePool2D())
    return Sequential(layers, name='encoder')


def build_decoder(profile, rng, dtype=TRAIN_DTYPE):
    """Embedding -> reconstructed patch in [0, 1]."""
    h, w = profile.patch_size
    if h % 16 or w % 16:
        raise ConfigError('patch size must be a multiple of 16')
    c0, c1, c2, c3 = profile.decoder_channels
    seed = (h // 16, w // 16, c0)
    layers = [Dense(profile.embedding_dim, int(np.prod(seed)), rng=rng,
                    dtype=dtype, name='seed'),
              ReLU(),
              Reshape(seed)]
    for i, (cin, cout) in enumerate([(c0, c1), (c1, c2), (c2, c3)]):
        layers.append(Conv2DTranspose(cin, cout, 2, 2, rng=rng, dtype=dtype,
                                      name='up%d' % (i + 1)))
        layers.append(ReLU())
    layers.append(Conv2DTranspose(c3, 3, 2, 2, rng=rng, dtype=dtype,
                                  name='up4'))
    layers.append(Sigmoid())
    return Sequential(layers, name='decoder')


def build_gaze_head(in_features=EMBEDDING_DIM + POSE_FEATURES,
                    hidden=HEAD_HIDDEN, rng=None, dtype=TRAIN_DTYPE):
    """MLP [z, h] -> g with ReLU hidden layers and a linear 2-d output."""
    rng = np.random.default_rng(rng) if not hasattr(rng, 'uniform') else rng
    layers = []
    width = in_features
    for i, size in enumerate(hidden):
        layers.append(Dense(width, size, rng=rng, dtype=dtype,
                            name='hidden%d' % (i + 1)))
        layers.append(ReLU())
        width = size
    layers.append(Dense(width, 2, rng=rng, dtype=dtype, name='gaze'))
    return Sequential(layers, name='gaze_head')


class _InferenceModel(Layer):
    """Encoder plus gaze head, the part deployed for prediction."""

    def __init__(self, encoder, gaze_head, pose_features):
        super(_InferenceModel, self).__init__('inference')
        self.encoder = encoder
        self.gaze_head = gaze_head
        self.pose_features = pose_features

    def parameters(self):
        return self.encoder.parameters() + self.gaze_head.parameters()

    def forward(self, inputs):
        patches, pose = inputs
        z = self.encoder.forward(patches)
        return self.gaze_head.forward(np.concatenate([z, pose], axis=1))

    def macs(self, input_shape):
        z_shape = self.encoder.output_shape(input_shape)
        return self.encoder.macs(input_shape) + self.gaze_head.macs(
            (z_shape[0] + self.pose_features,))


class BlazeGazeModel(object):
    """Encoder, decoder and gaze head of one profile.

    :param profile: ``'full'``, ``'reduced'`` or a :class:`ModelProfile`
    :param seed: initialization seed
    """

    def __init__(self, profile='full', seed=0, dtype=TRAIN_DTYPE):
        """Build and initialize all three components."""
        self.profile = get_profile(profile)
        self.seed = seed
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.encoder = build_encoder(self.profile, rng, dtype)
        self.decoder = build_decoder(self.profile, rng, dtype)
        self.gaze_head = build_gaze_head(
            self.profile.embedding_dim + POSE_FEATURES, rng=rng, dtype=dtype)

    @property
    def patch_shape(self):
        """Return the (H, W, 3) input shape."""
        return tuple(self.profile.patch_size) + (3,)

    @property
    def components(self):
        """Return the named components in checkpoint order."""
        return OrderedDict([('encoder', self.encoder),
                            ('decoder', self.decoder),
                            ('gaze_head', self.gaze_head)])

    def parameters(self):
        """Return every trainable tensor."""
        return [p for c in self.components.values() for p in c.parameters()]

    def named_parameters(self, prefix=''):
        """Qualify parameters with their component name."""
        named = []
        for name, component in self.components.items():
            named.extend(component.named_parameters(
                '%s%s.' % (prefix, name)))
        return named

    def zero_grad(self):
        """Reset every gradient."""
        for p in self.parameters():
            p.zero_grad()

    def inference_layers(self):
        """Encoder plus gaze head as one layer, for size and FLOP reports."""
        return _InferenceModel(self.encoder, self.gaze_head, POSE_FEATURES)

    def _check_patches(self, patches):
        patches = np.asarray(patches)
        if patches.shape[1:] != self.patch_shape:
            raise ShapeError('patch batch', (None,) + self.patch_shape,
                             patches.shape)
        return patches.astype(self.dtype, copy=False)

    def encode(self, patches):
        """Return embeddings (B, 512) of a patch batch."""
        return self.encoder.forward(self._check_patches(patches))

    def decode(self, z):
        """Return reconstructions (B, H, W, 3)."""
        return self.decoder.forward(z)

    def predict_gaze(self, z, pose_features):
        """Return normalized gaze (B, 2) from embeddings and pose features."""
        pose_features = np.asarray(pose_features, dtype=self.dtype)
        if pose_features.ndim != 2 or pose_features.shape[1] != POSE_FEATURES:
            raise ShapeError('pose features', (None, POSE_FEATURES),
                             pose_features.shape)
        return self.gaze_head.forward(
            np.concatenate([z, pose_features], axis=1))

    def forward(self, patches, pose_features):
        """Return ``(z, reconstruction, gaze)``."""
        z = self.encode(patches)
        return z, self.decode(z), self.predict_gaze(z, pose_features)

    def embed(self, patches, batch_size=32):
        """Encode many patches in batches."""
        patches = np.asarray(patches)
        out = [self.encode(patches[i:i + batch_size])
               for i in range(0, len(patches), batch_size)]
        return np.concatenate(out, axis=0) if out else \
            np.zeros((0, self.profile.embedding_dim), self.dtype)

    def state(self, components=('encoder', 'decoder', 'gaze_head')):
        """Ordered parameter copies of the selected components."""
        values = OrderedDict()
        for name in components:
            for key, value in state_dict(self.components[name]).items():
                values['%s.%s' % (name, key)] = value
        return values

    def load_state(self, values, strict=True):
        """Load parameters written by :meth:`state`."""
        for name, component in self.components.items():
            prefix = name + '.'
            part = OrderedDict((k[len(prefix):], v) for k, v in
                               values.items() if k.startswith(prefix))
            if part or strict:
                load_state_dict(component, part, strict=strict)

    def encoder_hash(self):
        """SHA-256 of the encoder parameters."""
        return container.params_digest(self.state(('encoder',)))

    def save(self, path, meta=None, include_decoder=True):
        """Write a checkpoint container."""
        components = ('encoder', 'decoder', 'gaze_head') if include_decoder \
            else ('encoder', 'gaze_head')
        header = {'profile': self.profile.name, 'seed': self.seed,
                  'components': list(components)}
        header.update(meta or {})
        container.save(path, self.state(components), header)

    @classmethod
    def load(cls, path):
        """Read a checkpoint written by :meth:`save`.

        :returns: tuple ``(model, meta)``
        """
        values, meta = container.load(path)
        model = cls(meta.get('profile', 'full'), seed=meta.get('seed', 0))
        model.load_state(values, strict=False)
        return model, meta


class LossWeights(namedtuple('LossWeights', 'beta_r beta_g beta_c')):
    """Weights of the reconstruction, gaze and consistency terms."""

    __slots__ = ()

    def __new__(cls, beta_r=1.0, beta_g=1.0, beta_c=0.5):
        """Validate the weights."""
        values = [float(v) for v in (beta_r, beta_g, beta_c)]
        if min(values) < 0:
            raise ConfigError('loss weights must be non-negative')
        if max(values) == 0:
            raise ConfigError('at least one loss weight must be positive')
        return super(LossWeights, cls).__new__(cls, *values)


def _pixels(patch):
    return np.asarray(getattr(patch, 'pixels', patch))


def loss_reconstruction(image, reconstruction, return_grad=False):
    """Mean squared pixel difference.

    :returns: the loss, or ``(loss, d_loss / d_reconstruction)``
    """
    image = _pixels(image)
    reconstruction = _pixels(reconstruction)
    if image.shape != reconstruction.shape:
        raise ShapeError('reconstruction shape', image.shape,
                         reconstruction.shape)
    diff = reconstruction - image
    loss = float(np.mean(diff * diff))
    if not return_grad:
        return loss
    return loss, 2.0 * diff / diff.size


def loss_gaze(pred, true, weights, return_grad=False):
    """Weighted L2 loss ``1/B * sum_i w_i * ||pred_i - true_i||^2``.

    :returns: the loss, or ``(loss, d_loss / d_pred)``
    :raises NonFiniteError: on NaN or infinite inputs
    """
    pred = np.asarray(pred)
    true = np.asarray(true)
    weights = np.asarray(weights).reshape(-1)
    if pred.shape != true.shape or pred.shape[0] != weights.shape[0]:
        raise ShapeError('gaze batch', true.shape, pred.shape)
    for name, value in (('pred', pred), ('true', true),
                        ('weights', weights)):
        if not np.all(np.isfinite(value)):
            raise NonFiniteError('non-finite gaze loss input', name)
    b = pred.shape[0]
    diff = pred - true
    loss = float(np.sum(weights * np.sum(diff * diff, axis=1)) / b)
    if not return_grad:
        return loss
    return loss, 2.0 * weights[:, None] * diff / b


def loss_consistency(z, g, weights, eps=1e-8, return_grad=False):
    """Embedding distances should follow normalized gaze distances.

    delta_ij = ||g_i - g_j|| / (max ||g_i - g_j|| + eps) and the loss is
    ``1/B^2 * sum_ij w_i * w_j * (||z_i - z_j|| - delta_ij)^2``.

    :returns: the loss, or ``(loss, d_loss / d_z)``
    """
    z = np.asarray(z)
    g = np.asarray(g, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    b = z.shape[0]
    if b < 2:
        raise InvalidInputError('consistency loss needs a batch of two')
    if g.shape[0] != b or weights.shape[0] != b:
        raise ShapeError('consistency batch', (b,), (g.shape[0],))
    dz = distance.cdist(z, z)
    dg = distance.cdist(g, g)
    delta = dg / (dg.max() + eps)
    pair = np.outer(weights, weights)
    residual = dz - delta
    loss = float(np.sum(pair * residual * residual) / (b * b))
    if not return_grad:
        return loss
    coeff = 2.0 * pair * residual / (b * b)
    with np.errstate(divide='ignore', invalid='ignore'):
        a = np.where(dz > 0, coeff / dz, 0.0)
    grad = 2.0 * (a.sum(axis=1)[:, None] * z - a.dot(z))
    return loss, grad.astype(z.dtype)


def total_loss(l_reconstruction, l_gaze, l_consistency, weights=None):
    """Combine the three terms with :class:`LossWeights`."""
    weights = weights or LossWeights()
    return (weights.beta_r * l_reconstruction + weights.beta_g * l_gaze
            + weights.beta_c * l_consistency)


class PoseNormalizer(object):
    """Z-scoring of the 12 head-pose values, fitted on training samples."""

    def __init__(self, mean=None, std=None):
        """Default to the identity transform."""
        self.mean = np.zeros(POSE_FEATURES) if mean is None \
            else np.asarray(mean, dtype=np.float64)
        self.std = np.ones(POSE_FEATURES) if std is None \
            else np.asarray(std, dtype=np.float64)

    @classmethod
    def fit(cls, features):
        """Fit on an (N, 12) array; constant columns keep unit scale."""
        features = np.asarray(features, dtype=np.float64).reshape(
            -1, POSE_FEATURES)
        std = features.std(axis=0)
        std[std < 1e-8] = 1.0
        return cls(features.mean(axis=0), std)

    def transform(self, features):
        """Z-score raw features, shape (N, 12)."""
        features = np.asarray(features, dtype=np.float64)
        return (features - self.mean) / self.std

    def to_dict(self):
        """Return a JSON-serializable dict."""
        return {'mean': self.mean.tolist(), 'std': self.std.tolist()}

    @classmethod
    def from_dict(cls, data):
        """Build a normalizer from :meth:`to_dict` output."""
        return cls(data['mean'], data['std'])


class Stage1Config(object):
    """Representation-training hyperparameters.

    :param epochs: passes over the training users
    :param batch_size: samples per Adam step
    :param lr: initial learning rate
    :param decay: per-epoch exponential learning-rate decay
    :param val_fraction: share of users held out for validation
    """

    def __init__(self, epochs=20, batch_size=8, lr=1e-3, decay=0.95,
                 loss_weights=None, seed=0, profile='reduced',
                 val_fraction=0.1, eps=1e-8):
        """Validate and store the configuration."""
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.lr = float(lr)
        self.decay = float(decay)
        if isinstance(loss_weights, dict):
            loss_weights = LossWeights(**loss_weights)
        self.loss_weights = loss_weights or LossWeights()
        self.seed = int(seed)
        self.profile = profile
        self.val_fraction = float(val_fraction)
        self.eps = float(eps)
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0 or \
                not 0 < self.decay <= 1 or not 0 <= self.val_fraction < 1:
            raise ConfigError('invalid stage-1 configuration')
        get_profile(profile)

    def to_dict(self):
        """Return the configuration as a dict."""
        return {'epochs': self.epochs, 'batch_size': self.batch_size,
                'lr': self.lr, 'decay': self.decay,
                'loss_weights': dict(self.loss_weights._asdict()),
                'seed': self.seed,
                'profile': get_profile(self.profile).name,
                'val_fraction': self.val_fraction, 'eps': self.eps}

    @classmethod
    def from_dict(cls, data):
        """Build a config, rejecting unknown keys."""
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ConfigError(
                'unknown stage-1 keys: {0}'.format(sorted(unknown)))
        return cls(**dict((str(k), v) for k, v in data.items()))


Stage1Result = namedtuple(
    'Stage1Result',
    ['model', 'history', 'best_epoch', 'best_val_loss', 'pose_normalizer',
     'weight_grid', 'train_users', 'val_users'])


class _Arrays(namedtuple('_Arrays', 'patches pose gaze weight')):
    __slots__ = ()

    def __len__(self):
        return self.gaze.shape[0]

    def take(self, index):
        return _Arrays(self.patches[index], self.pose[index],
                       self.gaze[index], self.weight[index])


def _stack(samples, normalizer, grid, dtype):
    if not samples:
        return None
    return _Arrays(
        np.stack([_pixels(s.patch) for s in samples]).astype(dtype),
        normalizer.transform(
            np.stack([s.pose_features() for s in samples])).astype(dtype),
        np.stack([s.gaze for s in samples]),
        np.array([weight_for(grid, s.gaze) for s in samples]))


def _batch_losses(model, batch, cfg, backward):
    w = cfg.loss_weights
    z = model.encode(batch.patches)
    recon = model.decode(z)
    head_in = np.concatenate([z, batch.pose], axis=1)
    pred = model.gaze_head.forward(head_in)

    l_r, d_recon = loss_reconstruction(batch.patches, recon, True)
    l_g, d_pred = loss_gaze(pred, batch.gaze, batch.weight, True)
    if len(batch) > 1:
        l_c, d_z = loss_consistency(z, batch.gaze, batch.weight, cfg.eps,
                                    True)
    else:
        l_c, d_z = 0.0, np.zeros_like(z)
    total = total_loss(l_r, l_g, l_c, w)
    if backward and np.isfinite(total):
        dz = model.decoder.backward((w.beta_r * d_recon).astype(z.dtype))
        dz = dz + model.gaze_head.backward(
            (w.beta_g * d_pred).astype(z.dtype))[:, :z.shape[1]]
        dz = dz + w.beta_c * d_z
        model.encoder.backward(dz)
    return np.array([total, l_r, l_g, l_c])


def _evaluate(model, arrays, cfg):
    sums = np.zeros(4)
    for start in range(0, len(arrays), cfg.batch_size):
        batch = arrays.take(slice(start, start + cfg.batch_size))
        sums += len(batch) * _batch_losses(model, batch, cfg, False)
    return sums / len(arrays)


def _record(history, epoch, split, lr, losses, log):
    row = OrderedDict([('epoch', epoch), ('split', split), ('lr', lr),
                       ('loss_total', losses[0]),
                       ('loss_reconstruction', losses[1]),
                       ('loss_gaze', losses[2]),
                       ('loss_consistency', losses[3])])
    history.append(row)
    metrics.EpochMetrics(**row)
    if log is not None:
        metrics.EpochMetrics.commit(log)
    else:
        metrics.EpochMetrics._reset_()


def train_stage1(samples, cfg=None, model=None, metrics_log=None):
    """Train encoder, decoder and gaze head jointly.

    Users are split into training and validation users; epoch 0 records the
    untrained losses. The model returned holds the parameters of the epoch
    with the lowest validation loss.

    :param samples: :class:`~deskgaze.data.GazeSample` list with patches
        and poses
    :param metrics_log: optional :class:`~deskgaze.metrics.MetricsLog`
    :rtype: :class:`Stage1Result`
    :raises TrainingDivergedError: on a non-finite loss or gradient; the
        error carries the best checkpoint so far
    """
    cfg = cfg or Stage1Config()
    samples = list(samples)
    if not samples:
        raise InvalidInputError('no training samples')
    model = model or BlazeGazeModel(cfg.profile, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    train_users, val_users = gaze_data.user_split(
        [s.user_id for s in samples], cfg.val_fraction, cfg.seed)
    train = [s for s in samples if s.user_id in train_users]
    val = [s for s in samples if s.user_id in val_users] or train

    normalizer = PoseNormalizer.fit([s.pose_features() for s in train])
    grid = build_weight_grid([s.gaze for s in train])
    train_arrays = _stack(train, normalizer, grid, model.dtype)
    val_arrays = _stack(val, normalizer, grid, model.dtype)

    schedule = ExponentialDecay(cfg.lr, cfg.decay)
    optimizer = Adam(cfg.lr, schedule=schedule)
    history = []

    best_loss = _evaluate(model, val_arrays, cfg)
    _record(history, 0, 'val', cfg.lr, best_loss, metrics_log)
    best_loss, best_epoch, best_state = best_loss[0], 0, model.state()

    for epoch in range(1, cfg.epochs + 1):
        optimizer.set_epoch(epoch - 1)
        order = rng.permutation(len(train_arrays))
        sums = np.zeros(4)
        for start in range(0, len(order), cfg.batch_size):
            batch = train_arrays.take(order[start:start + cfg.batch_size])
            model.zero_grad()
            losses = _batch_losses(model, batch, cfg, True)
            if not np.isfinite(losses[0]):
                raise TrainingDivergedError('non-finite loss', best_state,
                                            epoch)
            try:
                optimizer.apply(model.named_parameters())
            except NonFiniteError as e:
                raise TrainingDivergedError(str(e), best_state, epoch)
            sums += len(batch) * losses
        _record(history, epoch, 'train', optimizer.lr,
                sums / len(train_arrays), metrics_log)

        val_loss = _evaluate(model, val_arrays, cfg)
        _record(history, epoch, 'val', optimizer.lr, val_loss, metrics_log)
        if val_loss[0] < best_loss:
            best_loss, best_epoch, best_state = \
                val_loss[0], epoch, model.state()

    model.load_state(best_state)
    return Stage1Result(model, pd.DataFrame(history), best_epoch,
                        float(best_loss), normalizer, grid, train_users,
                        val_users)