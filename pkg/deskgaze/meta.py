# -*- coding: utf-8 -*-
"""First-order MAML over the gaze head, and per-user personalization.

The encoder is frozen here: tasks carry precomputed embeddings z, so only
the gaze-head parameters theta move. Meta-training adapts theta on each
task's support set with plain SGD and applies the query-loss gradient at
the adapted parameters directly to theta with Adam. Personalization runs
the same inner loop from the meta-trained theta* on a user's calibration
samples.
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import warnings
from collections import OrderedDict, namedtuple

import numpy as np
import pandas as pd
import six

from . import metrics
from .blazegaze import BlazeGazeModel, build_gaze_head, loss_gaze
from .exceptions import (AdaptationWarning, ConfigError, InvalidInputError,
                         NonFiniteError)
from .geometry import pog_error_cm
from .nn import container
from .nn.optim import SGD, Adam
from .nn.tensor import CHECK_DTYPE, gradients, load_state_dict, state_dict
from .preprocess import weight_for


class SampleSet(namedtuple('SampleSet', 'z h g w')):
    """Embeddings, z-scored pose features, gaze labels and weights."""

    __slots__ = ()

    def __new__(cls, z, h, g, w):
        """Validate that all four arrays agree on the sample count."""
        z = np.asarray(z, dtype=np.float64)
        h = np.asarray(h, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64).reshape(-1, 2)
        w = np.asarray(w, dtype=np.float64).reshape(-1)
        if z.ndim != 2 or h.ndim != 2:
            raise InvalidInputError('z and h must be 2-d arrays')
        if not len(z) == len(h) == len(g) == len(w):
            raise InvalidInputError('sample set arrays disagree in length')
        return super(SampleSet, cls).__new__(cls, z, h, g, w)

    def __len__(self):
        """Return the number of samples."""
        return self.g.shape[0]

    @property
    def inputs(self):
        """Gaze-head input [z, h]."""
        return np.concatenate([self.z, self.h], axis=1)

    def take(self, index):
        """Select samples by index array or slice."""
        return SampleSet(self.z[index], self.h[index], self.g[index],
                         self.w[index])

    def concat(self, other):
        """Append ``other`` after this set."""
        if len(self) == 0:
            return other
        if len(other) == 0:
            return self
        return SampleSet(np.concatenate([self.z, other.z]),
                         np.concatenate([self.h, other.h]),
                         np.concatenate([self.g, other.g]),
                         np.concatenate([self.w, other.w]))

    def to_tensors(self, prefix):
        """Arrays keyed for a tensor container."""
        return OrderedDict((prefix + name, getattr(self, name))
                           for name in self._fields)

    @classmethod
    def from_tensors(cls, tensors, prefix):
        """Inverse of :meth:`to_tensors`."""
        return cls(*[tensors[prefix + name] for name in cls._fields])


Task = namedtuple('Task', ['user_id', 'support', 'query'])


class MetaConfig(object):
    """Meta-training and personalization hyperparameters.

    :param inner_lr: SGD rate of the meta-training inner loop
    :param outer_lr: Adam rate of the meta-update
    :param meta_steps: outer steps
    :param inner_steps: SGD updates per task
    :param k: support samples per task
    :param l: query samples per task
    :param tasks_per_step: tasks sampled per outer step
    :param adapt_lr: SGD rate of test-time personalization
    :param adapt_steps: SGD updates of test-time personalization
    :param max_support: calibration samples kept per user
    """

    def __init__(self, inner_lr=1e-5, outer_lr=1e-3, meta_steps=1000,
                 inner_steps=5, k=9, l=100, tasks_per_step=1, seed=0,
                 adapt_lr=1e-2, adapt_steps=100, max_support=64):
        """Validate and store the configuration."""
        self.inner_lr = float(inner_lr)
        self.outer_lr = float(outer_lr)
        self.meta_steps = int(meta_steps)
        self.inner_steps = int(inner_steps)
        self.k = int(k)
        self.l = int(l)
        self.tasks_per_step = int(tasks_per_step)
        self.seed = int(seed)
        self.adapt_lr = float(adapt_lr)
        self.adapt_steps = int(adapt_steps)
        self.max_support = int(max_support)
        if min(self.inner_lr, self.adapt_lr) < 0 or self.outer_lr <= 0:
            raise ConfigError('learning rates must be non-negative')
        if min(self.meta_steps, self.k, self.l, self.tasks_per_step,
               self.max_support) < 1 or \
                min(self.inner_steps, self.adapt_steps) < 0:
            raise ConfigError('invalid meta configuration')

    def to_dict(self):
        """Return the configuration as a dict."""
        return {'inner_lr': self.inner_lr, 'outer_lr': self.outer_lr,
                'meta_steps': self.meta_steps,
                'inner_steps': self.inner_steps, 'k': self.k, 'l': self.l,
                'tasks_per_step': self.tasks_per_step, 'seed': self.seed,
                'adapt_lr': self.adapt_lr, 'adapt_steps': self.adapt_steps,
                'max_support': self.max_support}

    @classmethod
    def from_dict(cls, data):
        """Build a config, rejecting unknown keys."""
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ConfigError(
                'unknown meta keys: {0}'.format(sorted(unknown)))
        return cls(**dict((str(k), v) for k, v in data.items()))


def head_params(model):
    """Gaze-head parameters of a model as float64 copies."""
    return OrderedDict((k, v.astype(CHECK_DTYPE))
                       for k, v in state_dict(model.gaze_head).items())


def params_equal(a, b):
    """Return True if two parameter maps are bitwise identical."""
    return list(a) == list(b) and all(
        np.array_equal(a[k], b[k]) for k in a)


class HeadEvaluator(object):
    """Scratch gaze head used to evaluate parameter maps.

    Parameter maps are loaded into a private module, so callers' arrays are
    never written.
    """

    def __init__(self, params):
        """Size the scratch head from a parameter map."""
        kernels = [v for k, v in params.items() if k.endswith('kernel')]
        hidden = tuple(k.shape[1] for k in kernels[:-1])
        self.head = build_gaze_head(kernels[0].shape[0], hidden, rng=0,
                                    dtype=CHECK_DTYPE)

    def predict(self, params, samples):
        """Gaze predictions (n, 2)."""
        load_state_dict(self.head, params)
        return self.head.forward(samples.inputs)

    def loss(self, params, samples, return_grad=False):
        """Weighted gaze loss, optionally with the parameter gradients."""
        load_state_dict(self.head, params)
        self.head.zero_grad()
        pred = self.head.forward(samples.inputs)
        if not return_grad:
            return loss_gaze(pred, samples.g, samples.w)
        loss, d_pred = loss_gaze(pred, samples.g, samples.w, True)
        self.head.backward(d_pred)
        return loss, gradients(self.head)


def _copy(params):
    return OrderedDict((k, v.copy()) for k, v in params.items())


def inner_adapt(theta, support, alpha, steps, evaluator=None,
                diagnostics=None):
    """Run ``steps`` SGD updates of the gaze loss on ``support``.

    ``theta`` is never modified. When the loss or a gradient stops being
    finite, adaptation aborts and a copy of ``theta`` is returned with an
    :class:`~deskgaze.exceptions.AdaptationWarning`.

    :returns: the adapted parameter map
    """
    if len(support) == 0:
        raise InvalidInputError('support set is empty')
    evaluator = evaluator or HeadEvaluator(theta)
    optimizer = SGD(alpha)
    params = _copy(theta)
    for _ in range(steps):
        try:
            loss, grads = evaluator.loss(params, support, return_grad=True)
            if not np.isfinite(loss):
                raise NonFiniteError('non-finite support loss')
            params = optimizer.update(params, grads)
        except NonFiniteError as e:
            message = 'inner adaptation aborted: {0}'.format(e)
            warnings.warn(message, AdaptationWarning)
            if diagnostics is not None:
                diagnostics.append(message)
            return _copy(theta)
    return params


def meta_step(theta, tasks, cfg, optimizer, evaluator=None):
    """One first-order meta-update.

    Each task adapts ``theta`` on its support set; the query-loss gradients
    at the adapted parameters are summed and applied to ``theta``.

    :param optimizer: the outer :class:`~deskgaze.nn.optim.Adam`
    :returns: tuple ``(updated_theta, meta_loss)``
    """
    evaluator = evaluator or HeadEvaluator(theta)
    meta_loss = 0.0
    total = OrderedDict((k, np.zeros_like(v)) for k, v in theta.items())
    for task in tasks:
        adapted = inner_adapt(theta, task.support, cfg.inner_lr,
                              cfg.inner_steps, evaluator)
        loss, grads = evaluator.loss(adapted, task.query, return_grad=True)
        meta_loss += loss
        for name, grad in six.iteritems(grads):
            total[name] += grad
    return optimizer.update(theta, total), float(meta_loss)


def sample_task(user_id, samples, k, l, rng):
    """Draw disjoint support and query sets from one user's samples.

    With fewer than ``k + l`` samples the query takes whatever the support
    leaves, at least one sample.
    """
    n = len(samples)
    if n < 2:
        raise InvalidInputError(
            'user {0} needs at least 2 samples'.format(user_id))
    order = rng.permutation(n)
    k = min(k, n - 1)
    return Task(user_id, samples.take(np.sort(order[:k])),
                samples.take(np.sort(order[k:k + l])))


Stage2Result = namedtuple('Stage2Result', ['theta', 'history'])


def train_stage2(theta, user_samples, cfg=None, metrics_log=None):
    """Meta-train gaze-head parameters on per-user sample sets.

    :param user_samples: dict of user id -> :class:`SampleSet`
    :rtype: :class:`Stage2Result`
    """
    cfg = cfg or MetaConfig()
    users = sorted(u for u, s in user_samples.items() if len(s) >= 2)
    if not users:
        raise InvalidInputError('no user has enough samples for a task')
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(cfg.outer_lr)
    evaluator = HeadEvaluator(theta)
    theta = _copy(theta)
    history = []
    for step in range(1, cfg.meta_steps + 1):
        picks = rng.choice(len(users), size=cfg.tasks_per_step,
                           replace=len(users) < cfg.tasks_per_step)
        tasks = [sample_task(users[i], user_samples[users[i]], cfg.k, cfg.l,
                             rng) for i in picks]
        theta, meta_loss = meta_step(theta, tasks, cfg, optimizer, evaluator)
        history.append(OrderedDict([('step', step), ('meta_loss', meta_loss),
                                    ('tasks', len(tasks))]))
        metrics.MetaStepMetrics(split='train', **history[-1])
        if metrics_log is not None and (step % 50 == 0 or
                                        step == cfg.meta_steps):
            metrics.MetaStepMetrics.commit(metrics_log)
    metrics.MetaStepMetrics._reset_()
    return Stage2Result(theta, pd.DataFrame(history))


def save_meta_checkpoint(path, model, theta, meta=None):
    """Write the frozen encoder with the meta-trained head theta*.

    theta* is stored at full precision under ``theta.``; the model's own
    gaze head is kept as the stage-1 reference.
    """
    tensors = model.state(('encoder', 'gaze_head'))
    for name, value in theta.items():
        tensors['theta.' + name] = value
    header = {'profile': model.profile.name, 'seed': model.seed,
              'components': ['encoder', 'gaze_head'], 'stage': 'meta'}
    header.update(meta or {})
    container.save(path, tensors, header)


def load_meta_checkpoint(path):
    """Read a checkpoint written by :func:`save_meta_checkpoint`.

    :returns: tuple ``(model, theta, meta)``
    """
    model, meta = BlazeGazeModel.load(path)
    tensors = container.load(path)[0]
    theta = OrderedDict((k[len('theta.'):], v.astype(CHECK_DTYPE))
                        for k, v in tensors.items() if k.startswith('theta.'))
    if not theta:
        raise InvalidInputError('{0} holds no meta-trained head'.format(path))
    return model, theta, meta


def support_hash(support):
    """SHA-256 of a support set, order sensitive."""
    return container.params_digest(support.to_tensors(''))


class PersonalizedHead(object):
    """Adapted gaze-head parameters with their provenance.

    :param params: adapted parameters theta_test
    :param base: the meta-trained parameters adaptation started from
    :param support: the calibration samples used
    :param provenance: dict with ``meta_checkpoint``, ``support_hash``,
        ``inner_steps``, ``lr``, ``support_size`` and ``evicted``
    """

    def __init__(self, params, base, support, provenance):
        """Store the head."""
        missing = set(['meta_checkpoint', 'support_hash', 'inner_steps',
                       'lr', 'support_size']) - set(provenance)
        if missing:
            raise InvalidInputError(
                'incomplete provenance: {0}'.format(sorted(missing)))
        self.params = params
        self.base = base
        self.support = support
        self.provenance = dict(provenance)

    def predict(self, samples):
        """Gaze predictions for a :class:`SampleSet`."""
        return HeadEvaluator(self.params).predict(self.params, samples)

    def save(self, path):
        """Write the head, its base and its support set to a container."""
        tensors = OrderedDict()
        for name, value in self.params.items():
            tensors['head.' + name] = value
        for name, value in self.base.items():
            tensors['base.' + name] = value
        tensors.update(self.support.to_tensors('support.'))
        container.save(path, tensors, {'provenance': self.provenance})

    @classmethod
    def load(cls, path):
        """Read a head written by :meth:`save`."""
        tensors, meta = container.load(path)

        def part(prefix):
            return OrderedDict((k[len(prefix):], v) for k, v in
                               tensors.items() if k.startswith(prefix))
        return cls(part('head.'), part('base.'),
                   SampleSet.from_tensors(tensors, 'support.'),
                   meta['provenance'])


def personalize(theta_star, support, cfg=None, meta_checkpoint=None,
                evicted=0):
    """Adapt theta* to one user's calibration samples.

    :raises InvalidInputError: on an empty or oversized support set
    :rtype: :class:`PersonalizedHead`
    """
    cfg = cfg or MetaConfig()
    if len(support) == 0:
        raise InvalidInputError('support set is empty')
    if len(support) > cfg.max_support:
        raise InvalidInputError(
            'support set of {0} exceeds max_support={1}'
            .format(len(support), cfg.max_support))
    diagnostics = []
    params = inner_adapt(theta_star, support, cfg.adapt_lr, cfg.adapt_steps,
                         diagnostics=diagnostics)
    provenance = {'meta_checkpoint': meta_checkpoint,
                  'support_hash': support_hash(support),
                  'inner_steps': cfg.adapt_steps,
                  'lr': cfg.adapt_lr,
                  'support_size': len(support),
                  'evicted': int(evicted),
                  'diagnostics': diagnostics}
    return PersonalizedHead(params, _copy(theta_star), support, provenance)


def append_calibration(head, new_samples, cfg=None):
    """Grow the support set and re-adapt from theta*.

    Beyond ``cfg.max_support`` the oldest samples are evicted, with an
    :class:`~deskgaze.exceptions.AdaptationWarning`.
    """
    cfg = cfg or MetaConfig()
    if len(new_samples) == 0:
        return PersonalizedHead(_copy(head.params), head.base, head.support,
                                head.provenance)
    union = head.support.concat(new_samples)
    evicted = max(0, len(union) - cfg.max_support)
    if evicted:
        warnings.warn('evicted {0} oldest calibration samples'
                      .format(evicted), AdaptationWarning)
        union = union.take(slice(evicted, None))
    return personalize(head.base, union, cfg,
                       head.provenance.get('meta_checkpoint'),
                       head.provenance.get('evicted', 0) + evicted)


def evaluate_head(params, samples, screen):
    """Per-sample point-of-gaze error in cm."""
    pred = HeadEvaluator(params).predict(params, samples)
    return pog_error_cm(pred, samples.g, screen)


def embed_samples(model, samples, normalizer, grid=None, batch_size=32):
    """Turn :class:`~deskgaze.data.GazeSample` objects into a SampleSet.

    Cached embeddings are used where present; weights come from ``grid``
    or from the samples when no grid is given.
    """
    samples = list(samples)
    if not samples:
        return SampleSet(np.zeros((0, model.profile.embedding_dim)),
                         np.zeros((0, 12)), np.zeros((0, 2)), np.zeros(0))
    if all(s.embedding is not None for s in samples):
        z = np.stack([s.embedding for s in samples])
    else:
        z = model.embed(np.stack([s.patch for s in samples]), batch_size)
    h = normalizer.transform(np.stack([s.pose_features() for s in samples]))
    g = np.stack([s.gaze for s in samples])
    w = np.array([weight_for(grid, s.gaze) if grid is not None else s.weight
                  for s in samples])
    return SampleSet(z, h, g, w)
