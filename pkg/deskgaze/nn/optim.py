# -*- coding: utf-8 -*-
"""SGD and Adam with an exponential learning-rate schedule.

Optimizers work on ordered ``name -> array`` maps so the same instance can
update a module's tensors in place (:meth:`Optimizer.apply`) or produce new
parameter maps without touching its inputs (:meth:`Optimizer.update`).
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

from collections import OrderedDict

import numpy as np
import six

from ..exceptions import ConfigError, NonFiniteError, ShapeError

SGD_KIND = 'sgd'
ADAM_KIND = 'adam'


class ExponentialDecay(object):
    """Learning rate ``initial * rate ** epoch``.

    :param staircase: decay once per whole epoch when True, else continuously
    """

    def __init__(self, initial_lr, decay_rate=0.95, staircase=True):
        """Store the schedule."""
        if initial_lr < 0 or not 0 < decay_rate <= 1:
            raise ConfigError('invalid decay schedule')
        self.initial_lr = float(initial_lr)
        self.decay_rate = float(decay_rate)
        self.staircase = staircase

    def __call__(self, epoch):
        """Return the learning rate for ``epoch`` (0-based)."""
        if self.staircase:
            epoch = np.floor(epoch)
        return self.initial_lr * self.decay_rate ** epoch


class OptimizerState(object):
    """Mutable optimizer bookkeeping.

    :param kind: ``'sgd'`` or ``'adam'``
    :param lr: current learning rate
    :param schedule: optional :class:`ExponentialDecay`
    """

    def __init__(self, kind, lr, schedule=None):
        """Start at step 0 with empty moments."""
        self.kind = kind
        self.lr = float(lr)
        self.schedule = schedule
        self.step_count = 0
        self.m = {}
        self.v = {}


def _check_grads(params, grads):
    for name, grad in six.iteritems(grads):
        if name not in params:
            raise ShapeError('gradient for unknown parameter %s' % name)
        if np.shape(grad) != np.shape(params[name]):
            raise ShapeError('gradient of %s' % name, np.shape(params[name]),
                             np.shape(grad))
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError('non-finite gradient', name)


class Optimizer(object):
    """Shared plumbing of :class:`SGD` and :class:`Adam`."""

    kind = None

    def __init__(self, lr, schedule=None):
        """Initialize the state."""
        if lr < 0:
            raise ConfigError('learning rate must be non-negative')
        self.state = OptimizerState(self.kind, lr, schedule)

    @property
    def lr(self):
        """Return the current learning rate."""
        return self.state.lr

    def set_epoch(self, epoch):
        """Move the learning rate along the schedule, if any."""
        if self.state.schedule is not None:
            self.state.lr = self.state.schedule(epoch)

    def _delta(self, name, grad):
        raise NotImplementedError

    def update(self, params, grads):
        """Return a new parameter map after one step; inputs stay untouched.

        :raises NonFiniteError: if a gradient holds NaN or infinity
        """
        _check_grads(params, grads)
        self.state.step_count += 1
        updated = OrderedDict()
        for name, value in six.iteritems(params):
            if name in grads:
                value = value - self._delta(name, grads[name]).astype(
                    value.dtype)
            else:
                value = value.copy()
            updated[name] = value
        return updated

    def apply(self, named_tensors):
        """Step the tensors in place from their accumulated gradients."""
        named_tensors = list(named_tensors)
        params = OrderedDict((n, t.values) for n, t in named_tensors)
        grads = OrderedDict((n, t.grad) for n, t in named_tensors
                            if t.grad is not None)
        updated = self.update(params, grads)
        for name, tensor in named_tensors:
            tensor.values = updated[name]


class SGD(Optimizer):
    """Plain gradient descent, ``p <- p - lr * g``."""

    kind = SGD_KIND

    def _delta(self, name, grad):
        return self.state.lr * np.asarray(grad)


class Adam(Optimizer):
    """Adam with bias-corrected moments."""

    kind = ADAM_KIND

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-7,
                 schedule=None):
        """Initialize the state and the moment decay rates."""
        super(Adam, self).__init__(lr, schedule)
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon

    def _delta(self, name, grad):
        s = self.state
        grad = np.asarray(grad, dtype=np.float64)
        m = s.m.get(name, np.zeros_like(grad))
        v = s.v.get(name, np.zeros_like(grad))
        m = self.beta1 * m + (1 - self.beta1) * grad
        v = self.beta2 * v + (1 - self.beta2) * grad * grad
        s.m[name], s.v[name] = m, v
        m_hat = m / (1 - self.beta1 ** s.step_count)
        v_hat = v / (1 - self.beta2 ** s.step_count)
        return s.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


def make_optimizer(kind, lr, schedule=None):
    """Build an optimizer by kind name."""
    if kind == SGD_KIND:
        return SGD(lr, schedule=schedule)
    if kind == ADAM_KIND:
        return Adam(lr, schedule=schedule)
    raise ConfigError('unknown optimizer {0!r}'.format(kind))


def step(opt, params, grads):
    """Apply one optimizer step to a parameter map and return the result."""
    return opt.update(params, grads)
