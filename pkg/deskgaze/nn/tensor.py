# -*- coding: utf-8 -*-
"""Parameter tensors and initializers."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

from collections import OrderedDict

import numpy as np

from ..exceptions import ShapeError

#: dtype used for training runs
TRAIN_DTYPE = np.float32
#: dtype used for gradient checks
CHECK_DTYPE = np.float64


class Tensor(object):
    """A named value buffer with an optional gradient of the same shape."""

    def __init__(self, values, name=None):
        """Wrap ``values``; the gradient starts out empty."""
        self.values = np.asarray(values)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        """Return the value shape."""
        return self.values.shape

    @property
    def size(self):
        """Return the number of scalar values."""
        return int(self.values.size)

    def zero_grad(self):
        """Reset the gradient to zeros."""
        self.grad = np.zeros_like(self.values)

    def accumulate(self, grad):
        """Add ``grad`` into the gradient buffer."""
        if grad.shape != self.values.shape:
            raise ShapeError('gradient shape mismatch for %s' % self.name,
                             self.values.shape, grad.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.values.dtype)
        else:
            self.grad += grad

    def __repr__(self):
        """Show name and shape."""
        return 'Tensor(%s, shape=%s)' % (self.name, self.shape)


def he_uniform(shape, fan_in, rng, dtype=TRAIN_DTYPE):
    """Fan-in scaled uniform initialization for ReLU networks."""
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def state_dict(module):
    """Copy every parameter of ``module`` into an ordered name -> array map."""
    return OrderedDict((name, tensor.values.copy())
                       for name, tensor in module.named_parameters())


def load_state_dict(module, values, strict=True):
    """Copy arrays from ``values`` into the parameters of ``module``."""
    named = OrderedDict(module.named_parameters())
    if strict:
        missing = set(named) - set(values)
        if missing:
            raise ShapeError('missing parameters: %s' % sorted(missing))
    for name, tensor in named.items():
        if name not in values:
            continue
        array = np.asarray(values[name])
        if array.shape != tensor.shape:
            raise ShapeError('parameter %s' % name, tensor.shape,
                             array.shape)
        tensor.values = array.astype(tensor.values.dtype, copy=True)


def gradients(module):
    """Return an ordered name -> gradient map (zeros where unset)."""
    return OrderedDict(
        (name, tensor.grad if tensor.grad is not None
         else np.zeros_like(tensor.values))
        for name, tensor in module.named_parameters())
