# -*- coding: utf-8 -*-
"""Single and double BlazeBlocks.

A block runs a 5x5 depthwise convolution followed by a 1x1 pointwise
convolution; the double form adds a second depthwise/pointwise pair with a
narrower middle width. The residual path max-pools on stride 2 and zero-pads
missing channels, and the sum goes through a ReLU.
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

from collections import namedtuple

import numpy as np

from ..exceptions import InvalidInputError
from .layers import (SAME, Conv2D, DepthwiseConv2D, Layer, MaxPool2D, ReLU,
                     Sequential, _rng)
from .tensor import TRAIN_DTYPE

SINGLE = 'single'
DOUBLE = 'double'


class BlazeBlockSpec(namedtuple('BlazeBlockSpec',
                                'kind in_channels out_channels stride '
                                'mid_channels')):
    """Shape of one BlazeBlock.

    :param kind: ``'single'`` or ``'double'``
    :param mid_channels: width between the two pairs, double blocks only
    """

    __slots__ = ()

    def __new__(cls, kind, in_channels, out_channels, stride=1,
                mid_channels=None):
        """Validate the block shape."""
        if kind not in (SINGLE, DOUBLE):
            raise InvalidInputError('unknown block kind {0!r}'.format(kind))
        if stride not in (1, 2):
            raise InvalidInputError('stride must be 1 or 2, got %s' % stride)
        if min(in_channels, out_channels) < 1:
            raise InvalidInputError('channel counts must be positive')
        if out_channels < in_channels:
            raise InvalidInputError(
                'out_channels ({0}) must not be smaller than in_channels '
                '({1})'.format(out_channels, in_channels))
        if kind == DOUBLE:
            if mid_channels is None or mid_channels < 1:
                raise InvalidInputError('double blocks need mid_channels')
        elif mid_channels is not None:
            raise InvalidInputError('single blocks take no mid_channels')
        return super(BlazeBlockSpec, cls).__new__(
            cls, kind, int(in_channels), int(out_channels), int(stride),
            None if mid_channels is None else int(mid_channels))

    @classmethod
    def single(cls, in_channels, out_channels, stride=1):
        """Shortcut for a single block."""
        return cls(SINGLE, in_channels, out_channels, stride)

    @classmethod
    def double(cls, in_channels, out_channels, mid_channels, stride=1):
        """Shortcut for a double block."""
        return cls(DOUBLE, in_channels, out_channels, stride, mid_channels)


class BlazeBlock(Layer):
    """Depthwise-separable residual block from a :class:`BlazeBlockSpec`."""

    def __init__(self, spec, rng=None, dtype=TRAIN_DTYPE, name=None):
        """Create the main and residual paths."""
        super(BlazeBlock, self).__init__(name or spec.kind + '_block')
        rng = _rng(rng)
        self.spec = spec
        first_out = spec.mid_channels if spec.kind == DOUBLE \
            else spec.out_channels
        layers = [
            DepthwiseConv2D(spec.in_channels, 5, spec.stride, SAME, rng=rng,
                            dtype=dtype, name='dw1'),
            Conv2D(spec.in_channels, first_out, 1, rng=rng, dtype=dtype,
                   name='pw1'),
        ]
        if spec.kind == DOUBLE:
            layers.extend([
                ReLU(),
                DepthwiseConv2D(spec.mid_channels, 5, 1, SAME, rng=rng,
                                dtype=dtype, name='dw2'),
                Conv2D(spec.mid_channels, spec.out_channels, 1, rng=rng,
                       dtype=dtype, name='pw2'),
            ])
        self.main = Sequential(layers, name='main')
        self.pool = MaxPool2D(2) if spec.stride == 2 else None
        self.activation = ReLU()

    def parameters(self):
        """Return the main-path parameters."""
        return self.main.parameters()

    def named_parameters(self, prefix=''):
        """Qualify parameters with the main-path layer names."""
        return [('%s%s.%s' % (prefix, layer.name, name), p)
                for layer in self.main.layers
                for name, p in layer.named_parameters()]

    def forward(self, x):
        """Return ReLU(main(x) + residual(x))."""
        self._check_rank(x, 4)
        self._check_channels(x, self.spec.in_channels)
        y = self.main.forward(x)
        r = self.pool.forward(x) if self.pool is not None else x
        pad = self.spec.out_channels - self.spec.in_channels
        if pad:
            r = np.pad(r, ((0, 0), (0, 0), (0, 0), (0, pad)))
        return self.activation.forward(y + r)

    def backward(self, grad):
        """Backpropagate through both paths and add the input gradients."""
        grad = self.activation.backward(grad)
        dx = self.main.backward(grad)
        dr = grad[..., :self.spec.in_channels]
        if self.pool is not None:
            dr = self.pool.backward(dr)
        return dx + dr

    def output_shape(self, input_shape):
        """Return the main-path output shape."""
        return self.main.output_shape(input_shape)

    def macs(self, input_shape):
        """Return the convolution MACs of the main path."""
        return self.main.macs(input_shape)


def blaze_block(spec, rng=None, dtype=TRAIN_DTYPE, name=None):
    """Build the :class:`BlazeBlock` described by ``spec``."""
    return BlazeBlock(spec, rng=rng, dtype=dtype, name=name)
