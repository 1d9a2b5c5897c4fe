# -*- coding: utf-8 -*-
"""Parameter and FLOP accounting."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

from collections import namedtuple

LayerStats = namedtuple('LayerStats',
                        ['name', 'output_shape', 'params', 'macs'])


def count_params(model):
    """Return the exact number of trainable scalars in ``model``."""
    return sum(p.size for p in model.parameters())


def count_macs(model, input_shape):
    """Multiply-accumulates of one forward pass on one sample."""
    return int(model.macs(tuple(input_shape)))


def count_flops(model, input_shape):
    """FLOPs of one forward pass, counted as 2 x MACs."""
    return 2 * count_macs(model, input_shape)


def layer_stats(layers, input_shape):
    """Per-layer output shape, parameters and MACs along a chain of layers.

    :param layers: a :class:`~deskgaze.nn.layers.Sequential` or a list
    :rtype: list of :class:`LayerStats`
    """
    rows = []
    shape = tuple(input_shape)
    for layer in getattr(layers, 'layers', layers):
        macs = layer.macs(shape)
        shape = layer.output_shape(shape)
        rows.append(LayerStats(layer.name, shape, count_params(layer), macs))
    return rows
