# -*- coding: utf-8 -*-
"""Small NumPy neural-network core with analytic gradients."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

from .blaze import BlazeBlock, BlazeBlockSpec, blaze_block
from .layers import (Conv2D, Conv2DTranspose, Dense, DepthwiseConv2D,
                     Flatten, GlobalAveragePool2D, Layer, MaxPool2D, ReLU,
                     Reshape, Sequential, Sigmoid)
from .optim import SGD, Adam, ExponentialDecay, OptimizerState, step
from .profile import count_flops, count_macs, count_params
from .tensor import Tensor, gradients, load_state_dict, state_dict

__all__ = [
    'Adam',
    'BlazeBlock',
    'BlazeBlockSpec',
    'Conv2D',
    'Conv2DTranspose',
    'Dense',
    'DepthwiseConv2D',
    'ExponentialDecay',
    'Flatten',
    'GlobalAveragePool2D',
    'Layer',
    'MaxPool2D',
    'OptimizerState',
    'ReLU',
    'Reshape',
    'SGD',
    'Sequential',
    'Sigmoid',
    'Tensor',
    'blaze_block',
    'count_flops',
    'count_macs',
    'count_params',
    'gradients',
    'load_state_dict',
    'state_dict',
    'step',
]
