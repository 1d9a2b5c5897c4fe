# -*- coding: utf-8 -*-
"""Initialize the deskgaze package."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

__version__ = '0.1.0'

from .blazegaze import BlazeGazeModel, train_stage1  # noqa: E402
from .data import GazeSample, iterate, load_manifest  # noqa: E402
from .geometry import CameraIntrinsics, LandmarkFrame  # noqa: E402
from .headpose import HeadPose, estimate_head_pose  # noqa: E402
from .meta import personalize, train_stage2  # noqa: E402
from .metrics import MetricsHelper, MetricsLog  # noqa: E402


__all__ = [
    'BlazeGazeModel',
    'CameraIntrinsics',
    'GazeSample',
    'HeadPose',
    'LandmarkFrame',
    'MetricsHelper',
    'MetricsLog',
    'estimate_head_pose',
    'iterate',
    'load_manifest',
    'personalize',
    'train_stage1',
    'train_stage2',
]
