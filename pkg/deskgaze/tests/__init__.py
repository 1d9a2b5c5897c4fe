# -*- coding: utf-8 -*-
"""Configure the tests package for deskgaze."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import os

import unittest

_skip_slow_tests = os.environ.get(
    'DESKGAZE_SKIP_SLOW_TESTS',
    None) == 'True'
skip_slow_tests = unittest.skipIf(_skip_slow_tests,
                                  "Skipping slow tests...")
