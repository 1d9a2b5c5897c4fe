# -*- coding: utf-8 -*-
"""Run configuration: defaults, YAML/JSON files and ``section.key=value``
overrides."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import copy
import io

import six
import yaml

from .blazegaze import Stage1Config
from .exceptions import ConfigError
from .headpose import SolverConfig
from .meta import MetaConfig
from .preprocess import GateConfig, REDUCED_PATCH_SIZE
from .simulator import DEFAULT_IMAGE_SIZE


def defaults():
    """Return a fresh copy of the default configuration."""
    return {
        'seed': 0,
        'solver': SolverConfig().to_dict(),
        'gate': GateConfig(patch_size=REDUCED_PATCH_SIZE).to_dict(),
        'stage1': Stage1Config().to_dict(),
        'meta': MetaConfig().to_dict(),
        'synth': {'users': 8, 'samples_per_user': 25, 'noise_px': 0.0,
                  'test_fraction': 0.5, 'blink_rate': 0.0, 'drift_std': 0.0,
                  'image_size': list(DEFAULT_IMAGE_SIZE)},
        'eval': {'window_s': 10.0},
        'bench': {'profile': 'full', 'repeats': 50, 'warmup': 3},
    }


def _merge(base, update, path=''):
    for key, value in six.iteritems(update):
        where = '{0}.{1}'.format(path, key) if path else key
        if key not in base:
            raise ConfigError('unknown config key {0!r}'.format(where))
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError('{0!r} must be a mapping'.format(where))
            _merge(base[key], value, where)
        else:
            base[key] = value


def parse_override(text):
    """Split ``'section.key=value'`` into a key path and a typed value.

    Values are parsed as YAML scalars, so ``1.0e-3`` is a float and ``true``
    a bool.
    """
    key, sep, raw = text.partition('=')
    if not sep or not key.strip():
        raise ConfigError(
            'override {0!r} is not of the form key=value'.format(text))
    try:
        value = yaml.safe_load(raw) if raw.strip() else ''
    except yaml.YAMLError as e:
        raise ConfigError('bad override value {0!r}: {1}'.format(raw, e))
    return key.strip().split('.'), value


def apply_override(config, text):
    """Apply one ``section.key=value`` override in place."""
    keys, value = parse_override(text)
    node = config
    for depth, key in enumerate(keys[:-1]):
        if not isinstance(node, dict) or key not in node:
            raise ConfigError('unknown config key {0!r}'.format(
                '.'.join(keys[:depth + 1])))
        node = node[key]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError('unknown config key {0!r}'.format('.'.join(keys)))
    node[keys[-1]] = value


def load_config(path=None, overrides=()):
    """Resolve defaults, an optional config file and overrides.

    The result is validated by building every config object once.

    :raises ConfigError: on unknown keys or invalid values
    """
    config = defaults()
    if path:
        with io.open(path, 'r', encoding='utf-8') as f:
            try:
                loaded = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError('cannot parse {0}: {1}'.format(path, e))
        if not isinstance(loaded, dict):
            raise ConfigError('config file must hold a mapping')
        _merge(config, loaded)
    for text in overrides:
        apply_override(config, text)
    validate(config)
    return config


def validate(config):
    """Build each config object once so bad values fail early."""
    try:
        solver_config(config)
        gate_config(config)
        stage1_config(config)
        meta_config(config)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e))


def solver_config(config):
    """:class:`~deskgaze.headpose.SolverConfig` of a resolved config."""
    return SolverConfig.from_dict(config['solver'])


def gate_config(config):
    """:class:`~deskgaze.preprocess.GateConfig` of a resolved config."""
    return GateConfig.from_dict(config['gate'])


def stage1_config(config):
    """:class:`~deskgaze.blazegaze.Stage1Config` of a resolved config."""
    return Stage1Config.from_dict(config['stage1'])


def meta_config(config):
    """:class:`~deskgaze.meta.MetaConfig` of a resolved config."""
    return MetaConfig.from_dict(config['meta'])


def snapshot(config):
    """Deep copy of a resolved config for run records."""
    return copy.deepcopy(config)
