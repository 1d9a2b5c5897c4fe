# -*- coding: utf-8 -*-
"""Render CSV outputs and metrics logs as static SVG plots.

Nothing here computes a metric: every plotted value is read from a file
written by another command.
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import os
from collections import OrderedDict
from warnings import warn

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .exceptions import DiagnosticWarning, InvalidInputError  # noqa: E402
from .metrics import read_points  # noqa: E402

#: Extension of metrics log files accepted by :func:`render_file`.
METRICS_LOG_EXT = '.lp'

_RC = {
    'svg.hashsalt': 'deskgaze',
    'svg.fonttype': 'none',
    'figure.figsize': (6.4, 4.0),
    'axes.grid': True,
    'grid.alpha': 0.3,
}


def _columns(frame, *names):
    return all(name in frame.columns for name in names)


def kind_of(frame):
    """Name the plot a table is rendered as, or None if unrecognized."""
    if _columns(frame, 'window', 'start_s', 'mean_error_cm'):
        return 'error_vs_time'
    if _columns(frame, 'sample_id', 'error_cm'):
        return 'error_histogram'
    if _columns(frame, 'sample_id', 'z_error_cm'):
        return 'pose_histogram'
    if _columns(frame, 'epoch', 'split', 'loss_total'):
        return 'stage1_convergence'
    if _columns(frame, 'step', 'meta_loss'):
        return 'stage2_convergence'
    return None


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    return path


def plot_error_vs_time(frame, path, title=None):
    """One line per user of windowed mean error against window start."""
    fig, ax = plt.subplots()
    for user, rows in frame.groupby('user', sort=True):
        rows = rows.sort_values('start_s')
        ax.plot(rows['start_s'], rows['mean_error_cm'], 'o-',
                label=str(user), markersize=3, linewidth=1.2)
    ax.set_xlabel('time since first sample (s)')
    ax.set_ylabel('mean PoG error (cm)')
    ax.set_title(title or 'Error vs. time')
    if frame['user'].nunique() <= 12:
        ax.legend(fontsize=7, loc='upper right')
    return _save(fig, path)


def plot_error_histogram(frame, path, column='error_cm', title=None,
                         bins=30):
    """Histogram of per-sample errors; rows without a value are skipped."""
    values = frame[column].dropna()
    fig, ax = plt.subplots()
    if len(values):
        ax.hist(values, bins=bins, color='#4878a8', edgecolor='white')
        ax.axvline(values.median(), color='#c44e52', ls='--', lw=1,
                   label='median {0:.2f}'.format(values.median()))
        ax.legend(fontsize=8)
    ax.set_xlabel(column.replace('_', ' '))
    ax.set_ylabel('samples')
    ax.set_title(title or 'Error histogram')
    return _save(fig, path)


def plot_stage1_convergence(frame, path, title=None):
    """Total loss per epoch, one line per split."""
    fig, ax = plt.subplots()
    for split, rows in frame.groupby('split', sort=True):
        rows = rows.sort_values('epoch')
        ax.plot(rows['epoch'], rows['loss_total'], 'o-', label=str(split),
                markersize=3)
    ax.set_xlabel('epoch')
    ax.set_ylabel('total loss')
    ax.set_yscale('log')
    ax.set_title(title or 'Representation training')
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_stage2_convergence(frame, path, title=None):
    """Meta-loss per outer step."""
    rows = frame.sort_values('step')
    fig, ax = plt.subplots()
    ax.plot(rows['step'], rows['meta_loss'], linewidth=1)
    ax.set_xlabel('meta-step')
    ax.set_ylabel('query loss')
    ax.set_title(title or 'Meta-training')
    return _save(fig, path)


_PLOTTERS = {
    'error_vs_time': plot_error_vs_time,
    'error_histogram': plot_error_histogram,
    'pose_histogram': lambda frame, path, title=None: plot_error_histogram(
        frame, path, column='z_error_cm', title=title or 'Depth error'),
    'stage1_convergence': plot_stage1_convergence,
    'stage2_convergence': plot_stage2_convergence,
}


def metrics_frames(path):
    """Tables of the ``stage1`` and ``stage2`` series in a metrics log."""
    rows = {}
    for point in read_points(path):
        row = dict(point['tags'])
        row.update(point['fields'])
        rows.setdefault(point['measurement'], []).append(row)
    return OrderedDict((name, pd.DataFrame(rows[name]))
                       for name in ('stage1', 'stage2') if name in rows)


def render_file(path, out_dir):
    """Render one CSV or metrics log into ``out_dir``.

    :returns: list of written SVG paths
    :raises InvalidInputError: if the file holds no plottable table
    """
    stem = os.path.splitext(os.path.basename(path))[0]
    if path.endswith(METRICS_LOG_EXT):
        tables = [('{0}_{1}'.format(stem, name), frame)
                  for name, frame in metrics_frames(path).items()]
    else:
        tables = [(stem, pd.read_csv(path))]
    written = []
    with plt.rc_context(_RC):
        for name, frame in tables:
            kind = kind_of(frame)
            if kind is None:
                continue
            out = os.path.join(out_dir, '{0}.svg'.format(name))
            written.append(_PLOTTERS[kind](frame, out))
    if not written:
        raise InvalidInputError('nothing to plot in {0}'.format(path))
    return written


def render(paths, out_dir):
    """Render every recognized input; directories are searched for
    ``*.csv`` and metrics logs.

    Unrecognized files found by directory search are skipped with a
    warning; explicitly named files must be plottable.
    """
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)
    written = []
    for path in paths:
        if os.path.isdir(path):
            for name in sorted(os.listdir(path)):
                if not name.endswith(('.csv', METRICS_LOG_EXT)):
                    continue
                try:
                    written.extend(render_file(os.path.join(path, name),
                                               out_dir))
                except InvalidInputError as e:
                    warn(str(e), DiagnosticWarning, stacklevel=2)
        else:
            written.extend(render_file(path, out_dir))
    return written
