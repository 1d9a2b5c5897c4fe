# -*- coding: utf-8 -*-
"""Buffered metric series written as line-delimited records."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import io
from collections import defaultdict, namedtuple
from datetime import datetime
from warnings import warn

import six
from pytz import UTC

from .line_protocol import make_lines, parse_lines


class MetricsLog(object):
    """Append-only file of metric records.

    :param path: file to append to
    :param tags: tags applied to every point written through this log
    """

    def __init__(self, path, tags=None):
        """Open ``path`` for appending."""
        self.path = path
        self.tags = dict(tags or {})
        self._file = io.open(path, 'a', encoding='utf-8')
        self.written = 0

    def write_points(self, points, tags=None, time_precision=None):
        """Write point dicts (measurement, tags, fields, time).

        :returns: True once the records are flushed
        """
        if not points:
            return True
        static = dict(self.tags)
        static.update(tags or {})
        data = {'points': points}
        if static:
            data['tags'] = static
        self._file.write(make_lines(data, time_precision))
        self._file.flush()
        self.written += len(points)
        return True

    def close(self):
        """Close the underlying file."""
        if not self._file.closed:
            self._file.close()

    def __enter__(self):
        """Enter function as used by context manager."""
        return self

    def __exit__(self, _exc_type, _exc_value, _traceback):
        """Exit function as used by context manager."""
        self.close()


def read_points(path):
    """Parse every record of a metrics log file."""
    with io.open(path, 'r', encoding='utf-8') as f:
        return parse_lines(f.read())


class MetricsHelper(object):
    """Subclass this helper to buffer metric points and write them in bulk.

    All points are immutable namedtuples. The series name may be formatted
    from tag and field values.

    The point buffer lives on the subclass, so every instance in the process
    shares it. Points that are never committed carry over into the next run
    that uses the class; :func:`reset_series` clears the stage series.

    Annotated example::

        class EpochMetrics(MetricsHelper):
            class Meta:
                series_name = 'stage1'
                fields = ['epoch', 'loss_total']
                tags = ['split']
                # optional
                log = MetricsLog('metrics.lp')
                bulk_size = 5
                autocommit = True
                timestamped = False
    """

    __initialized__ = False

    def __new__(cls, *args, **kwargs):
        """Initialize class attributes for subsequent constructor calls."""
        if not cls.__initialized__:
            cls.__initialized__ = True
            try:
                _meta = getattr(cls, 'Meta')
            except AttributeError:
                raise AttributeError(
                    'Missing Meta class in {0}.'.format(
                        cls.__name__))

            for attr in ['series_name', 'fields', 'tags']:
                try:
                    setattr(cls, '_' + attr, list(getattr(_meta, attr))
                            if attr != 'series_name'
                            else getattr(_meta, attr))
                except AttributeError:
                    raise AttributeError(
                        'Missing {0} in {1} Meta class.'.format(
                            attr,
                            cls.__name__))

            cls._autocommit = getattr(_meta, 'autocommit', False)
            cls._timestamped = getattr(_meta, 'timestamped', True)
            cls._log = getattr(_meta, 'log', None)
            if cls._autocommit and not cls._log:
                raise AttributeError(
                    'In {0}, autocommit is set to True, but no log is set.'
                    .format(cls.__name__))

            try:
                cls._bulk_size = getattr(_meta, 'bulk_size')
                if cls._bulk_size < 1 and cls._autocommit:
                    warn(
                        'Definition of bulk_size in {0} forced to 1, '
                        'was less than 1.'.format(cls.__name__))
                    cls._bulk_size = 1
            except AttributeError:
                cls._bulk_size = -1
            else:
                if not cls._autocommit:
                    warn(
                        'Definition of bulk_size in {0} has no affect because'
                        ' autocommit is false.'.format(cls.__name__))

            cls._datapoints = defaultdict(list)

            if 'time' in cls._fields:
                cls._fields.remove('time')
            cls._type = namedtuple(cls.__name__,
                                   ['time'] + cls._tags + cls._fields)
            cls._type.__new__.__defaults__ = (None,) * len(cls._fields)

        return super(MetricsHelper, cls).__new__(cls)

    def __init__(self, **kw):
        """Create a new point; all tags are required, fields optional."""
        cls = self.__class__
        default_time = self._current_timestamp() if cls._timestamped else None
        timestamp = kw.pop('time', default_time)
        tags = set(cls._tags)
        fields = set(cls._fields)
        keys = set(kw.keys())

        if not (tags <= keys):
            raise NameError(
                'Expected arguments to contain all tags {0}, instead got {1}.'
                .format(cls._tags, kw.keys()))
        if not (keys - tags <= fields):
            raise NameError('Got arguments not in tags or fields: {0}'
                            .format(keys - tags - fields))

        cls._datapoints[cls._series_name.format(**kw)].append(
            cls._type(time=timestamp, **kw)
        )

        if cls._autocommit and \
                sum(len(series) for series in cls._datapoints.values()) \
                >= cls._bulk_size:
            cls.commit()

    @classmethod
    def commit(cls, log=None):
        """Write every buffered point and clear the buffer.

        :param log: :class:`MetricsLog` overriding the Meta log
        :returns: result of ``log.write_points``; None when no log is set,
            in which case the points are dropped
        """
        if not log:
            log = cls._log

        rtn = log.write_points(cls._json_body_()) if log else None
        cls._reset_()
        return rtn

    @classmethod
    def _json_body_(cls):
        """Return the buffered points as point dicts."""
        json = []
        if not cls.__initialized__:
            cls._reset_()
        for series_name, data in six.iteritems(cls._datapoints):
            for point in data:
                json_point = {
                    "measurement": series_name,
                    "fields": {},
                    "tags": {},
                    "time": getattr(point, "time")
                }

                for field in cls._fields:
                    value = getattr(point, field)
                    if value is not None:
                        json_point['fields'][field] = value

                for tag in cls._tags:
                    json_point['tags'][tag] = getattr(point, tag)

                json.append(json_point)
        return json

    @classmethod
    def _reset_(cls):
        """Reset data storage."""
        cls._datapoints = defaultdict(list)

    @staticmethod
    def _current_timestamp():
        return datetime.now(UTC)


class EpochMetrics(MetricsHelper):
    """Per-epoch losses of representation training."""

    class Meta:
        series_name = 'stage1'
        fields = ['epoch', 'lr', 'loss_total', 'loss_reconstruction',
                  'loss_gaze', 'loss_consistency']
        tags = ['split']
        timestamped = False


class MetaStepMetrics(MetricsHelper):
    """Meta-loss of each outer step."""

    class Meta:
        series_name = 'stage2'
        fields = ['step', 'meta_loss', 'tasks']
        tags = ['split']
        timestamped = False


class AdaptationMetrics(MetricsHelper):
    """Support loss before and after personalization."""

    class Meta:
        series_name = 'adapt'
        fields = ['steps', 'support_size', 'loss_before', 'loss_after',
                  'evicted']
        tags = ['user']
        timestamped = False


STAGE_SERIES = (EpochMetrics, MetaStepMetrics, AdaptationMetrics)


def reset_series(series=STAGE_SERIES):
    """Drop uncommitted points of every helper in ``series``."""
    for helper in series:
        helper._reset_()
