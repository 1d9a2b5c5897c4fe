# -*- coding: utf-8 -*-
"""Line-delimited metric records.

One record per line::

    measurement,tag=value,tag2=value2 field=1.5,count=3i 1569319200000000000

Tags and fields are sorted by key, identifiers escape backslash, space,
comma, equals and newline, string fields are double-quoted, integers carry
an ``i`` suffix and the optional trailing timestamp is integer nanoseconds
since the UTC epoch.
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

from datetime import datetime
from numbers import Integral

import numpy as np
from dateutil.parser import parse
from pytz import UTC
from six import PY2, binary_type, integer_types, text_type

EPOCH = datetime(1970, 1, 1, tzinfo=UTC)

_PRECISIONS = {None: 1, 'n': 1, 'u': 10 ** 3, 'ms': 10 ** 6, 's': 10 ** 9,
               'm': 60 * 10 ** 9, 'h': 3600 * 10 ** 9}


def _to_nanos(timestamp):
    delta = timestamp - EPOCH
    nanos_in_days = delta.days * 86400 * 10 ** 9
    nanos_in_seconds = delta.seconds * 10 ** 9
    nanos_in_micros = delta.microseconds * 10 ** 3
    return nanos_in_days + nanos_in_seconds + nanos_in_micros


def _convert_timestamp(timestamp, precision=None):
    if isinstance(timestamp, (Integral, np.integer)):
        return int(timestamp)  # already in the requested precision

    if isinstance(_get_unicode(timestamp), text_type):
        timestamp = parse(timestamp)

    if isinstance(timestamp, datetime) and precision in _PRECISIONS:
        if not timestamp.tzinfo:
            timestamp = UTC.localize(timestamp)
        return _to_nanos(timestamp) // _PRECISIONS[precision]

    raise ValueError(timestamp)


def _escape_tag(tag):
    tag = _get_unicode(tag, force=True)
    return tag.replace(
        "\\", "\\\\"
    ).replace(
        " ", "\\ "
    ).replace(
        ",", "\\,"
    ).replace(
        "=", "\\="
    ).replace(
        "\n", "\\n"
    )


def quote_ident(value):
    """Double-quote a string field value."""
    return "\"{}\"".format(value
                           .replace("\\", "\\\\")
                           .replace("\"", "\\\"")
                           .replace("\n", "\\n"))


def _escape_value(value):
    if value is None:
        return ''

    value = _get_unicode(value)
    if isinstance(value, text_type):
        return quote_ident(value)

    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))

    if isinstance(value, integer_types + (np.integer,)):
        return str(int(value)) + 'i'

    try:
        value = float(value)
    except (TypeError, ValueError):
        return quote_ident(str(value))
    if not np.isfinite(value):
        # nan and inf are not valid float literals in a record
        return quote_ident(repr(value))
    return repr(value)


def _get_unicode(data, force=False):
    """Try to return a text aka unicode object from the given data."""
    if isinstance(data, binary_type):
        return data.decode('utf-8')

    if data is None:
        return ''

    if force:
        if PY2:
            return unicode(data)  # noqa: F821
        return str(data)

    return data


def make_line(measurement, tags=None, fields=None, time=None, precision=None):
    """Render one record."""
    tags = tags or {}
    fields = fields or {}

    line = _escape_tag(_get_unicode(measurement))

    tag_list = []
    for tag_key in sorted(tags.keys()):
        key = _escape_tag(tag_key)
        value = _escape_tag(tags[tag_key])

        if key != '' and value != '':
            tag_list.append(
                "{key}={value}".format(key=key, value=value)
            )

    if tag_list:
        line += ',' + ','.join(tag_list)

    field_list = []
    for field_key in sorted(fields.keys()):
        key = _escape_tag(field_key)
        value = _escape_value(fields[field_key])

        if key != '' and value != '':
            field_list.append("{key}={value}".format(
                key=key,
                value=value
            ))

    if not field_list:
        raise ValueError('record {0!r} has no fields'.format(measurement))
    line += ' ' + ','.join(field_list)

    if time is not None:
        line += ' ' + str(_convert_timestamp(time, precision))

    return line


def make_lines(data, precision=None):
    """Render ``data['points']`` as newline-terminated records.

    Tags in ``data['tags']`` apply to every point; a point's own tags win.
    """
    lines = []
    static_tags = data.get('tags')
    for point in data['points']:
        if static_tags:
            tags = dict(static_tags)
            tags.update(point.get('tags') or {})
        else:
            tags = point.get('tags') or {}

        line = make_line(
            point.get('measurement', data.get('measurement')),
            tags=tags,
            fields=point.get('fields'),
            precision=precision,
            time=point.get('time')
        )
        lines.append(line)

    return '\n'.join(lines) + '\n'


def _split(text, separator):
    """Split on ``separator`` outside quotes and escapes."""
    parts, current = [], []
    quoted = escaped = False
    for char in text:
        if escaped:
            current.append(char)
            escaped = False
        elif char == '\\':
            current.append(char)
            escaped = True
        elif char == '"':
            current.append(char)
            quoted = not quoted
        elif char == separator and not quoted:
            parts.append(''.join(current))
            current = []
        else:
            current.append(char)
    parts.append(''.join(current))
    return parts


def _unescape(text):
    out, escaped = [], False
    for char in text:
        if escaped:
            out.append('\n' if char == 'n' else char)
            escaped = False
        elif char == '\\':
            escaped = True
        else:
            out.append(char)
    return ''.join(out)


def _partition(item):
    parts = _split(item, '=')
    return parts[0], len(parts) > 1, '='.join(parts[1:])


def _parse_value(text):
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return _unescape(text[1:-1])
    if text in ('True', 'False'):
        return text == 'True'
    if text.endswith('i'):
        return int(text[:-1])
    return float(text)


def parse_line(line):
    """Parse one record back into a point dict.

    :returns: dict with ``measurement``, ``tags``, ``fields`` and ``time``
    :raises ValueError: on a malformed record
    """
    sections = [s for s in _split(line.rstrip('\n'), ' ') if s != '']
    if len(sections) not in (2, 3):
        raise ValueError('malformed record: {0!r}'.format(line))

    head = _split(sections[0], ',')
    tags = {}
    for item in head[1:]:
        key, _, value = _partition(item)
        tags[_unescape(key)] = _unescape(value)

    fields = {}
    for item in _split(sections[1], ','):
        key, sep, value = _partition(item)
        if not sep:
            raise ValueError('malformed field {0!r}'.format(item))
        fields[_unescape(key)] = _parse_value(value)

    time = int(sections[2]) if len(sections) == 3 else None
    return {'measurement': _unescape(head[0]), 'tags': tags,
            'fields': fields, 'time': time}


def parse_lines(text):
    """Parse every non-empty line of ``text``."""
    return [parse_line(line) for line in text.splitlines() if line.strip()]
