# -*- coding: utf-8 -*-
"""Versioned binary container for named tensors.

Layout, all integers little-endian::

    magic       4 bytes   b'DGZC'
    version     uint16    1
    reserved    uint16    0
    header_len  uint32    length of the msgpack header that follows
    header      msgpack   {'meta': {...}, 'tensors': [[name, dtype, shape,
                          offset, nbytes], ...]}
    data        raw       tensor buffers, offsets relative to the data start

Tensor buffers are C-ordered ``<f4`` (float32) or ``<f8`` (float64).
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import hashlib
import io
import struct
from collections import OrderedDict

import msgpack
import numpy as np
import six

from ..exceptions import ContainerError

MAGIC = b'DGZC'
VERSION = 1
_PREAMBLE = struct.Struct('<4sHHI')
_DTYPES = ('<f4', '<f8')


def _dtype_code(array):
    code = array.dtype.newbyteorder('<').str
    if code not in _DTYPES:
        raise ContainerError('unsupported dtype {0}'.format(array.dtype))
    return code


def dumps(tensors, meta=None):
    """Serialize an ordered ``name -> array`` map to bytes."""
    table = []
    buffers = []
    offset = 0
    for name, array in six.iteritems(tensors):
        array = np.asarray(array)
        code = _dtype_code(array)
        raw = np.ascontiguousarray(array, dtype=code).tobytes()
        table.append([six.text_type(name), code, list(array.shape), offset,
                      len(raw)])
        buffers.append(raw)
        offset += len(raw)
    header = msgpack.packb({'meta': meta or {}, 'tensors': table},
                           use_bin_type=True)
    return b''.join([_PREAMBLE.pack(MAGIC, VERSION, 0, len(header)),
                     header] + buffers)


def loads(data):
    """Parse bytes written by :func:`dumps`.

    :returns: tuple ``(tensors, meta)``
    :raises ContainerError: on a bad magic, version, header or buffer
    """
    if len(data) < _PREAMBLE.size:
        raise ContainerError('truncated container preamble')
    magic, version, _, header_len = _PREAMBLE.unpack_from(data, 0)
    if magic != MAGIC:
        raise ContainerError('bad magic {0!r}'.format(magic))
    if version != VERSION:
        raise ContainerError('unsupported container version %d' % version)
    start = _PREAMBLE.size
    try:
        header = msgpack.unpackb(data[start:start + header_len], raw=False)
        table = header['tensors']
        meta = header.get('meta', {})
    except (ValueError, KeyError, TypeError,
            msgpack.exceptions.ExtraData) as e:
        raise ContainerError('malformed header: {0}'.format(e))

    base = start + header_len
    tensors = OrderedDict()
    for entry in table:
        try:
            name, code, shape, offset, nbytes = entry
        except ValueError:
            raise ContainerError('malformed tensor entry {0!r}'.format(entry))
        if code not in _DTYPES:
            raise ContainerError('unsupported dtype {0!r}'.format(code))
        expected = int(np.prod(shape)) * np.dtype(code).itemsize
        if nbytes != expected or base + offset + nbytes > len(data):
            raise ContainerError('buffer of {0} is truncated'.format(name))
        array = np.frombuffer(data, dtype=code, count=int(np.prod(shape)),
                              offset=base + offset)
        tensors[name] = array.reshape(shape).astype(code[1:])
    return tensors, meta


def save(path, tensors, meta=None):
    """Write tensors and metadata to ``path``."""
    with io.open(path, 'wb') as f:
        f.write(dumps(tensors, meta))


def load(path):
    """Read a container file; see :func:`loads`."""
    with io.open(path, 'rb') as f:
        return loads(f.read())


def digest(data):
    """Hex SHA-256 of ``data`` bytes."""
    return hashlib.sha256(data).hexdigest()


def file_digest(path):
    """Hex SHA-256 of a file's contents."""
    h = hashlib.sha256()
    with io.open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            h.update(chunk)
    return h.hexdigest()


def params_digest(tensors):
    """Stable SHA-256 over an ordered ``name -> array`` map."""
    return digest(dumps(tensors))
