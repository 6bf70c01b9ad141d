"""
.. module:: checkpoint
    :synopsis: Binary persistence of a ParamVector

Layout: the 8-byte magic ``FPSIMPV1``, a little-endian u32 length, then
`length` little-endian float64 values.
"""
import os
import struct

import numpy as np

from .constants import CHECKPOINT_MAGIC
from .errors import CheckpointError

_HEADER = struct.Struct('<8sI')


def save_params(params, path):
    """Write `params` to `path`, replacing any previous file"""
    values = np.ascontiguousarray(params, dtype='<f8').ravel()
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        os.makedirs(directory)
    with open(path, 'wb') as stream:
        stream.write(_HEADER.pack(CHECKPOINT_MAGIC, len(values)))
        stream.write(values.tobytes())
    return path


def load_params(path):
    """Read a ParamVector written by :func:`save_params`"""
    with open(path, 'rb') as stream:
        blob = stream.read()
    if len(blob) < _HEADER.size:
        raise CheckpointError("truncated header", path)
    magic, length = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic %r" % magic, path)
    expected = _HEADER.size + 8 * length
    if len(blob) != expected:
        raise CheckpointError(
            "expected %d bytes, found %d" % (expected, len(blob)), path)
    return np.frombuffer(blob, dtype='<f8', offset=_HEADER.size).astype(
        np.float64)
