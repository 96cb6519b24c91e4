import struct
from pathlib import Path

import numpy as np

from event_data.errors import EventIOError, FormatError

"""
AETF tensor files: "AETF", u32 version, u32 ndim, u32 dims[ndim], float32 little-endian data in row-major order
"""

MAGIC = b"AETF"
VERSION = 1
_HEADER = struct.Struct("<4sII")


def encode_tensor(values):
    values = np.ascontiguousarray(values, dtype='<f4')
    dims = struct.pack("<%dI" % values.ndim, *values.shape)
    return _HEADER.pack(MAGIC, VERSION, values.ndim) + dims + values.tobytes()


def decode_tensor(raw):
    if len(raw) < _HEADER.size:
        raise FormatError("truncated header (%d bytes)" % len(raw))
    magic, version, ndim = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError("bad magic %r" % magic)
    if version != VERSION:
        raise FormatError("unsupported AETF version %d" % version)
    offset = _HEADER.size + 4 * ndim
    if len(raw) < offset:
        raise FormatError("truncated dimensions")
    dims = struct.unpack_from("<%dI" % ndim, raw, _HEADER.size)
    size = int(np.prod(dims, dtype=np.int64))
    expected = offset + 4 * size
    if len(raw) != expected:
        raise FormatError("payload has %d bytes, dimensions %s need %d" % (len(raw) - offset, dims, 4 * size))
    return np.frombuffer(raw, dtype='<f4', count=size, offset=offset).reshape(dims).astype(np.float32)


def save_tensor(values, path):
    path = Path(path)
    try:
        path.write_bytes(encode_tensor(values))
    except OSError as e:
        raise EventIOError(path, e.strerror or str(e)) from e


def load_tensor(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise EventIOError(path, e.strerror or str(e)) from e
    try:
        return decode_tensor(raw)
    except FormatError as e:
        raise FormatError("%s: %s" % (path, e)) from e
