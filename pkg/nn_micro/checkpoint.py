import math
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from event_data.errors import EventIOError, FormatError

"""
EFNW parameter files: "EFNW", u32 version, u32 count, then per parameter
u32 name length, UTF-8 name, u32 ndim, u32 dims[ndim], float32 little-endian data
"""

MAGIC = b"EFNW"
VERSION = 1
_U32 = struct.Struct("<I")


def encode_state(state):
    chunks = [MAGIC, _U32.pack(VERSION), _U32.pack(len(state))]
    for name, value in state.items():
        raw_name = name.encode("utf-8")
        value = np.asarray(value, dtype='<f4')
        chunks += [_U32.pack(len(raw_name)), raw_name, _U32.pack(value.ndim)]
        chunks += [_U32.pack(d) for d in value.shape]
        chunks.append(np.ascontiguousarray(value).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, raw):
        self.raw = raw
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.raw):
            raise FormatError("truncated %s at byte %d" % (what, self.pos))
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]


def decode_state(raw):
    reader = _Reader(raw)
    if reader.take(4, "magic") != MAGIC:
        raise FormatError("not an EFNW file")
    version = reader.u32("version")
    if version != VERSION:
        raise FormatError("unsupported EFNW version %d" % version)
    count = reader.u32("parameter count")
    state = OrderedDict()
    for i in range(count):
        try:
            name = reader.take(reader.u32("name length"), "name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError("parameter %d has an invalid name" % i) from e
        dims = tuple(reader.u32("dims") for _ in range(reader.u32("ndim")))
        size = math.prod(dims)
        if 4 * size > len(raw) - reader.pos:
            raise FormatError("parameter %s with dims %s does not fit the %d remaining bytes"
                              % (name, dims, len(raw) - reader.pos))
        data = np.frombuffer(reader.take(4 * size, "data of %s" % name), dtype='<f4')
        state[name] = data.reshape(dims).astype(np.float32)
    if reader.pos != len(raw):
        raise FormatError("%d trailing bytes" % (len(raw) - reader.pos))
    return state


def save_checkpoint(state, path):
    path = Path(path)
    try:
        path.write_bytes(encode_state(state))
    except OSError as e:
        raise EventIOError(path, e.strerror or str(e)) from e


def load_checkpoint(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise EventIOError(path, e.strerror or str(e)) from e
    try:
        return decode_state(raw)
    except FormatError as e:
        raise FormatError("%s: %s" % (path, e)) from e


def save_args(args, path):
    """
    store the run settings next to the checkpoint as key=value lines
    """
    lines = ["%s=%s" % (key, value) for key, value in sorted(vars(args).items())
             if isinstance(value, (int, float, str, bool))]
    Path(str(path) + ".args").write_text("\n".join(lines) + "\n")


def load_args(path):
    settings = {}
    args_path = Path(str(path) + ".args")
    if not args_path.exists():
        return settings
    for line in args_path.read_text().splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            settings[key.strip()] = value.strip()
    return settings
