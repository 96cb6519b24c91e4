import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional

import numpy as np

from event_data.errors import EventIOError, EventParseError, EventValidationError

"""
canonical event types, file formats and sliding-window slicing
"""

# packed on-disk record of the canonical binary format: u16 x, u16 y, u64 t, i8 p
EVENT_DTYPE = np.dtype([('x', '<u2'), ('y', '<u2'), ('t', '<u8'), ('p', 'i1')])
BINARY_MAGIC = b"EVT1"
BINARY_HEADER = struct.Struct("<4sHHIQ")
UNLABELED = 0xFFFFFFFF
CSV_HEADER = "x,y,t,p"
# timestamps are stored as u64, the encoder computes with int64
MAX_TIMESTAMP = int(np.iinfo(np.int64).max)
FORMATS = ("binary", "csv")


class Event(NamedTuple):
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise EventValidationError("sensor geometry must be at least 1x1, got %dx%d" % (self.width, self.height))

    @property
    def shape(self):
        return self.height, self.width


@dataclass(frozen=True)
class EventSample:
    """
    one labeled recording; events is a read-only structured array with fields x, y, t, p sorted by t
    """
    events: np.ndarray
    geometry: SensorGeometry
    label: Optional[int] = None
    sample_id: str = "sample"

    @classmethod
    def from_events(cls, events: Iterable[Event], geometry, label=None, sample_id="sample", validate=True):
        records = np.array([tuple(e) for e in events], dtype=EVENT_DTYPE)
        return cls.from_arrays(records['x'], records['y'], records['t'], records['p'], geometry, label=label,
                               sample_id=sample_id, validate=validate)

    @classmethod
    def from_arrays(cls, x, y, t, p, geometry, label=None, sample_id="sample", validate=True, presorted=False):
        """
        build a sample from column arrays, events are stably re-sorted by t unless presorted is set
        """
        x = np.asarray(x)
        n = x.shape[0]
        for name, col in (("y", y), ("t", t), ("p", p)):
            if np.shape(col)[0] != n:
                raise EventValidationError("column %s has %d entries, expected %d" % (name, np.shape(col)[0], n))
        if validate:
            _check_columns(x, y, t, p, geometry)
        records = np.empty(n, dtype=EVENT_DTYPE)
        records['x'] = x
        records['y'] = y
        records['t'] = t
        records['p'] = p
        if not presorted:
            records = records[np.argsort(records['t'], kind='stable')]
        records.flags.writeable = False
        return cls(records, geometry, label, sample_id)

    def __len__(self):
        return self.events.shape[0]

    @property
    def x(self):
        return self.events['x']

    @property
    def y(self):
        return self.events['y']

    @property
    def t(self):
        return self.events['t']

    @property
    def p(self):
        return self.events['p']

    @property
    def duration_us(self):
        if len(self) == 0:
            return 0
        return int(self.t[-1]) - int(self.t[0])

    def event_list(self) -> List[Event]:
        return [Event(int(e['x']), int(e['y']), int(e['t']), int(e['p'])) for e in self.events]

    def with_events(self, events, sample_id=None):
        events = np.array(events, dtype=EVENT_DTYPE)
        events.flags.writeable = False
        return EventSample(events, self.geometry, self.label, self.sample_id if sample_id is None else sample_id)

    def equals(self, other):
        return (self.geometry == other.geometry and self.label == other.label and
                np.array_equal(self.events, other.events))


def _check_columns(x, y, t, p, geometry):
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    t = np.asarray(t)
    p = np.asarray(p, dtype=np.int64)
    checks = [
        ((x < 0) | (x >= geometry.width), "x out of range [0, %d)" % geometry.width),
        ((y < 0) | (y >= geometry.height), "y out of range [0, %d)" % geometry.height),
        ((p != 1) & (p != -1), "polarity must be -1 or +1"),
    ]
    if t.size and np.issubdtype(t.dtype, np.signedinteger):
        checks.append((t < 0, "negative timestamp"))
    if t.size and np.issubdtype(t.dtype, np.unsignedinteger):
        checks.append((t > np.uint64(MAX_TIMESTAMP), "timestamp above %d" % MAX_TIMESTAMP))
    for mask, reason in checks:
        bad = np.flatnonzero(mask)
        if bad.size:
            i = int(bad[0])
            raise EventValidationError("%s (x=%d, y=%d, t=%d, p=%d)" % (reason, x[i], y[i], int(t[i]), p[i]), index=i)


def validate_sample(sample: EventSample, require_events=False):
    """
    check all EventSample invariants
    """
    if require_events and len(sample) == 0:
        raise EventValidationError("sample %s has no events" % sample.sample_id)
    _check_columns(sample.x, sample.y, sample.t, sample.p, sample.geometry)
    if len(sample) > 1:
        unsorted = np.flatnonzero(np.diff(sample.t.astype(np.int64)) < 0)
        if unsorted.size:
            raise EventValidationError("timestamps not sorted", index=int(unsorted[0]) + 1)


def load_events(path, format="binary", geometry: Optional[SensorGeometry] = None, label=None, sample_id=None):
    """
    read a sample from disk

    :param path:        file path
    :param format:      "binary" (canonical EVT1) or "csv"
    :param geometry:    sensor geometry, required for csv (binary files carry their own)
    :param label:       class id for csv files
    :param sample_id:   defaults to the file stem
    :return: validated EventSample, stably sorted by timestamp
    """
    path = Path(path)
    if sample_id is None:
        sample_id = path.stem
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise EventIOError(path, e.strerror or str(e)) from e

    if format == "binary":
        return _decode_binary(raw, path, sample_id)
    elif format == "csv":
        if geometry is None:
            raise EventParseError("csv input needs the sensor geometry", path=path)
        return _decode_csv(raw, path, geometry, label, sample_id)
    raise EventParseError("unknown event format '%s'" % format, path=path)


def _decode_binary(raw, path, sample_id):
    if len(raw) < BINARY_HEADER.size:
        raise EventParseError("truncated header", offset=len(raw), path=path)
    magic, width, height, label, count = BINARY_HEADER.unpack_from(raw, 0)
    if magic != BINARY_MAGIC:
        raise EventParseError("bad magic %r" % magic, offset=0, path=path)
    expected = BINARY_HEADER.size + count * EVENT_DTYPE.itemsize
    if len(raw) < expected:
        complete = (len(raw) - BINARY_HEADER.size) // EVENT_DTYPE.itemsize
        raise EventParseError("truncated record %d of %d" % (complete, count),
                              offset=BINARY_HEADER.size + complete * EVENT_DTYPE.itemsize, path=path)
    if len(raw) > expected:
        raise EventParseError("%d trailing bytes" % (len(raw) - expected), offset=expected, path=path)
    try:
        geometry = SensorGeometry(width, height)
    except EventValidationError as e:
        raise EventParseError(str(e), offset=4, path=path) from e
    records = np.frombuffer(raw, dtype=EVENT_DTYPE, count=count, offset=BINARY_HEADER.size)
    return EventSample.from_arrays(records['x'], records['y'], records['t'], records['p'], geometry,
                                   label=None if label == UNLABELED else int(label), sample_id=sample_id)


def _decode_csv(raw, path, geometry, label, sample_id):
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise EventParseError("not utf-8 text", offset=e.start, path=path) from e
    lines = text.splitlines()
    if not lines or lines[0].strip().replace(" ", "") != CSV_HEADER:
        raise EventParseError("missing header '%s'" % CSV_HEADER, offset=1, path=path)
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise EventParseError("expected 4 fields, got %d" % len(fields), offset=line_no, path=path)
        try:
            row = tuple(int(f) for f in fields)
        except ValueError as e:
            raise EventParseError("non-integer field", offset=line_no, path=path) from e
        for name, value in zip("xytp", row):
            if not -MAX_TIMESTAMP - 1 <= value <= MAX_TIMESTAMP:
                raise EventValidationError("%s=%d outside the 64-bit range" % (name, value), index=len(rows))
        rows.append(row)
    columns = np.array(rows, dtype=np.int64).reshape(-1, 4)
    return EventSample.from_arrays(columns[:, 0], columns[:, 1], columns[:, 2], columns[:, 3], geometry,
                                   label=label, sample_id=sample_id)


def save_events(sample: EventSample, path, format="binary"):
    """
    write a sample; load_events on the result gives back an identical sample
    """
    path = Path(path)
    if format == "binary":
        label = UNLABELED if sample.label is None else sample.label
        payload = BINARY_HEADER.pack(BINARY_MAGIC, sample.geometry.width, sample.geometry.height, label,
                                     len(sample)) + np.ascontiguousarray(sample.events, dtype=EVENT_DTYPE).tobytes()
    elif format == "csv":
        body = "".join("%d,%d,%d,%d\n" % (e['x'], e['y'], e['t'], e['p']) for e in sample.events)
        payload = (CSV_HEADER + "\n" + body).encode("utf-8")
    else:
        raise EventParseError("unknown event format '%s'" % format, path=path)
    try:
        path.write_bytes(payload)
    except OSError as e:
        raise EventIOError(path, e.strerror or str(e)) from e


def window_slice(sample: EventSample, window_us, step_us) -> List[EventSample]:
    """
    cut a recording into overlapping windows [t_min + k*step, t_min + k*step + window), empty windows are dropped

    :param sample:      input recording
    :param window_us:   window length in microseconds
    :param step_us:     step between window starts in microseconds
    :return: list of samples which inherit label and geometry
    """
    if window_us <= 0 or step_us <= 0:
        raise EventValidationError("window and step must be positive, got %s and %s" % (window_us, step_us))
    if len(sample) == 0:
        return []
    t = sample.t.astype(np.int64)
    t_min, t_max = int(t[0]), int(t[-1])
    windows = []
    k = 0
    while t_min + k * step_us <= t_max:
        start = t_min + k * step_us
        lo = np.searchsorted(t, start, side='left')
        hi = np.searchsorted(t, start + window_us, side='left')
        if hi > lo:
            windows.append(sample.with_events(sample.events[lo:hi], sample_id="%s_w%03d" % (sample.sample_id, k)))
        k += 1
    return windows
