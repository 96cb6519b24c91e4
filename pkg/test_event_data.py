import os

import numpy as np
import pytest

from event_data.errors import AETError, EventIOError, EventParseError, EventValidationError
from event_data.events import (BINARY_HEADER, EVENT_DTYPE, Event, EventSample, SensorGeometry, load_events,
                               save_events, validate_sample, window_slice)


def random_sample(rng, n=50, width=8, height=6, t_max=10000, label=3):
    x = rng.integers(0, width, size=n)
    y = rng.integers(0, height, size=n)
    t = rng.integers(0, t_max, size=n)
    p = rng.choice([-1, 1], size=n)
    return EventSample.from_arrays(x, y, t, p, SensorGeometry(width, height), label=label, sample_id="rand")


def test_csv_single_record(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("x,y,t,p\n3,4,100,1\n")
    sample = load_events(path, "csv", SensorGeometry(8, 8))
    assert len(sample) == 1
    assert sample.event_list() == [Event(3, 4, 100, 1)]
    assert sample.sample_id == "one"


def test_csv_out_of_bounds(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,t,p\n1,1,0,1\n9,0,5,1\n")
    with pytest.raises(EventValidationError) as info:
        load_events(path, "csv", SensorGeometry(8, 8))
    assert info.value.index == 1


def test_timestamps_beyond_int64(tmp_path):
    path = tmp_path / "late.csv"
    path.write_text("x,y,t,p\n1,1,0,1\n1,2,%d,1\n" % 2 ** 64)
    with pytest.raises(EventValidationError) as info:
        load_events(path, "csv", SensorGeometry(8, 8))
    assert info.value.index == 1

    records = np.array([(1, 0, 5, 1), (2, 0, 2 ** 63, -1)], dtype=EVENT_DTYPE)
    path = tmp_path / "late.evt"
    path.write_bytes(BINARY_HEADER.pack(b"EVT1", 4, 4, 0xFFFFFFFF, 2) + records.tobytes())
    with pytest.raises(EventValidationError) as info:
        load_events(path)
    assert info.value.index == 1


def test_csv_malformed_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,t,p\n1,1,0,1\n1,2,abc,1\n")
    with pytest.raises(EventParseError) as info:
        load_events(path, "csv", SensorGeometry(8, 8))
    assert info.value.offset == 3
    assert isinstance(info.value, AETError)


def test_csv_needs_geometry(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("x,y,t,p\n")
    with pytest.raises(EventParseError):
        load_events(path, "csv")


def test_binary_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(20):
        sample = random_sample(rng, n=int(rng.integers(1, 200)), label=None if i % 3 == 0 else i)
        path = tmp_path / ("s%d.evt" % i)
        save_events(sample, path)
        loaded = load_events(path, sample_id="rand")
        assert loaded.equals(sample)
        assert loaded.label == sample.label


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    sample = random_sample(rng, n=30)
    path = tmp_path / "s.csv"
    save_events(sample, path, "csv")
    loaded = load_events(path, "csv", sample.geometry, label=sample.label, sample_id="rand")
    assert loaded.equals(sample)


def test_empty_sample_file(tmp_path):
    sample = EventSample.from_arrays([], [], [], [], SensorGeometry(4, 4), label=1)
    path = tmp_path / "empty.evt"
    save_events(sample, path)
    assert os.path.getsize(path) == BINARY_HEADER.size
    loaded = load_events(path)
    assert len(loaded) == 0
    assert loaded.label == 1


def test_save_to_missing_directory(tmp_path):
    sample = random_sample(np.random.default_rng(2))
    with pytest.raises(EventIOError) as info:
        save_events(sample, tmp_path / "missing" / "s.evt")
    assert "missing" in str(info.value)
    assert isinstance(info.value, OSError)


def test_load_sorts_stably(tmp_path):
    rng = np.random.default_rng(3)
    sample = random_sample(rng, n=100, t_max=20)
    validate_sample(sample)
    assert np.all(np.diff(sample.t.astype(np.int64)) >= 0)
    # unsorted records written by hand
    records = np.array([(1, 0, 50, 1), (2, 0, 10, -1), (3, 0, 10, 1)], dtype=EVENT_DTYPE)
    path = tmp_path / "unsorted.evt"
    path.write_bytes(BINARY_HEADER.pack(b"EVT1", 4, 4, 0xFFFFFFFF, 3) + records.tobytes())
    loaded = load_events(path)
    assert [e.x for e in loaded.event_list()] == [2, 3, 1]


def test_binary_fuzzed_files_rejected(tmp_path):
    rng = np.random.default_rng(4)
    sample = random_sample(rng, n=20)
    path = tmp_path / "s.evt"
    save_events(sample, path)
    raw = path.read_bytes()
    for cut in sorted(set(rng.integers(0, len(raw), size=30).tolist())):
        bad = tmp_path / ("cut%d.evt" % cut)
        bad.write_bytes(raw[:cut])
        with pytest.raises(EventParseError):
            load_events(bad)
    bad = tmp_path / "magic.evt"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(EventParseError) as info:
        load_events(bad)
    assert info.value.offset == 0
    bad = tmp_path / "trailing.evt"
    bad.write_bytes(raw + b"\x00")
    with pytest.raises(EventParseError):
        load_events(bad)


def test_binary_bad_polarity(tmp_path):
    records = np.array([(1, 1, 5, 1), (1, 1, 6, 0)], dtype=EVENT_DTYPE)
    path = tmp_path / "p.evt"
    path.write_bytes(BINARY_HEADER.pack(b"EVT1", 4, 4, 0, 2) + records.tobytes())
    with pytest.raises(EventValidationError) as info:
        load_events(path)
    assert info.value.index == 1


def test_geometry_invariant():
    with pytest.raises(EventValidationError):
        SensorGeometry(0, 4)
    assert SensorGeometry(5, 3).shape == (3, 5)


def test_window_slice_example():
    geometry = SensorGeometry(4, 4)
    sample = EventSample.from_events([Event(0, 0, 0, 1), Event(1, 0, 100, 1), Event(2, 0, 800, -1)], geometry, label=2)
    windows = window_slice(sample, 750, 100)
    assert [list(w.t) for w in windows[:2]] == [[0, 100], [100, 800]]
    assert all(w.label == 2 and w.geometry == geometry for w in windows)


def test_window_slice_full_cover():
    sample = random_sample(np.random.default_rng(5), t_max=1000)
    windows = window_slice(sample, 5000, 300)
    assert windows[0].equals(sample.with_events(sample.events))


def test_window_slice_single_event():
    sample = EventSample.from_events([Event(0, 0, 250000, 1)], SensorGeometry(2, 2))
    windows = window_slice(sample, 750000, 100000)
    # t_min = t_max, only window 0 starts at or before the event
    assert len(windows) == 1
    assert list(windows[0].t) == [250000]


def test_window_slice_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(20):
        sample = random_sample(rng, n=int(rng.integers(1, 60)), t_max=5000)
        window, step = int(rng.integers(1, 2000)), int(rng.integers(1, 1000))
        windows = window_slice(sample, window, step)
        t = sample.t.astype(np.int64)
        expected = []
        k = 0
        while t.min() + k * step <= t.max():
            start = t.min() + k * step
            members = [e for e in sample.event_list() if start <= e.t < start + window]
            if members:
                expected.append(members)
            k += 1
        assert [w.event_list() for w in windows] == expected


def test_window_slice_invalid():
    sample = random_sample(np.random.default_rng(7))
    with pytest.raises(EventValidationError):
        window_slice(sample, 0, 100)
    assert window_slice(EventSample.from_arrays([], [], [], [], SensorGeometry(2, 2)), 10, 10) == []


def test_samples_are_immutable():
    sample = random_sample(np.random.default_rng(8))
    with pytest.raises(ValueError):
        sample.events['x'][0] = 1
