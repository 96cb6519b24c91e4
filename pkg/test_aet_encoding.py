from fractions import Fraction
import math

import numpy as np
import pytest
import torch

from aet_encoding.aet import (AETensor, CompressionStages, ConvStage, EncoderConfig, QuantizedEvents,
                              aligned_compress, avg_compress, encode, encode_batch, encoder_input, quantize_array,
                              quantize_timestamps, voxelize_accumulative, voxelize_spike)
from aet_encoding.tensor_io import decode_tensor, encode_tensor, load_tensor, save_tensor
from event_data.errors import ConfigError, EventValidationError, FormatError, ShapeError
from event_data.events import EventSample, SensorGeometry
from nn_micro.tensor import ValueTensor


def random_sample(rng, n=200, width=8, height=8, t_max=100000):
    return EventSample.from_arrays(rng.integers(0, width, size=n), rng.integers(0, height, size=n),
                                   rng.integers(0, t_max, size=n), rng.choice([-1, 1], size=n),
                                   SensorGeometry(width, height), label=0)


def quantize_scalar(t, m_hat):
    t_min, t_max = min(t), max(t)
    if t_max == t_min:
        return [1] * len(t)
    return [max(math.ceil(Fraction(m_hat * (v - t_min), t_max - t_min)), 1) for v in t]


def brute_force_accumulative(q, height, width):
    grid = np.zeros((q.m_hat, height, width))
    for m in range(1, q.m_hat + 1):
        mask = q.bins <= m
        np.add.at(grid[m - 1], (q.y[mask], q.x[mask]), q.p[mask])
    return grid


def test_quantize_examples():
    bins = quantize_array([0, 50, 100, 37], 100)
    assert list(bins) == [1, 50, 100, 37]
    assert list(quantize_array([5, 5, 5], 10)) == [1, 1, 1]
    # interior boundary ties go to the lower bin
    assert list(quantize_array([0, 10, 20, 30], 3)) == [1, 1, 2, 3]


def test_quantize_scalar_oracle():
    rng = np.random.default_rng(0)
    for _ in range(500):
        m_hat = int(rng.integers(1, 200))
        t = rng.integers(0, int(rng.integers(1, 10 ** 9)), size=int(rng.integers(1, 30)))
        assert list(quantize_array(t, m_hat)) == quantize_scalar(t.tolist(), m_hat)


def test_quantize_properties_random_sets():
    rng = np.random.default_rng(1)
    m_hat = 100
    for _ in range(100000):
        t = np.sort(rng.integers(0, 10 ** 6, size=int(rng.integers(1, 12))))
        bins = quantize_array(t, m_hat)
        assert bins.min() >= 1 and bins.max() <= m_hat
        assert np.all(np.diff(bins) >= 0)
        a, b = int(rng.integers(1, 1000)), int(rng.integers(0, 10 ** 6))
        assert np.array_equal(quantize_array(a * t + b, m_hat), bins)


def test_quantize_wide_timestamps():
    t = [0, 2 ** 62 - 1, 2 ** 63 - 2, 2 ** 63 - 1]
    bins = quantize_array(np.array(t, dtype=np.uint64), 100)
    assert list(bins) == quantize_scalar(t, 100) == [1, 50, 100, 100]
    with pytest.raises(EventValidationError) as info:
        quantize_array(np.array([0, 2 ** 63, 5], dtype=np.uint64), 10)
    assert info.value.index == 1


def test_quantize_empty_sample():
    sample = EventSample.from_arrays([], [], [], [], SensorGeometry(2, 2))
    with pytest.raises(ShapeError):
        quantize_timestamps(sample, 10)


def test_accumulative_single_event():
    q = QuantizedEvents(np.array([3]), np.array([2]), np.array([1]), np.array([1]), 6)
    grid = voxelize_accumulative(q, SensorGeometry(4, 3))
    assert list(grid[:, 1, 2]) == [0, 0, 1, 1, 1, 1]
    grid[:, 1, 2] = 0
    assert not grid.any()


def test_accumulative_two_events():
    q = QuantizedEvents(np.array([2, 4]), np.array([0, 0]), np.array([0, 0]), np.array([1, -1]), 6)
    grid = voxelize_accumulative(q, SensorGeometry(1, 1))
    assert list(grid[:, 0, 0]) == [0, 1, 1, 0, 0, 0]


def test_accumulative_brute_force():
    rng = np.random.default_rng(2)
    geometry = SensorGeometry(8, 8)
    for _ in range(1000):
        sample = random_sample(rng, n=int(rng.integers(1, 1001)))
        q = quantize_timestamps(sample, 10)
        assert np.array_equal(voxelize_accumulative(q, geometry), brute_force_accumulative(q, 8, 8))


def test_spike_grid():
    q = QuantizedEvents(np.array([3]), np.array([0]), np.array([0]), np.array([1]), 5)
    grid = voxelize_spike(q, SensorGeometry(1, 1))
    assert list(grid[:, 0, 0]) == [0, 0, 1, 0, 0]
    q = QuantizedEvents(np.array([2, 2]), np.array([1, 1]), np.array([0, 0]), np.array([1, -1]), 5)
    assert not voxelize_spike(q, SensorGeometry(2, 1)).any()


def test_spike_prefix_sum_and_totals():
    rng = np.random.default_rng(3)
    sample = random_sample(rng, n=500)
    q = quantize_timestamps(sample, 12)
    spike = voxelize_spike(q, sample.geometry)
    accumulative = voxelize_accumulative(q, sample.geometry)
    assert np.array_equal(np.cumsum(spike, axis=0), accumulative)
    totals = np.zeros((8, 8))
    np.add.at(totals, (sample.y.astype(int), sample.x.astype(int)), sample.p)
    assert np.array_equal(accumulative[-1], totals)
    assert np.array_equal(spike.sum(axis=0), totals)


def test_split_polarity_voxels():
    rng = np.random.default_rng(4)
    sample = random_sample(rng)
    q = quantize_timestamps(sample, 10)
    split = voxelize_accumulative(q, sample.geometry, split_polarity=True)
    assert split.shape == (10, 2, 8, 8)
    assert np.all(split[:, 0] >= 0) and np.all(split[:, 1] <= 0)
    assert np.array_equal(split.sum(axis=1), voxelize_accumulative(q, sample.geometry))


def test_identity_stage():
    rng = np.random.default_rng(5)
    grid = rng.normal(size=(6, 5, 5)).astype(np.float32)
    out = aligned_compress(grid, ConvStage.identity(2))
    assert out.shape == (3, 1, 5, 5)
    assert np.allclose(out[:, 0], grid[::2])


def torch_conv3d_oracle(frames, stage):
    """
    strided 3-D convolution with temporal extent and stride G
    """
    f, c, h, w = frames.shape
    g, k = stage.group_size, stage.kernel
    weight = stage.weight.reshape(stage.out_channels, g, c, k, k).transpose(0, 2, 1, 3, 4)
    x = torch.from_numpy(np.ascontiguousarray(frames.transpose(1, 0, 2, 3))[None])
    out = torch.nn.functional.conv3d(x, torch.from_numpy(np.ascontiguousarray(weight)),
                                     torch.from_numpy(stage.bias), stride=(g, 1, 1), padding=(0, k // 2, k // 2))
    out = torch.nn.functional.leaky_relu(out, negative_slope=stage.alpha)
    return out[0].numpy().transpose(1, 0, 2, 3)


def test_aligned_compress_conv3d_equivalence():
    rng = np.random.default_rng(6)
    for _ in range(100):
        g = int(rng.integers(1, 5))
        frames = g * int(rng.integers(1, 12 // g + 1))
        c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        k = int(rng.choice([3, 5]))
        h, w = int(rng.integers(3, 9)), int(rng.integers(3, 9))
        stage = ConvStage.initialize(g, c_in, c_out, k, rng)
        grid = rng.normal(size=(frames, c_in, h, w)).astype(np.float32)
        out = aligned_compress(grid, stage)
        expected = torch_conv3d_oracle(grid, stage)
        assert out.shape == (frames // g, c_out, h, w)
        assert np.allclose(out, expected, rtol=1e-5, atol=1e-5)


def test_aligned_compress_zero_input():
    rng = np.random.default_rng(7)
    stage = ConvStage.initialize(2, 1, 3, 3, rng)
    out = aligned_compress(np.zeros((4, 4, 4), dtype=np.float32), stage)
    activated = np.where(stage.bias > 0, stage.bias, stage.alpha * stage.bias)
    assert np.allclose(out, activated[None, :, None, None] * np.ones((2, 3, 4, 4)))


def test_aligned_compress_shape_errors():
    stage = ConvStage.initialize(3, 1, 2, 3, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        aligned_compress(np.zeros((4, 3, 3)), stage)
    with pytest.raises(ShapeError):
        aligned_compress(np.zeros((3, 2, 3, 3)), stage)
    with pytest.raises(ConfigError):
        ConvStage(2, 1, 1, 4)


def test_avg_compress():
    frame = np.arange(12, dtype=np.float32).reshape(3, 4)
    assert np.array_equal(avg_compress(np.stack([frame, frame]), 2)[0], frame)
    out = avg_compress(np.stack([np.zeros((2, 2)), np.full((2, 2), 2.0)]), 2)
    assert np.array_equal(out, np.ones((1, 2, 2)))
    rng = np.random.default_rng(8)
    grid = rng.normal(size=(6, 3, 3))
    out = avg_compress(grid, 3)
    for i in range(2):
        assert np.allclose(out[i], (grid[3 * i] + grid[3 * i + 1] + grid[3 * i + 2]) / 3, atol=1e-6)
    with pytest.raises(ShapeError):
        avg_compress(grid, 4)


def test_encode_default_configuration():
    rng = np.random.default_rng(9)
    sample = random_sample(rng, n=1000, width=16, height=12)
    cfg = EncoderConfig.build()
    assert cfg.m_hat == 100 and cfg.num_frames == 10 and cfg.channels == 3
    aet = encode(sample, cfg)
    assert isinstance(aet, AETensor)
    assert aet.values.shape == (3, 10, 12, 16)
    assert aet.frames().shape == (10, 3, 12, 16)
    assert np.array_equal(encode(sample, cfg).values, aet.values)


def test_encode_modes_shapes():
    rng = np.random.default_rng(10)
    sample = random_sample(rng, n=300)
    shapes = {}
    for mode in ("aet", "spike", "spike-accum", "avg-compress", "quantize-only"):
        cfg = EncoderConfig.build(m_hat=20, groups=(2, 5), channels=(1, 4, 3), kernel=3, mode=mode)
        shapes[mode] = encode(sample, cfg).values.shape
    assert shapes["aet"] == shapes["spike"] == shapes["spike-accum"] == (3, 2, 8, 8)
    assert shapes["avg-compress"] == shapes["quantize-only"] == (1, 2, 8, 8)
    cfg = EncoderConfig.build(m_hat=20, groups=(2, 5), mode="spike-accum")
    assert cfg.stages[0].in_channels == 2
    cfg = EncoderConfig.build(m_hat=20, groups=(2, 5), mode="aet", split_polarity=True)
    assert cfg.stages[0].in_channels == 2
    assert encoder_input(sample, cfg).shape == (20, 2, 8, 8)


def test_encode_quantize_only_and_avg():
    rng = np.random.default_rng(11)
    sample = random_sample(rng, n=300)
    cfg = EncoderConfig.build(m_hat=100, mode="quantize-only")
    q = quantize_timestamps(sample, 10)
    assert np.array_equal(encode(sample, cfg).values[0], voxelize_spike(q, sample.geometry))
    cfg = EncoderConfig.build(m_hat=100, mode="avg")
    accumulative = voxelize_accumulative(quantize_timestamps(sample, 100), sample.geometry)
    expected = accumulative.reshape(10, 10, 8, 8).mean(axis=1)
    assert np.allclose(encode(sample, cfg).values[0], expected, atol=1e-5)


def test_encode_identity_stages_subsample():
    rng = np.random.default_rng(12)
    sample = random_sample(rng, n=400)
    cfg = EncoderConfig(m_hat=100, stages=[ConvStage.identity(2), ConvStage.identity(5)])
    accumulative = voxelize_accumulative(quantize_timestamps(sample, 100), sample.geometry)
    assert np.allclose(encode(sample, cfg).values[0], accumulative[::10])


def test_encoder_config_errors():
    with pytest.raises(ConfigError):
        EncoderConfig.build(m_hat=99, groups=(2, 5))
    with pytest.raises(ConfigError):
        EncoderConfig.build(groups=(2, 5), channels=(1, 3))
    with pytest.raises(ConfigError):
        EncoderConfig.build(mode="fancy")
    with pytest.raises(ShapeError):
        EncoderConfig(m_hat=4, stages=[ConvStage(2, 2, 1, 1)])


def test_encode_batch_matches_serial():
    rng = np.random.default_rng(13)
    samples = [random_sample(rng, n=int(rng.integers(1, 300))) for _ in range(8)]
    cfg = EncoderConfig.build(m_hat=20, groups=(2, 5), kernel=3, seed=4)
    serial = [encode(s, cfg).values for s in samples]
    threaded = [a.values for a in encode_batch(samples, cfg, workers=4)]
    assert all(np.array_equal(a, b) for a, b in zip(serial, threaded))


def test_stage_weights_round_trip():
    cfg = EncoderConfig.build(m_hat=20, groups=(2, 5), kernel=3, seed=1)
    other = EncoderConfig.build(m_hat=20, groups=(2, 5), kernel=3, seed=2)
    restored = other.with_weights(cfg.state_dict(prefix="encoder."), prefix="encoder.")
    for a, b in zip(cfg.stages, restored.stages):
        assert np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)
    with pytest.raises(ShapeError):
        other.with_weights({})


def test_compression_stages_module():
    rng = np.random.default_rng(14)
    sample = random_sample(rng, n=300)
    cfg = EncoderConfig.build(m_hat=20, groups=(2, 5), kernel=3, seed=3)
    voxels = encoder_input(sample, cfg)
    module = CompressionStages(cfg)
    out = module(ValueTensor(voxels[None])).data[0]
    assert np.allclose(out, encode(sample, cfg).frames(), atol=1e-6)
    assert sorted(module.state_dict()) == ["stages.0.bias", "stages.0.weight", "stages.1.bias", "stages.1.weight"]
    exported = module.export_config()
    assert np.array_equal(exported.stages[1].weight, cfg.stages[1].weight)


def test_tensor_file_round_trip(tmp_path):
    rng = np.random.default_rng(15)
    values = rng.normal(size=(3, 4, 5, 6)).astype(np.float32)
    path = tmp_path / "a.aetf"
    save_tensor(values, path)
    loaded = load_tensor(path)
    assert loaded.dtype == np.float32
    assert np.array_equal(loaded, values)
    raw = encode_tensor(values)
    assert raw[:4] == b"AETF"
    assert np.array_equal(decode_tensor(raw), values)


def test_tensor_file_fuzz(tmp_path):
    raw = encode_tensor(np.ones((2, 3, 4), dtype=np.float32))
    for cut in range(len(raw)):
        with pytest.raises(FormatError):
            decode_tensor(raw[:cut])
    with pytest.raises(FormatError):
        decode_tensor(b"ABCD" + raw[4:])
    with pytest.raises(FormatError):
        decode_tensor(raw + b"\x00\x00\x00\x00")
    path = tmp_path / "bad.aetf"
    path.write_bytes(raw[:10])
    with pytest.raises(FormatError) as info:
        load_tensor(path)
    assert "bad.aetf" in str(info.value)
