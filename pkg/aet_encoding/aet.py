import logging
from dataclasses import dataclass, field, replace
from multiprocessing.pool import ThreadPool
from typing import List

import numpy as np
from tqdm import tqdm

from event_data.errors import ConfigError, EventValidationError, ShapeError
from event_data.events import MAX_TIMESTAMP, EventSample
from nn_micro import functional as F
from nn_micro.module import Module, ModuleList
from nn_micro.tensor import Parameter, ValueTensor

"""
event tensor encoding: timestamp quantization, voxelization and aligned compression of the voxel frames
"""

logger = logging.getLogger(__name__)

MODES = ("aet", "spike", "spike-accum", "avg-compress", "quantize-only")
MODE_ALIASES = {"avg": "avg-compress"}
LEAKY_SLOPE = 0.01


def canonical_mode(mode):
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ConfigError("unknown encoder mode '%s', choose from %s" % (mode, ", ".join(MODES)))
    return mode


def input_channels(mode, split_polarity=False):
    channels = 2 if mode == "spike-accum" else 1
    return channels * (2 if split_polarity else 1)


@dataclass
class ConvStage:
    """
    one aligned compression stage: G frames with C_in channels each are merged into one frame with C_out channels

    weight has shape C_out x (G*C_in) x K x K, input channel g*C_in + c belongs to frame g of the group
    """
    group_size: int
    in_channels: int
    out_channels: int
    kernel: int
    weight: np.ndarray = None
    bias: np.ndarray = None
    alpha: float = LEAKY_SLOPE

    def __post_init__(self):
        if self.group_size < 1:
            raise ConfigError("group size must be >= 1, got %d" % self.group_size)
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError("kernel size must be odd, got %d" % self.kernel)
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("channel counts must be >= 1")
        expected = (self.out_channels, self.group_size * self.in_channels, self.kernel, self.kernel)
        if self.weight is None:
            self.weight = np.zeros(expected, dtype=np.float32)
        if self.bias is None:
            self.bias = np.zeros(self.out_channels, dtype=np.float32)
        self.weight = np.asarray(self.weight, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        if self.weight.shape != expected:
            raise ShapeError("stage weight has shape %s, expected %s" % (self.weight.shape, expected))
        if self.bias.shape != (self.out_channels,):
            raise ShapeError("stage bias has shape %s, expected (%d,)" % (self.bias.shape, self.out_channels))

    @classmethod
    def initialize(cls, group_size, in_channels, out_channels, kernel, rng, alpha=LEAKY_SLOPE):
        """
        fan-in scaled uniform initialization in +-1/sqrt(G*C_in*K^2)
        """
        bound = 1.0 / np.sqrt(group_size * in_channels * kernel * kernel)
        weight = rng.uniform(-bound, bound, size=(out_channels, group_size * in_channels, kernel, kernel))
        bias = rng.uniform(-bound, bound, size=out_channels)
        return cls(group_size, in_channels, out_channels, kernel, weight, bias, alpha)

    @classmethod
    def identity(cls, group_size, kernel=1, alpha=1.0):
        """
        stage which passes the first frame of every group through unchanged
        """
        weight = np.zeros((1, group_size, kernel, kernel), dtype=np.float32)
        weight[0, 0, kernel // 2, kernel // 2] = 1
        return cls(group_size, 1, 1, kernel, weight, np.zeros(1, dtype=np.float32), alpha)


@dataclass
class EncoderConfig:
    m_hat: int = 100
    stages: List[ConvStage] = field(default_factory=list)
    mode: str = "aet"
    split_polarity: bool = False

    def __post_init__(self):
        self.mode = canonical_mode(self.mode)
        self.validate()

    @property
    def group_product(self):
        return int(np.prod([s.group_size for s in self.stages], dtype=np.int64))

    @property
    def num_frames(self):
        return self.m_hat // self.group_product

    @property
    def input_channels(self):
        return input_channels(self.mode, self.split_polarity)

    @property
    def uses_stages(self):
        return self.mode in ("aet", "spike", "spike-accum")

    @property
    def channels(self):
        if self.uses_stages and self.stages:
            return self.stages[-1].out_channels
        return self.input_channels

    def validate(self):
        if self.m_hat < 1:
            raise ConfigError("m_hat must be >= 1, got %d" % self.m_hat)
        if self.m_hat % self.group_product != 0:
            raise ConfigError("group sizes %s (product %d) do not divide m_hat=%d"
                              % ([s.group_size for s in self.stages], self.group_product, self.m_hat))
        if self.uses_stages:
            channels = self.input_channels
            for i, stage in enumerate(self.stages):
                if stage.in_channels != channels:
                    raise ShapeError("stage %d expects %d input channels, receives %d" % (i, stage.in_channels, channels))
                channels = stage.out_channels

    @classmethod
    def build(cls, m_hat=100, groups=(2, 5), channels=(1, 4, 3), kernel=5, mode="aet", split_polarity=False, seed=0):
        """
        encoder with freshly initialized stages

        :param groups:      group size per stage
        :param channels:    channel counts, one more entry than groups; the first entry is derived from the mode
        """
        if len(channels) != len(groups) + 1:
            raise ConfigError("need %d channel counts for %d stages, got %s" % (len(groups) + 1, len(groups), list(channels)))
        mode = canonical_mode(mode)
        in_channels = input_channels(mode, split_polarity)
        if channels[0] != in_channels:
            logger.debug("mode %s feeds %d input channels, first channel count %d replaced", mode, in_channels,
                         channels[0])
        rng = np.random.default_rng(seed)
        stages = []
        for g, c_out in zip(groups, channels[1:]):
            stages.append(ConvStage.initialize(g, in_channels, c_out, kernel, rng))
            in_channels = c_out
        return cls(m_hat, stages, mode, split_polarity)

    def with_weights(self, state, prefix=""):
        """
        copy of the config whose stage weights are taken from a parameter state (names "stages.<i>.weight/bias")
        """
        stages = []
        for i, stage in enumerate(self.stages):
            key = "%sstages.%d." % (prefix, i)
            if key + "weight" not in state:
                raise ShapeError("no weights for stage %d (looked for '%sweight')" % (i, key))
            stages.append(replace(stage, weight=state[key + "weight"], bias=state[key + "bias"]))
        return replace(self, stages=stages)

    def state_dict(self, prefix=""):
        state = {}
        for i, stage in enumerate(self.stages):
            state["%sstages.%d.weight" % (prefix, i)] = stage.weight
            state["%sstages.%d.bias" % (prefix, i)] = stage.bias
        return state


@dataclass
class QuantizedEvents:
    bins: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    m_hat: int

    def __len__(self):
        return self.bins.shape[0]


@dataclass
class AETensor:
    """
    encoder output, values has shape C x M* x H x W
    """
    values: np.ndarray

    @property
    def channels(self):
        return self.values.shape[0]

    @property
    def num_frames(self):
        return self.values.shape[1]

    def frames(self):
        return self.values.transpose(1, 0, 2, 3)


def quantize_array(t, m_hat):
    """
    bins = max(ceil(m_hat * (t - min) / (max - min)), 1) evaluated in exact integer arithmetic;
    max == min puts every timestamp into bin 1
    """
    t = np.asarray(t)
    if t.size == 0:
        raise ShapeError("cannot quantize an empty timestamp set")
    if np.issubdtype(t.dtype, np.unsignedinteger) and t.max() > np.uint64(MAX_TIMESTAMP):
        raise EventValidationError("timestamp %d above %d" % (t.max(), MAX_TIMESTAMP), index=int(t.argmax()))
    t = t.astype(np.int64)
    t_min, t_max = t.min(), t.max()
    span = int(t_max) - int(t_min)
    if span == 0:
        return np.ones(t.shape, dtype=np.int64)
    if span > MAX_TIMESTAMP // m_hat:
        # m_hat * (t - min) leaves int64, fall back to python integers
        delta = t.astype(object) - int(t_min)
    else:
        delta = t - t_min
    bins = (-((-m_hat * delta) // span)).astype(np.int64)
    return np.maximum(bins, 1)


def quantize_timestamps(sample: EventSample, m_hat) -> QuantizedEvents:
    if len(sample) == 0:
        raise ShapeError("sample %s has no events to quantize" % sample.sample_id)
    bins = quantize_array(sample.t, m_hat)
    return QuantizedEvents(bins, sample.x.astype(np.int64), sample.y.astype(np.int64), sample.p.astype(np.int64), m_hat)


def _scatter(q: QuantizedEvents, geometry, mask=None):
    h, w = geometry.shape
    index = (q.bins - 1) * (h * w) + q.y * w + q.x
    weights = q.p.astype(np.float64)
    if mask is not None:
        index, weights = index[mask], weights[mask]
    grid = np.bincount(index, weights=weights, minlength=q.m_hat * h * w)
    return grid.reshape(q.m_hat, h, w).astype(np.float32)


def voxelize_spike(q: QuantizedEvents, geometry, split_polarity=False):
    """
    V(m, y, x) = signed sum of the events at (x, y) in bin m

    :return: M^ x H x W, or M^ x 2 x H x W with positive and negative events separated
    """
    if not split_polarity:
        return _scatter(q, geometry)
    return np.stack([_scatter(q, geometry, q.p > 0), _scatter(q, geometry, q.p < 0)], axis=1)


def voxelize_accumulative(q: QuantizedEvents, geometry, split_polarity=False):
    """
    V(m, y, x) = signed sum of the events at (x, y) with bin <= m, a prefix sum of the spike grid over the time axis
    """
    return np.cumsum(voxelize_spike(q, geometry, split_polarity), axis=0, dtype=np.float32)


def _frames(grid):
    return grid[:, None] if grid.ndim == 3 else grid


def compress_frames(x, weight, bias, group_size, alpha=LEAKY_SLOPE):
    """
    differentiable aligned compression

    :param x:       N x F x C x H x W tensor
    :param weight:  C_out x (G*C) x K x K
    :return: N x (F/G) x C_out x H x W
    """
    n, frames, c, h, w = x.dims
    if frames % group_size != 0:
        raise ShapeError("%d frames are not divisible into groups of %d" % (frames, group_size))
    k = weight.dims[-1]
    grouped = F.reshape(x, (n * frames // group_size, group_size * c, h, w))
    out = F.leaky_relu(F.conv2d(grouped, weight, bias, padding=k // 2), alpha)
    return F.reshape(out, (n, frames // group_size, out.dims[1], h, w))


def aligned_compress(grid, stage: ConvStage):
    """
    merge every G consecutive frames into one frame through a shared same-padded convolution

    :param grid:    frames x C_in x H x W (or frames x H x W for C_in = 1)
    :return: (frames/G) x C_out x H x W
    """
    frames = _frames(np.asarray(grid))
    if frames.shape[1] != stage.in_channels:
        raise ShapeError("stage expects %d channels, grid has %d" % (stage.in_channels, frames.shape[1]))
    out = compress_frames(ValueTensor(frames[None]), ValueTensor(stage.weight), ValueTensor(stage.bias),
                          stage.group_size, stage.alpha)
    return out.data[0]


def avg_compress(grid, group_size):
    """
    mean of every G consecutive frames
    """
    grid = np.asarray(grid, dtype=np.float32)
    frames = grid.shape[0]
    if group_size < 1 or frames % group_size != 0:
        raise ShapeError("%d frames are not divisible into groups of %d" % (frames, group_size))
    return grid.reshape((frames // group_size, group_size) + grid.shape[1:]).mean(axis=1)


def encoder_input(sample: EventSample, cfg: EncoderConfig):
    """
    the non-trainable part of the encoder: frames x C x H x W handed to the compression stages
    """
    if cfg.mode == "quantize-only":
        q = quantize_timestamps(sample, cfg.num_frames)
        return _frames(voxelize_spike(q, sample.geometry, cfg.split_polarity))
    q = quantize_timestamps(sample, cfg.m_hat)
    if cfg.mode == "spike":
        return _frames(voxelize_spike(q, sample.geometry, cfg.split_polarity))
    accumulative = _frames(voxelize_accumulative(q, sample.geometry, cfg.split_polarity))
    if cfg.mode == "spike-accum":
        spike = _frames(voxelize_spike(q, sample.geometry, cfg.split_polarity))
        return np.concatenate([spike, accumulative], axis=1)
    if cfg.mode == "avg-compress":
        for stage in cfg.stages:
            accumulative = avg_compress(accumulative, stage.group_size)
    return accumulative


def encode(sample: EventSample, cfg: EncoderConfig) -> AETensor:
    frames = encoder_input(sample, cfg)
    if cfg.uses_stages:
        for stage in cfg.stages:
            frames = aligned_compress(frames, stage)
    return AETensor(np.ascontiguousarray(frames.transpose(1, 0, 2, 3), dtype=np.float32))


def encode_batch(samples, cfg: EncoderConfig, workers=1, progress=False):
    """
    encode samples with a thread pool, the output order follows the input order
    """
    logger.debug("encoding %d samples with %d workers", len(samples), workers)
    if workers <= 1:
        return [encode(s, cfg) for s in tqdm(samples, disable=not progress)]
    with ThreadPool(workers) as pool:
        return list(tqdm(pool.imap(lambda s: encode(s, cfg), samples), total=len(samples), disable=not progress))


class StageModule(Module):
    def __init__(self, stage: ConvStage):
        super().__init__()
        self.weight = Parameter(stage.weight.copy())
        self.bias = Parameter(stage.bias.copy())
        self.group_size = stage.group_size
        self.alpha = stage.alpha

    def forward(self, x):
        return compress_frames(x, self.weight, self.bias, self.group_size, self.alpha)


class CompressionStages(Module):
    """
    trainable compression stages applied to cached encoder input of shape N x F x C x H x W
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.stages = ModuleList([StageModule(s) for s in cfg.stages] if cfg.uses_stages else [])

    def forward(self, x):
        for stage in self.stages:
            x = stage(x)
        return x

    def export_config(self):
        """
        encoder config carrying the current (trained) stage weights
        """
        state = {name: p.data for name, p in self.named_parameters().items()}
        return self.cfg.with_weights(state) if self.cfg.uses_stages else self.cfg
