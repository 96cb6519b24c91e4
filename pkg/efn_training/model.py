from dataclasses import dataclass
from typing import Tuple

import numpy as np

from aet_encoding.aet import CompressionStages, EncoderConfig
from event_data.errors import ConfigError, ShapeError
from nn_micro import functional as F
from nn_micro.module import Conv1d, Conv2d, GroupedLinear, Linear, Module, ModuleList


@dataclass
class EfnConfig:
    """
    network settings; frames are classified by M* frame classifiers plus one video classifier
    """
    num_frames: int
    num_classes: int
    in_channels: int = 3
    feature_dim: int = 64
    widths: Tuple[int, ...] = (16, 32, 64)
    k1: int = 5
    k2: int = 3
    pool_size: int = 2
    alpha: float = 0.01
    shared_frame_classifier: bool = False

    def __post_init__(self):
        self.widths = tuple(self.widths)
        if self.num_frames < 1:
            raise ConfigError("num_frames must be >= 1, got %d" % self.num_frames)
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes, got %d" % self.num_classes)
        if not self.widths:
            raise ConfigError("the backbone needs at least one block")
        self.video_lengths()

    def video_lengths(self):
        """
        temporal lengths after conv1d(k1), conv1d(k2) and max pooling
        """
        l1 = self.num_frames - self.k1 + 1
        l2 = l1 - self.k2 + 1
        l3 = l2 // self.pool_size if self.pool_size >= 1 else 0
        if l1 < 1 or l2 < 1 or l3 < 1:
            raise ConfigError("video branch with k1=%d, k2=%d, pool %d does not fit %d frames (lengths %d, %d, %d)"
                              % (self.k1, self.k2, self.pool_size, self.num_frames, l1, l2, l3))
        return l1, l2, l3

    @property
    def num_classifiers(self):
        return self.num_frames + 1


class Backbone(Module):
    """
    per-frame CNN: blocks of (3x3 same conv, leaky rectifier, 2x2 max pool), global average pool, affine map to D
    """

    def __init__(self, cfg: EfnConfig, rng):
        super().__init__()
        channels = (cfg.in_channels,) + cfg.widths
        self.blocks = ModuleList([Conv2d(c_in, c_out, 3, padding=1, rng=rng)
                                  for c_in, c_out in zip(channels[:-1], channels[1:])])
        self.proj = Linear(cfg.widths[-1], cfg.feature_dim, rng=rng)
        self.alpha = cfg.alpha

    def forward(self, x):
        for conv in self.blocks:
            x = F.max_pool2d(F.leaky_relu(conv(x), self.alpha), 2)
        return self.proj(F.global_avg(x, axis=(-2, -1)))


class FrameBranch(Module):
    """
    one affine classifier per frame (grouped 1x1 convolution), or a single classifier shared by all frames
    """

    def __init__(self, cfg: EfnConfig, rng):
        super().__init__()
        self.num_frames = cfg.num_frames
        self.num_classes = cfg.num_classes
        self.shared = cfg.shared_frame_classifier
        if self.shared:
            self.classifier = Linear(cfg.feature_dim, cfg.num_classes, rng=rng)
        else:
            self.classifier = GroupedLinear(cfg.num_frames, cfg.feature_dim, cfg.num_classes, rng=rng)

    def forward(self, emb):
        """
        :param emb: N x M* x D
        :return: N x M* x K
        """
        n, frames, d = emb.dims
        if frames != self.num_frames:
            raise ShapeError("frame branch expects %d frames, got %d" % (self.num_frames, frames))
        if self.shared:
            out = self.classifier(F.reshape(emb, (n * frames, d)))
        else:
            out = self.classifier(F.reshape(emb, (n, frames * d)))
        return F.reshape(out, (n, frames, self.num_classes))


class VideoBranch(Module):
    """
    D x M* sequence -> conv1d(k1) -> leaky rectifier -> conv1d(k2) to K channels -> max pool -> global max
    """

    def __init__(self, cfg: EfnConfig, rng):
        super().__init__()
        self.conv1 = Conv1d(cfg.feature_dim, cfg.feature_dim, cfg.k1, rng=rng)
        self.conv2 = Conv1d(cfg.feature_dim, cfg.num_classes, cfg.k2, rng=rng)
        self.pool_size = cfg.pool_size
        self.alpha = cfg.alpha

    def forward(self, emb):
        """
        :param emb: N x M* x D
        :return: N x K
        """
        seq = F.transpose(emb, (0, 2, 1))
        seq = F.leaky_relu(self.conv1(seq), self.alpha)
        seq = F.max_pool1d(self.conv2(seq), self.pool_size)
        return F.global_max(seq, axis=-1)


class EventFrameNet(Module):
    def __init__(self, cfg: EfnConfig, seed=0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.backbone = Backbone(cfg, rng)
        self.frame_branch = FrameBranch(cfg, rng)
        self.video_branch = VideoBranch(cfg, rng)

    def embed(self, frames):
        """
        shared backbone over every frame

        :param frames: N x M* x C x H x W
        :return: N x M* x D
        """
        n, m, c, h, w = frames.dims
        if c != self.cfg.in_channels:
            raise ShapeError("backbone expects %d channels, frames have %d" % (self.cfg.in_channels, c))
        emb = self.backbone(F.reshape(frames, (n * m, c, h, w)))
        return F.reshape(emb, (n, m, self.cfg.feature_dim))

    def forward(self, frames):
        """
        :return: N x (M*+1) x K logits, frame classifiers first, the video classifier last
        """
        emb = self.embed(frames)
        frame_logits = self.frame_branch(emb)
        video_logits = self.video_branch(emb)
        n, k = video_logits.dims
        return F.concat([frame_logits, F.reshape(video_logits, (n, 1, k))], axis=1)


class AetEfn(Module):
    """
    trainable compression stages followed by the event frame net

    the input is the cached encoder input N x F x C_in x H x W
    """

    def __init__(self, encoder_cfg: EncoderConfig, num_classes, seed=0, **efn_kwargs):
        super().__init__()
        self.efn_cfg = EfnConfig(num_frames=encoder_cfg.num_frames, num_classes=num_classes,
                                 in_channels=encoder_cfg.channels, **efn_kwargs)
        self.encoder = CompressionStages(encoder_cfg)
        self.net = EventFrameNet(self.efn_cfg, seed=seed)

    def forward(self, voxels):
        return self.net(self.encoder(voxels))

    def encoder_config(self):
        return self.encoder.export_config()


MODEL_KEYS = ("mhat", "groups", "channels", "kernel", "mode", "split_polarity", "feature_dim", "widths", "k1", "k2",
              "pool_size", "shared_frame_classifier", "num_classes", "seed")


def _ints(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def model_from_settings(settings):
    """
    build an AetEfn from string settings (the key=value file stored next to a checkpoint)
    """
    missing = [key for key in MODEL_KEYS if key not in settings]
    if missing:
        raise ConfigError("model settings incomplete, missing %s" % ", ".join(missing))
    seed = int(settings["seed"])
    encoder_cfg = EncoderConfig.build(m_hat=int(settings["mhat"]), groups=_ints(settings["groups"]),
                                      channels=_ints(settings["channels"]), kernel=int(settings["kernel"]),
                                      mode=settings["mode"], split_polarity=str(settings["split_polarity"]) == "True",
                                      seed=seed)
    return AetEfn(encoder_cfg, int(settings["num_classes"]), seed=seed, feature_dim=int(settings["feature_dim"]),
                  widths=_ints(settings["widths"]), k1=int(settings["k1"]), k2=int(settings["k2"]),
                  pool_size=int(settings["pool_size"]),
                  shared_frame_classifier=str(settings["shared_frame_classifier"]) == "True")


def settings_to_strings(values):
    """
    lists become comma separated strings, everything else str()
    """
    return {key: ",".join(str(v) for v in value) if isinstance(value, (list, tuple)) else str(value)
            for key, value in values.items()}
