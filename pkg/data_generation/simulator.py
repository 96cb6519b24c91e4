import logging

import numpy as np

from data_generation.utils import Configurable
from event_data.errors import ConfigError, GenerationError
from event_data.events import EventSample, SensorGeometry

"""
event camera simulator: per-pixel log-intensity threshold crossings of rendered synthetic scenes
"""

logger = logging.getLogger(__name__)

SHAPES = ("disc", "square", "bar", "flash-pair")
MOTIONS = ("static-jitter", "translate", "temporal-order")
ORDERS = ("A-then-B", "B-then-A")
INTENSITY_FLOOR = 0.05
THRESHOLD_TOL = 1e-9


class SceneConfig(Configurable):
    """
    settings of one synthetic recording, see default_config for the keys
    """

    def __init__(self, config=None):
        super().__init__(config)
        self.validate()

    @classmethod
    def default_config(cls):
        return dict(
            geometry=dict(width=32, height=32),
            duration_us=100000,
            frame_rate=1000.0,  # virtual frames per second
            shape="disc",
            size=5.0,  # radius / half side length [px]
            position_jitter=3.0,  # random offset of the object center [px]
            onset_us=0,  # the object is on the background from this time, 0: from the first frame
            motion=dict(
                kind="static-jitter",
                amplitude=1.5,  # static-jitter [px]
                frequency=20.0,  # static-jitter [Hz]
                vx=0.0,  # translate [px/s]
                vy=0.0,
                order="A-then-B",  # temporal-order
                num_slots=10,
            ),
            background=0.5,
            contrast=0.6,
            threshold=0.2,  # log-intensity units
            noise_rate=0.0,  # events per pixel per second
            seed=0,
            label=None,
            sample_id="sample",
        )

    @property
    def geometry(self):
        return SensorGeometry(int(self.config['geometry']['width']), int(self.config['geometry']['height']))

    @property
    def num_frames(self):
        return int(np.floor(self.config['duration_us'] * self.config['frame_rate'] / 1e6 + 1e-9)) + 1

    def validate(self):
        c = self.config
        if c['threshold'] <= 0:
            raise ConfigError("threshold must be positive, got %s" % c['threshold'])
        if c['duration_us'] <= 0:
            raise ConfigError("duration must be positive, got %s" % c['duration_us'])
        if c['noise_rate'] < 0:
            raise ConfigError("noise rate must be non-negative, got %s" % c['noise_rate'])
        if not 0 <= c['onset_us'] < c['duration_us']:
            raise ConfigError("onset %s is outside [0, %d) us" % (c['onset_us'], c['duration_us']))
        if self.num_frames < 2:
            raise ConfigError("frame rate %s gives fewer than 2 frames in %d us" % (c['frame_rate'], c['duration_us']))
        if c['shape'] not in SHAPES:
            raise ConfigError("unknown shape '%s', choose from %s" % (c['shape'], ", ".join(SHAPES)))
        motion = c['motion']
        if motion['kind'] not in MOTIONS:
            raise ConfigError("unknown motion '%s', choose from %s" % (motion['kind'], ", ".join(MOTIONS)))
        if (motion['kind'] == "temporal-order") != (c['shape'] == "flash-pair"):
            raise ConfigError("the flash-pair shape and the temporal-order motion only exist together")
        if motion['kind'] == "temporal-order":
            if motion['order'] not in ORDERS:
                raise ConfigError("unknown order '%s', choose from %s" % (motion['order'], ", ".join(ORDERS)))
            if motion['num_slots'] < 2:
                raise ConfigError("temporal-order needs at least 2 slots")
        self.geometry


def shape_mask(shape, cx, cy, size, geometry):
    """
    soft-edged object mask in [0, 1] on the pixel grid, cx and cy may be arrays (one mask per frame)

    :return: frames x H x W
    """
    cx = np.atleast_1d(np.asarray(cx, dtype=np.float64))[:, None, None]
    cy = np.atleast_1d(np.asarray(cy, dtype=np.float64))[:, None, None]
    ys, xs = np.mgrid[0:geometry.height, 0:geometry.width]
    dx = xs[None] + 0.5 - cx
    dy = ys[None] + 0.5 - cy
    if shape == "disc":
        return np.clip(size + 0.5 - np.hypot(dx, dy), 0, 1)
    if shape in ("square", "flash-pair"):
        return np.clip(size + 0.5 - np.maximum(np.abs(dx), np.abs(dy)), 0, 1)
    if shape == "bar":
        return np.clip(size / 2 + 0.5 - np.abs(dx), 0, 1) * np.clip(size * 1.5 + 0.5 - np.abs(dy), 0, 1)
    raise ConfigError("unknown shape '%s'" % shape)


def frame_times(config: SceneConfig):
    return np.round(np.arange(config.num_frames) * 1e6 / config.config['frame_rate']).astype(np.int64)


def flash_schedule(config: SceneConfig, rng):
    """
    on/off intervals [us] of the two flash regions; the first region of the order flashes in slots j and j+n/2,
    the second one in the slots right after

    the slots wrap around, so an A-then-B recording cut to its first half holds region B events as well, unlike a
    recording that flashes A once and then B once. What holds instead is the slot-local form: the slot before each
    onset of the second region only holds events of the first one. Each single frame then sees both regions equally
    often in both classes.

    :return: dict region -> list of (t_on, t_off)
    """
    motion = config.config['motion']
    n = motion['num_slots']
    slot = config.config['duration_us'] / n
    first, second = ("A", "B") if motion['order'] == "A-then-B" else ("B", "A")
    j = int(rng.integers(n))
    slots = {first: [j % n, (j + n // 2) % n], second: [(j + 1) % n, (j + 1 + n // 2) % n]}
    schedule = {}
    for region in ("A", "B"):
        intervals = []
        for k in sorted(slots[region]):
            on, off = k + 0.25 + rng.uniform(-0.05, 0.05), k + 0.65 + rng.uniform(-0.05, 0.05)
            intervals.append((on * slot, off * slot))
        schedule[region] = intervals
    return schedule


def render_log_intensity(config: SceneConfig, rng):
    """
    log intensity of the scene at every virtual frame

    :return: frames x H x W
    """
    c = config.config
    geometry = config.geometry
    times = frame_times(config)
    t_s = times * 1e-6
    motion = c['motion']
    size = c['size']

    if motion['kind'] == "temporal-order":
        schedule = flash_schedule(config, rng)
        scene = np.full((len(times), geometry.height, geometry.width), c['background'])
        centers = {"A": geometry.width / 4, "B": 3 * geometry.width / 4}
        for region, intervals in schedule.items():
            mask = shape_mask("flash-pair", centers[region], geometry.height / 2, size, geometry)[0]
            active = np.zeros(len(times), dtype=bool)
            for t_on, t_off in intervals:
                active |= (times >= t_on) & (times < t_off)
            scene += c['contrast'] * active[:, None, None] * mask[None]
        return np.log(np.maximum(scene, INTENSITY_FLOOR))

    offset = rng.uniform(-c['position_jitter'], c['position_jitter'], size=2)
    cx0 = geometry.width / 2 + offset[0]
    cy0 = geometry.height / 2 + offset[1]
    if motion['kind'] == "static-jitter":
        phase = rng.uniform(0, 2 * np.pi, size=2)
        arg = 2 * np.pi * motion['frequency'] * t_s
        cx = cx0 + motion['amplitude'] * np.sin(arg + phase[0])
        cy = cy0 + motion['amplitude'] * np.sin(arg + phase[1])
    else:
        t_mid = 0.5 * c['duration_us'] * 1e-6
        cx = cx0 + motion['vx'] * (t_s - t_mid)
        cy = cy0 + motion['vy'] * (t_s - t_mid)
    visible = (times >= c['onset_us'])[:, None, None]
    scene = c['background'] + c['contrast'] * visible * shape_mask(c['shape'], cx, cy, size, geometry)
    return np.log(np.maximum(scene, INTENSITY_FLOOR))


def threshold_crossings(log_intensity, times_us, threshold):
    """
    per pixel, emit floor(|L - L_ref| / threshold) events at every frame and move L_ref by the emitted steps

    :return: x, y, t, p arrays in frame order
    """
    ref = np.array(log_intensity[0], dtype=np.float64)
    xs, ys, ts, ps = [], [], [], []
    for k in range(1, log_intensity.shape[0]):
        diff = log_intensity[k] - ref
        counts = np.floor((np.abs(diff) + THRESHOLD_TOL) / threshold).astype(np.int64)
        y, x = np.nonzero(counts)
        if y.size == 0:
            continue
        n = counts[y, x]
        sign = np.sign(diff[y, x]).astype(np.int64)
        ref[y, x] += sign * n * threshold
        xs.append(np.repeat(x, n))
        ys.append(np.repeat(y, n))
        ps.append(np.repeat(sign, n))
        ts.append(np.full(n.sum(), times_us[k], dtype=np.int64))
    if not xs:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty, empty
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ts), np.concatenate(ps)


def noise_events(geometry, duration_us, noise_rate, rng):
    """
    time-homogeneous uniform noise with equiprobable polarity
    """
    expected = noise_rate * geometry.width * geometry.height * duration_us * 1e-6
    n = rng.poisson(expected)
    x = rng.integers(0, geometry.width, size=n)
    y = rng.integers(0, geometry.height, size=n)
    t = rng.integers(0, duration_us, size=n)
    p = rng.choice(np.array([-1, 1]), size=n)
    return x, y, t, p


def render_intensity_events(log_intensity, times_us, threshold, geometry=None, noise_rate=0.0, duration_us=None,
                            rng=None, label=None, sample_id="sample"):
    """
    convert a log-intensity video into an event sample

    :param log_intensity:   frames x H x W
    :param times_us:        timestamp of every frame
    :param threshold:       contrast threshold in log units
    :return: EventSample sorted by t
    """
    log_intensity = np.asarray(log_intensity, dtype=np.float64)
    if threshold <= 0:
        raise ConfigError("threshold must be positive, got %s" % threshold)
    if geometry is None:
        geometry = SensorGeometry(log_intensity.shape[2], log_intensity.shape[1])
    x, y, t, p = threshold_crossings(log_intensity, np.asarray(times_us, dtype=np.int64), threshold)
    if noise_rate > 0:
        rng = np.random.default_rng() if rng is None else rng
        duration_us = int(times_us[-1]) if duration_us is None else duration_us
        nx, ny, nt, np_ = noise_events(geometry, duration_us, noise_rate, rng)
        x, y, t, p = (np.concatenate(a) for a in ((x, nx), (y, ny), (t, nt), (p, np_)))
    if x.size == 0:
        raise GenerationError("no events generated for %s" % sample_id)
    return EventSample.from_arrays(x, y, t, p, geometry, label=label, sample_id=sample_id)


def render_events(config: SceneConfig) -> EventSample:
    """
    simulate one recording; deterministic given the config (including its seed)
    """
    if not isinstance(config, SceneConfig):
        config = SceneConfig(config)
    c = config.config
    rng = np.random.default_rng(c['seed'])
    log_intensity = render_log_intensity(config, rng)
    sample = render_intensity_events(log_intensity, frame_times(config), c['threshold'], config.geometry,
                                     c['noise_rate'], c['duration_us'], rng, c['label'], c['sample_id'])
    logger.debug("rendered %s: %d events", sample.sample_id, len(sample))
    return sample
