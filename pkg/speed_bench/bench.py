import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from aet_encoding.aet import EncoderConfig, encode
from efn_training.train_efn import combine_logits
from event_data.errors import ConfigError, EventIOError
from event_data.events import EventSample, SensorGeometry
from nn_micro.tensor import ValueTensor

"""
latency and throughput measurement, one sample at a time on a single worker
"""

logger = logging.getLogger(__name__)

STAGES = ("encode-only", "full")
# GPU numbers of the original method, printed as context only
PAPER_REFERENCE = {"latency_ms": 3.18, "throughput_kev_s": 1194.20}
MIN_SAMPLES = 10


@dataclass
class BenchReport:
    stage: str
    num_samples: int
    total_events: int
    total_time_s: float
    mean_ms: float
    median_ms: float
    p95_ms: float
    std_ms: float
    throughput_kev_s: float
    fingerprint: str
    latencies_ms: List[float] = field(default_factory=list, repr=False)
    # encode-only: median over the same samples with every event doubled, and its ratio to median_ms
    doubled_median_ms: Optional[float] = None
    doubling_factor: Optional[float] = None

    def summary(self):
        d = asdict(self)
        d.pop('latencies_ms')
        return {k: v for k, v in d.items() if v is not None}


def config_fingerprint(cfg: EncoderConfig, stage, model=None):
    """
    short hash of the encoder settings, stage weights and model parameters
    """
    h = hashlib.sha1()
    h.update(("%s|%d|%s|%s" % (stage, cfg.m_hat, cfg.mode, cfg.split_polarity)).encode())
    for s in cfg.stages:
        h.update(("%d,%d,%d,%d" % (s.group_size, s.in_channels, s.out_channels, s.kernel)).encode())
        h.update(s.weight.tobytes())
        h.update(s.bias.tobytes())
    if model is not None:
        for name, p in model.named_parameters().items():
            h.update(name.encode())
            h.update(p.data.tobytes())
    return h.hexdigest()[:12]


def _report(stage, samples, durations, fingerprint):
    durations = np.asarray(durations)
    latencies = durations * 1e3
    total_events = int(sum(len(s) for s in samples))
    total_time = float(durations.sum())
    return BenchReport(stage=stage, num_samples=len(samples), total_events=total_events, total_time_s=total_time,
                       mean_ms=float(latencies.mean()), median_ms=float(np.median(latencies)),
                       p95_ms=float(np.percentile(latencies, 95)), std_ms=float(latencies.std()),
                       throughput_kev_s=total_events / total_time / 1e3 if total_time > 0 else float("inf"),
                       fingerprint=fingerprint, latencies_ms=latencies.tolist())


def bench_pipeline(samples, model, cfg: EncoderConfig, stage="full", acc=None, warmup=3, mode="synthesis",
                   doubling=True):
    """
    time the encoder (encode-only) or encoder plus network and synthesis (full) per sample

    :param samples: preloaded samples, at least 10
    :param model:   AetEfn, only needed for the full stage
    :param acc:     accuracy matrix for the synthesis, None averages the classifiers
    :param warmup:  untimed runs before the measurement
    :param doubling:    encode-only also times every sample followed by a shifted copy of itself
    :return: BenchReport
    """
    if stage not in STAGES:
        raise ConfigError("unknown bench stage '%s', choose from %s" % (stage, ", ".join(STAGES)))
    if len(samples) < MIN_SAMPLES:
        raise ConfigError("benchmark needs at least %d samples, got %d" % (MIN_SAMPLES, len(samples)))
    if stage == "full" and model is None:
        raise ConfigError("the full pipeline needs a model")
    if acc is None and stage == "full":
        mode = "average"

    def run(sample):
        aet = encode(sample, cfg)
        if stage == "full":
            logits = model.net(ValueTensor(aet.frames()[None])).data
            return combine_logits(logits, acc, mode).argmax(axis=-1)
        return aet

    for i in range(warmup):
        run(samples[i % len(samples)])
    fingerprint = config_fingerprint(cfg, stage, model if stage == "full" else None)
    report = _report(stage, samples, _timed(run, samples), fingerprint)
    if stage == "encode-only" and doubling:
        doubled = _timed(run, [doubled_sample(s) for s in samples])
        report.doubled_median_ms = float(np.median(doubled)) * 1e3
        report.doubling_factor = report.doubled_median_ms / report.median_ms if report.median_ms > 0 else float("inf")
        logger.info("bench %s: doubling the events scales the median by %.2f", stage, report.doubling_factor)
    logger.info("bench %s: %d samples, median %.3f ms, %.1f kEv/s", stage, report.num_samples, report.median_ms,
                report.throughput_kev_s)
    return report


def _timed(run, samples):
    """
    wall time [s] of run per sample
    """
    durations = []
    for sample in samples:
        t0 = time.perf_counter()
        run(sample)
        durations.append(time.perf_counter() - t0)
    return durations


def make_uniform_sample(num_events, geometry: SensorGeometry, duration_us=100000, seed=0, sample_id=None):
    """
    events uniformly spread over the sensor and the duration
    """
    rng = np.random.default_rng(seed)
    x = rng.integers(0, geometry.width, size=num_events)
    y = rng.integers(0, geometry.height, size=num_events)
    t = rng.integers(0, duration_us, size=num_events)
    p = rng.choice(np.array([-1, 1]), size=num_events)
    return EventSample.from_arrays(x, y, t, p, geometry, sample_id=sample_id or "uniform_%d" % num_events)


def doubled_sample(sample: EventSample):
    """
    the sample followed by a copy of itself shifted behind its last event
    """
    if len(sample) == 0:
        return sample
    shifted = np.array(sample.events)
    shifted['t'] = shifted['t'] + np.uint64(sample.duration_us + 1)
    return sample.with_events(np.concatenate([sample.events, shifted]), sample_id=sample.sample_id + "_x2")


def scaling_check(event_counts, cfg: EncoderConfig, geometry: SensorGeometry, repeats=5, duration_us=100000, seed=0):
    """
    encode time over the number of events

    :return: list of rows with num_events, mean_ms, median_ms, cv (coefficient of variation over the repeats)
    """
    counts = list(event_counts)
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise ConfigError("event counts must be increasing, got %s" % counts)
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    rows = []
    for n in counts:
        sample = make_uniform_sample(n, geometry, duration_us, seed)
        encode(sample, cfg)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            encode(sample, cfg)
            times.append((time.perf_counter() - t0) * 1e3)
        times = np.asarray(times)
        rows.append(dict(num_events=n, mean_ms=float(times.mean()), median_ms=float(np.median(times)),
                         cv=float(times.std() / times.mean()) if times.mean() > 0 else 0.0))
        logger.debug("scaling %d events: median %.3f ms", n, rows[-1]['median_ms'])
    for prev, row in zip(rows, rows[1:]):
        row['ratio'] = row['median_ms'] / prev['median_ms'] if prev['median_ms'] > 0 else float("inf")
    if rows:
        rows[0]['ratio'] = 1.0
    return rows


def dataset_statistics(samples):
    """
    number of classes and samples, mean events [kEv], mean length [s] and mean event rate [kEv/s]
    """
    if len(samples) == 0:
        raise ConfigError("no samples")
    events = np.array([len(s) for s in samples], dtype=np.float64)
    lengths = np.array([s.duration_us for s in samples], dtype=np.float64) * 1e-6
    rates = np.where(lengths > 0, events / np.maximum(lengths, 1e-12), 0.0)
    labels = {s.label for s in samples if s.label is not None}
    return dict(num_classes=len(labels), num_samples=len(samples), mean_kev=float(events.mean() / 1e3),
                mean_length_s=float(lengths.mean()), mean_kev_s=float(rates.mean() / 1e3))


def format_table(rows, columns=None):
    """
    aligned text table of a list of dicts
    """
    if not rows:
        return ""
    columns = columns or list(rows[0])

    def cell(value):
        return "%.3f" % value if isinstance(value, float) else str(value)

    cells = [[cell(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def write_summary(values, path):
    """
    key=value lines
    """
    lines = ["%s=%s" % (k, ("%.6f" % v) if isinstance(v, float) else v) for k, v in values.items()]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise EventIOError(path, e.strerror or str(e)) from e
