import logging
import os
from multiprocessing.pool import ThreadPool
from pathlib import Path

import numpy as np
from tqdm import tqdm

from data_generation.simulator import SceneConfig, render_events
from data_generation.utils import Configurable, TaskSpec
from event_data.errors import EventIOError, EventParseError
from event_data.events import load_events, save_events

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.txt"


def sample_seed(seed, class_idx, sample_idx):
    """
    per-sample seed derived from the master seed
    """
    return int(np.random.SeedSequence([seed, class_idx, sample_idx]).generate_state(1)[0])


def make_dataset(spec: TaskSpec, seed=0, workers=1, progress=False):
    """
    render a class-balanced dataset

    :param spec:        task with one scene template per class
    :param seed:        master seed
    :param workers:     rendering threads
    :param progress:    show a progress bar
    :return: dict split -> list of EventSample, ordered by class then sample index
    """
    counts = spec.split_counts()
    jobs = []
    for class_idx, template in enumerate(spec.classes):
        idx = 0
        for split, count in zip(SPLITS, counts):
            for _ in range(count):
                config = Configurable.rec_update(dict(template), dict(
                    seed=sample_seed(seed, class_idx, idx), label=class_idx,
                    sample_id="%s_c%d_%04d" % (spec.task, class_idx, idx)))
                jobs.append((split, SceneConfig(config)))
                idx += 1
    logger.info("Rendering %d samples of task %s (%d classes, %d/%d/%d per class)", len(jobs), spec.task,
                spec.num_classes, *counts)

    configs = [config for _, config in jobs]
    if workers > 1:
        with ThreadPool(workers) as pool:
            samples = list(tqdm(pool.imap(render_events, configs), total=len(configs), disable=not progress))
    else:
        samples = [render_events(c) for c in tqdm(configs, disable=not progress)]

    dataset = {split: [] for split in SPLITS}
    for (split, _), sample in zip(jobs, samples):
        dataset[split].append(sample)
    return dataset


def write_dataset(dataset, out_dir):
    """
    write <out_dir>/<split>/<sample_id>.evt and the manifest (one line per sample: path label split)

    :return: manifest path
    """
    out_dir = Path(out_dir)
    lines = []
    for split in SPLITS:
        split_dir = out_dir / split
        try:
            os.makedirs(split_dir, exist_ok=True)
        except OSError as e:
            raise EventIOError(split_dir, e.strerror or str(e)) from e
        for sample in dataset.get(split, []):
            path = split_dir / (sample.sample_id + ".evt")
            save_events(sample, path)
            lines.append("%s %d %s" % (path.relative_to(out_dir).as_posix(), sample.label, split))
    manifest = out_dir / MANIFEST_NAME
    try:
        manifest.write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise EventIOError(manifest, e.strerror or str(e)) from e
    return manifest


def read_manifest(path):
    """
    :return: list of (sample path, label, split), sample paths resolved against the manifest folder
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise EventIOError(path, e.strerror or str(e)) from e
    entries = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3 or fields[2] not in SPLITS:
            raise EventParseError("expected 'path label split'", offset=line_no, path=path)
        try:
            label = int(fields[1])
        except ValueError as e:
            raise EventParseError("label is not an integer", offset=line_no, path=path) from e
        entries.append((path.parent / fields[0], label, fields[2]))
    return entries


class EventDataset:
    """
    samples of one split listed in a manifest
    """

    def __init__(self, manifest, split):
        self.split = split
        self.samples = []
        for sample_path, label, entry_split in read_manifest(manifest):
            if entry_split != split:
                continue
            sample = load_events(sample_path)
            if sample.label is None:
                sample = type(sample)(sample.events, sample.geometry, label, sample.sample_id)
            self.samples.append(sample)
        logger.debug("loaded %d %s samples from %s", len(self.samples), split, manifest)

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, index):
        return self.samples[index]

    @property
    def num_classes(self):
        return max(s.label for s in self.samples) + 1 if self.samples else 0
