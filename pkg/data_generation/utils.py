import copy
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import List, Tuple

from event_data.errors import ConfigError


class Configurable(object):
    """
        This class is a container for a configuration dictionary.
        It allows to provide a default_config function with pre-filled configuration.
        When provided with an input configuration, the default one will recursively be updated.
    """
    def __init__(self, config=None):
        self.config = self.default_config()
        if config:
            Configurable.rec_update(self.config, copy.deepcopy(config))

    def update_config(self, config):
        Configurable.rec_update(self.config, config)

    @classmethod
    def default_config(cls):
        """
            Override this function to provide the default configuration of the child class
        :return: a configuration dictionary
        """
        return {}

    @staticmethod
    def rec_update(d, u):
        """
            Recursive update of a mapping
        :param d: a mapping
        :param u: a mapping
        :return: d updated recursively with u
        """
        for k, v in u.items():
            if isinstance(v, Mapping):
                d[k] = Configurable.rec_update(d.get(k, {}), v)
            else:
                d[k] = v
        return d


TASKS = ("static-shapes", "direction", "temporal-order")


@dataclass
class TaskSpec:
    """
    classification task: one scene template per class
    """
    task: str
    classes: List[dict]
    samples_per_class: int = 10
    split: Tuple[float, float, float] = (0.6, 0.2, 0.2)
    names: List[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ConfigError("a task needs at least 2 classes, got %d" % len(self.classes))
        if len(self.split) != 3 or any(f < 0 for f in self.split) or abs(sum(self.split) - 1) > 1e-6:
            raise ConfigError("split fractions must be 3 non-negative values summing to 1, got %s" % (self.split,))
        if self.samples_per_class * min(self.split) < 1:
            raise ConfigError("%d samples per class leave an empty split with fractions %s"
                              % (self.samples_per_class, self.split))
        if not self.names:
            self.names = ["class%d" % i for i in range(len(self.classes))]

    @property
    def num_classes(self):
        return len(self.classes)

    def split_counts(self):
        """
        per-class sample counts of train/val/test
        """
        n_train = int(round(self.samples_per_class * self.split[0]))
        n_val = int(round(self.samples_per_class * self.split[1]))
        return n_train, n_val, self.samples_per_class - n_train - n_val


def task_templates(task, width=32, height=32, duration_us=100000, frame_rate=1000.0, noise_rate=1.0,
                   num_directions=2):
    """
    scene templates of the synthetic tasks

    :return: class names, list of scene config dicts
    """
    base = dict(geometry=dict(width=width, height=height), duration_us=duration_us, frame_rate=frame_rate,
                noise_rate=noise_rate)
    speed = 0.5 * min(width, height) / (duration_us * 1e-6)
    if task == "static-shapes":
        names = ["disc", "square", "bar"]
        # the object switches on after the first virtual frame, so every accumulated frame holds its silhouette
        onset_us = int(round(1e6 / frame_rate))
        classes = [dict(shape=s, onset_us=onset_us, motion=dict(kind="static-jitter")) for s in names]
    elif task == "direction":
        velocities = {"right": (speed, 0.0), "left": (-speed, 0.0), "down": (0.0, speed), "up": (0.0, -speed)}
        if num_directions not in (2, 4):
            raise ConfigError("direction task supports 2 or 4 classes, got %d" % num_directions)
        names = list(velocities)[:num_directions]
        classes = [dict(shape="disc", motion=dict(kind="translate", vx=velocities[n][0], vy=velocities[n][1]))
                   for n in names]
    elif task == "temporal-order":
        names = ["A-then-B", "B-then-A"]
        classes = [dict(shape="flash-pair", motion=dict(kind="temporal-order", order=n)) for n in names]
    else:
        raise ConfigError("unknown task '%s', choose from %s" % (task, ", ".join(TASKS)))
    templates = []
    for cls in classes:
        config = copy.deepcopy(base)
        Configurable.rec_update(config, cls)
        templates.append(config)
    return names, templates


def make_task_spec(task, samples_per_class=10, split=(0.6, 0.2, 0.2), **kwargs):
    names, templates = task_templates(task, **kwargs)
    return TaskSpec(task, templates, samples_per_class, tuple(split), names)
