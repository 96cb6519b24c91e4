import os
from datetime import datetime
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from event_data.errors import EventIOError, ShapeError

### settings
plt.rcParams['legend.fontsize'] = 12
plt.rc('axes', titlesize=14)
plt.rc('axes', labelsize=14)
plt.rc('xtick', labelsize=11)
plt.rc('ytick', labelsize=11)

###colors
MITRed = (163/256, 31/256, 52/256)
TUMBlue = "#0065BD"
TUMGray = "#808080"


"""
functions to generate plots and frame images
"""


def _save(path_plot, filename, name, kind, include_date):
    if filename is None:
        filename = "%sCurve_%s.jpg" % (kind, name)
        if include_date:
            filename = datetime.now().strftime("%Y-%m-%d-%H-%M-%S") + "_" + filename
    os.makedirs(path_plot, exist_ok=True)
    path = os.path.join(path_plot, filename)
    plt.savefig(path)
    return path


def plot_losscurves(history, name, path_plot, save=True, show=False, filename=None, include_date=False):
    """
    training loss and validation accuracy over the epochs

    :param history:     dict of lists with keys "train_loss" and "val_acc"
    :return: path of the saved figure (None if not saved)
    """
    fig, ax_loss = plt.subplots(figsize=(8, 4.5))
    ax_loss.plot(history['train_loss'], color=MITRed, linestyle='-', label="loss (training)")
    ax_loss.set_ylabel("Loss")
    ax_loss.set_xlabel("Epochs")
    ax_loss.grid()
    ax_acc = ax_loss.twinx()
    ax_acc.plot(history['val_acc'], color=TUMBlue, linestyle=':', label="accuracy (validation)")
    ax_acc.set_ylabel("Accuracy")
    ax_acc.set_ylim(0, 1.05)
    handles = ax_loss.get_legend_handles_labels()[0] + ax_acc.get_legend_handles_labels()[0]
    ax_loss.legend(handles, [h.get_label() for h in handles], loc='center right')
    fig.tight_layout()
    path = _save(path_plot, filename, name, "loss", include_date) if save else None
    if show:
        plt.show()
    plt.close(fig)
    return path


def plot_scaling(rows, name, path_plot, save=True, show=False, filename=None, include_date=False):
    """
    encode time over the number of events (log-log)

    :param rows:    list of dicts with keys "num_events" and "median_ms"
    """
    fig = plt.figure(figsize=(6, 4.5))
    n = [r['num_events'] for r in rows]
    plt.loglog(n, [r['median_ms'] for r in rows], color=TUMBlue, marker='o', label="encode (median)")
    if len(n) > 1:
        ref = rows[0]['median_ms'] * np.asarray(n) / n[0]
        plt.loglog(n, ref, color=TUMGray, linestyle=':', label="linear")
    plt.xlabel("Events per sample")
    plt.ylabel("Time [ms]")
    plt.grid()
    plt.legend()
    plt.tight_layout()
    path = _save(path_plot, filename, name, "scaling", include_date) if save else None
    if show:
        plt.show()
    plt.close(fig)
    return path


def frame_to_rgb(frame):
    """
    C x H x W frame to H x W x 3 uint8: one channel is replicated, two channels give (c0, c1, c1), three are used
    directly and more channels are averaged in three consecutive groups; min-max normalized, a constant frame is black
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3:
        raise ShapeError("expected a C x H x W frame, got shape %s" % (frame.shape,))
    c = frame.shape[0]
    if c == 1:
        rgb = np.repeat(frame, 3, axis=0)
    elif c == 2:
        rgb = frame[[0, 1, 1]]
    elif c == 3:
        rgb = frame
    else:
        rgb = np.stack([g.mean(axis=0) for g in np.array_split(frame, 3, axis=0)])
    lo, hi = rgb.min(), rgb.max()
    if hi == lo:
        scaled = np.zeros_like(rgb)
    else:
        scaled = (rgb - lo) / (hi - lo) * 255
    return np.ascontiguousarray(np.round(scaled).astype(np.uint8).transpose(1, 2, 0))


def export_aet_frames(values, out_dir, prefix="frame"):
    """
    one PPM image per frame of a C x M* x H x W tensor

    :return: list of written paths
    """
    values = np.asarray(values)
    if values.ndim != 4:
        raise ShapeError("expected a C x M* x H x W tensor, got shape %s" % (values.shape,))
    out_dir = Path(out_dir)
    paths = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        for m in range(values.shape[1]):
            path = out_dir / ("%s_%03d.ppm" % (prefix, m))
            Image.fromarray(frame_to_rgb(values[:, m])).save(path, format="PPM")
            paths.append(path)
    except OSError as e:
        raise EventIOError(e.filename or out_dir, e.strerror or str(e)) from e
    return paths
