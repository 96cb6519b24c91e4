import logging
from multiprocessing.pool import ThreadPool

import numpy as np
from tqdm import tqdm

from aet_encoding.aet import EncoderConfig, encoder_input
from event_data.errors import ConfigError
from nn_micro.tensor import ValueTensor

logger = logging.getLogger(__name__)


class VoxelDataset:
    """
    labeled samples with their encoder input (frames x C x H x W) computed once
    """

    def __init__(self, samples, cfg: EncoderConfig, workers=1, progress=False):
        if len(samples) == 0:
            raise ConfigError("dataset is empty")
        if any(s.label is None for s in samples):
            raise ConfigError("all samples need a label")
        self.cfg = cfg
        self.sample_ids = [s.sample_id for s in samples]
        self.labels = np.array([s.label for s in samples], dtype=np.int64)
        self.num_events = np.array([len(s) for s in samples], dtype=np.int64)
        if workers > 1:
            with ThreadPool(workers) as pool:
                voxels = list(tqdm(pool.imap(lambda s: encoder_input(s, cfg), samples), total=len(samples),
                                   disable=not progress))
        else:
            voxels = [encoder_input(s, cfg) for s in tqdm(samples, disable=not progress)]
        self.voxels = np.stack(voxels).astype(np.float32)
        logger.debug("cached voxels %s for %d samples", self.voxels.shape[1:], len(samples))

    def __len__(self):
        return self.labels.shape[0]

    def batch(self, indices):
        return ValueTensor(self.voxels[indices]), self.labels[indices]


def predict_logits(model, dataset: VoxelDataset, batch_size=8, workers=1):
    """
    logits of every classifier for every sample, N x P x K; batches run on a thread pool when workers > 1
    """
    model.eval()
    starts = list(range(0, len(dataset), batch_size))

    def run(start):
        x, _ = dataset.batch(np.arange(start, min(start + batch_size, len(dataset))))
        return model(x).data

    if workers > 1:
        with ThreadPool(workers) as pool:
            parts = pool.map(run, starts)
    else:
        parts = [run(s) for s in starts]
    model.train()
    return np.concatenate(parts, axis=0)


def confusion_matrix(labels, predicted, num_classes):
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (labels, predicted), 1)
    return matrix


def listDict2dictList(list_dict):
    """
    transform a list of dictionaries into a dictionary of lists
    """
    dict_list = {}
    for d in list_dict:
        for key, value in d.items():
            dict_list.setdefault(key, []).append(value)
    return dict_list
