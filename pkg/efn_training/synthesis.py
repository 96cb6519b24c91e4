from dataclasses import dataclass

import numpy as np

from event_data.errors import ConfigError, ShapeError

"""
prediction averaging and accuracy-weighted synthesis of the classifier logits
"""


@dataclass
class AccuracyMatrix:
    """
    values[p, q]: validation accuracy of classifier p among the samples it predicted as class q
    support[p, q]: number of these samples, overall[p]: validation accuracy of classifier p
    """
    values: np.ndarray
    support: np.ndarray
    overall: np.ndarray

    @property
    def num_classifiers(self):
        return self.values.shape[0]

    @property
    def num_classes(self):
        return self.values.shape[1]

    @classmethod
    def uniform(cls, num_classifiers, num_classes, value=1.0):
        return cls(np.full((num_classifiers, num_classes), value), np.zeros((num_classifiers, num_classes), dtype=np.int64),
                   np.full(num_classifiers, value))

    def state_dict(self):
        return {"synthesis.acc": self.values, "synthesis.support": self.support, "synthesis.overall": self.overall}

    @classmethod
    def from_state(cls, state):
        return cls(np.asarray(state["synthesis.acc"], dtype=np.float64),
                   np.asarray(state["synthesis.support"]).astype(np.int64),
                   np.asarray(state["synthesis.overall"], dtype=np.float64))


def average_predictions(preds):
    """
    mean of the classifier logits, preds is P x K or N x P x K
    """
    preds = np.asarray(preds)
    if preds.ndim < 2 or preds.shape[-2] == 0:
        raise ShapeError("need at least one classifier, got shape %s" % (preds.shape,))
    return preds.mean(axis=-2)


def accuracy_matrix_from_logits(logits, labels):
    """
    :param logits:  N x P x K predictions of every classifier on the validation set
    :param labels:  N true classes
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 3 or logits.shape[0] == 0:
        raise ConfigError("accuracy matrix needs a non-empty validation set")
    if labels.shape != (logits.shape[0],):
        raise ShapeError("%d labels for %d samples" % (labels.shape[0], logits.shape[0]))
    n, p, k = logits.shape
    predicted = logits.argmax(axis=-1)  # N x P
    correct = predicted == labels[:, None]
    support = np.zeros((p, k), dtype=np.int64)
    hits = np.zeros((p, k), dtype=np.int64)
    for cls in range(k):
        chosen = predicted == cls
        support[:, cls] = chosen.sum(axis=0)
        hits[:, cls] = (chosen & correct).sum(axis=0)
    overall = correct.mean(axis=0)
    values = np.where(support > 0, hits / np.maximum(support, 1), overall[:, None])
    return AccuracyMatrix(values, support, overall)


def synthesize(preds, acc: AccuracyMatrix, classifiers=None):
    """
    out = sum_p Acc(p, argmax(l_p)) * l_p

    :param preds:       P x K or N x P x K logits
    :param acc:         accuracy matrix with P rows
    :param classifiers: optional indices of the classifiers which contribute
    """
    preds = np.asarray(preds, dtype=np.float64)
    if preds.ndim < 2 or preds.shape[-2:] != acc.values.shape:
        raise ShapeError("predictions of shape %s do not match the accuracy matrix %s"
                         % (preds.shape, acc.values.shape))
    rows = np.arange(acc.num_classifiers)
    weights = acc.values[rows, preds.argmax(axis=-1)]  # (N x) P
    if classifiers is not None:
        mask = np.zeros(acc.num_classifiers, dtype=bool)
        mask[np.asarray(classifiers)] = True
        weights = weights * mask
    return (weights[..., None] * preds).sum(axis=-2)
