import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np
from tqdm import tqdm

from efn_training.synthesis import AccuracyMatrix, accuracy_matrix_from_logits, average_predictions, synthesize
from efn_training.utils import VoxelDataset, confusion_matrix, predict_logits
from event_data.errors import ConfigError, EventIOError
from nn_micro import functional as F
from nn_micro.checkpoint import load_checkpoint, save_checkpoint
from nn_micro.optim import Adam, cosine_warmup_lr
from nn_micro.tensor import Tape

logger = logging.getLogger(__name__)

EVAL_MODES = ("synthesis", "average", "frame-only", "video-only")


@dataclass
class TrainResult:
    best_state: dict
    best_epoch: int
    best_val_acc: float
    acc_matrix: AccuracyMatrix
    history: List[dict] = field(default_factory=list)


def compute_accuracy_matrix(model, dataset: VoxelDataset, batch_size=8, workers=1):
    """
    per-(classifier, predicted class) accuracy of the model on a validation set
    """
    if len(dataset) == 0:
        raise ConfigError("accuracy matrix needs a non-empty validation set")
    return accuracy_matrix_from_logits(predict_logits(model, dataset, batch_size, workers), dataset.labels)


def train(model, train_set: VoxelDataset, val_set: VoxelDataset, epochs, base_lr=1e-4, batch_size=8,
          warmup_frac=0.1, seed=0, progress=False, workers=1):
    """
    train on the averaged logits of all classifiers and keep the parameters with the best validation accuracy

    :param model:       AetEfn
    :param epochs:      number of passes over the training set
    :param base_lr:     peak learning rate of the cosine schedule
    :param seed:        seed of the batch order
    :return: TrainResult, the model holds the best parameters afterwards
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ConfigError("training and validation sets must not be empty")
    if epochs < 1:
        raise ConfigError("epochs must be >= 1, got %d" % epochs)
    rng = np.random.default_rng(seed)
    optimizer = Adam(model.parameters(), lr=base_lr)
    steps_per_epoch = (len(train_set) + batch_size - 1) // batch_size
    total_steps = epochs * steps_per_epoch
    step = 0
    best_acc, best_epoch, best_state = -1.0, -1, None
    history = []

    for epoch in range(epochs):
        order = rng.permutation(len(train_set))
        total_loss = 0.0
        for start in tqdm(range(0, len(order), batch_size), disable=not progress, desc="epoch %d" % epoch):
            x, labels = train_set.batch(order[start:start + batch_size])
            with Tape() as tape:
                logits = model(x)
                loss = F.softmax_cross_entropy(F.mean(logits, axis=1), labels)
                tape.backward(loss)
            step += 1
            optimizer.step(lr=cosine_warmup_lr(step, total_steps, base_lr, warmup_frac))
            optimizer.zero_grad()
            total_loss += float(loss.data) * len(labels)

        val_logits = predict_logits(model, val_set, batch_size, workers)
        val_acc = float(np.mean(average_predictions(val_logits).argmax(axis=-1) == val_set.labels))
        train_loss = total_loss / len(train_set)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_acc": val_acc})
        logger.info("Epoch %d, Train loss: %.4f, Val acc: %.3f", epoch, train_loss, val_acc)
        if val_acc > best_acc:
            best_acc, best_epoch, best_state = val_acc, epoch, model.state_dict()

    model.load_state_dict(best_state)
    acc_matrix = compute_accuracy_matrix(model, val_set, batch_size, workers)
    logger.info("Best epoch %d with val acc %.3f", best_epoch, best_acc)
    return TrainResult(best_state, best_epoch, best_acc, acc_matrix, history)


def classifier_subset(mode, num_classifiers):
    """
    indices of the classifiers used by an evaluation mode (frame classifiers first, video classifier last)
    """
    if mode in ("synthesis", "average"):
        return np.arange(num_classifiers)
    if mode == "frame-only":
        return np.arange(num_classifiers - 1)
    if mode == "video-only":
        return np.array([num_classifiers - 1])
    raise ConfigError("unknown evaluation mode '%s', choose from %s" % (mode, ", ".join(EVAL_MODES)))


def combine_logits(logits, acc: AccuracyMatrix, mode):
    """
    final N x K prediction of an evaluation mode
    """
    classifiers = classifier_subset(mode, logits.shape[1])
    if mode == "average":
        return average_predictions(logits)
    return synthesize(logits, acc, classifiers)


def evaluate(model, acc: AccuracyMatrix, dataset: VoxelDataset, mode="synthesis", batch_size=8, workers=1):
    """
    :return: report dict with accuracy, per-class accuracy and confusion matrix
    """
    if len(dataset) == 0:
        raise ConfigError("evaluation set is empty")
    classifier_subset(mode, acc.num_classifiers)
    logits = predict_logits(model, dataset, batch_size, workers)
    predicted = combine_logits(logits, acc, mode).argmax(axis=-1)
    num_classes = acc.num_classes
    matrix = confusion_matrix(dataset.labels, predicted, num_classes)
    per_class = np.array([matrix[q, q] / matrix[q].sum() if matrix[q].sum() else 0.0 for q in range(num_classes)])
    report = dict(mode=mode, num_samples=len(dataset), accuracy=float(np.trace(matrix) / matrix.sum()),
                  per_class_acc=per_class, confusion=matrix)
    logger.info("Evaluation (%s): accuracy %.3f on %d samples", mode, report['accuracy'], len(dataset))
    return report


def format_report(report, class_names=None):
    num_classes = report['confusion'].shape[0]
    names = class_names or [str(q) for q in range(num_classes)]
    lines = ["mode: %s" % report['mode'],
             "samples: %d" % report['num_samples'],
             "accuracy: %.4f" % report['accuracy'],
             "per-class accuracy:"]
    lines += ["  %-12s %.4f" % (names[q], report['per_class_acc'][q]) for q in range(num_classes)]
    lines.append("confusion matrix (rows: true, columns: predicted):")
    lines += ["  " + " ".join("%5d" % v for v in row) for row in report['confusion']]
    return "\n".join(lines) + "\n"


def write_report(report, path=None, summary_path=None, class_names=None):
    """
    text report and/or key=value summary
    """
    try:
        if path is not None:
            Path(path).write_text(format_report(report, class_names))
        if summary_path is not None:
            lines = ["mode=%s" % report['mode'], "accuracy=%.6f" % report['accuracy']]
            lines += ["per_class_acc_%d=%.6f" % (q, v) for q, v in enumerate(report['per_class_acc'])]
            Path(summary_path).write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise EventIOError(e.filename or path, e.strerror or str(e)) from e


def save_model(model, acc: AccuracyMatrix, path):
    state = dict(model.state_dict())
    state.update(acc.state_dict())
    save_checkpoint(state, path)


def load_model(model, path):
    """
    load parameters and accuracy matrix from an EFNW checkpoint

    :return: AccuracyMatrix
    """
    state = load_checkpoint(path)
    acc = AccuracyMatrix.from_state(state) if "synthesis.acc" in state else None
    model.load_state_dict({k: v for k, v in state.items() if not k.startswith("synthesis.")})
    if acc is None:
        cfg = model.efn_cfg
        logger.warning("checkpoint %s has no accuracy matrix, using uniform weights", path)
        acc = AccuracyMatrix.uniform(cfg.num_classifiers, cfg.num_classes)
    return acc
