import argparse
import logging

from data_generation.create_dataset import make_dataset
from data_generation.utils import make_task_spec
from efn_training.model import model_from_settings
from efn_training.train_efn import EVAL_MODES, evaluate, train
from efn_training.utils import VoxelDataset
from event_data.utils import initialize_logging
from speed_bench.bench import format_table

"""
train on one synthetic task and evaluate the same checkpoint with every classifier subset

python -m efn_training.branch_separation --tasks temporal-order,static-shapes
"""

logger = logging.getLogger(__name__)

# 32x32 sensor, M^=20 bins compressed to M*=10 frames, video branch 10 -> 6 -> 4 -> 2 -> 1
DEFAULT_SETTINGS = dict(mhat=20, groups=[2], channels=[1, 3], kernel=5, mode="aet", split_polarity=False,
                        feature_dim=32, widths=[8, 16, 32], k1=5, k2=3, pool_size=2, shared_frame_classifier=False,
                        seed=0)


def train_on_task(task, settings=None, per_class=150, split=(2 / 3, 1 / 6, 1 / 6), epochs=30, base_lr=1e-3,
                  batch_size=8, workers=1, progress=False, **task_kwargs):
    """
    render a task, train a model on it and return everything needed for evaluation

    :param settings:    model settings (see DEFAULT_SETTINGS), num_classes is filled in from the task
    :return: model, accuracy matrix, test VoxelDataset, training result
    """
    settings = dict(DEFAULT_SETTINGS, **(settings or {}))
    spec = make_task_spec(task, per_class, split, **task_kwargs)
    dataset = make_dataset(spec, seed=int(settings["seed"]), workers=workers, progress=progress)
    model = model_from_settings(dict(settings, num_classes=spec.num_classes))
    cfg = model.encoder.cfg
    train_set = VoxelDataset(dataset["train"], cfg, workers)
    val_set = VoxelDataset(dataset["val"], cfg, workers)
    test_set = VoxelDataset(dataset["test"], cfg, workers)
    result = train(model, train_set, val_set, epochs, base_lr=base_lr, batch_size=batch_size,
                   seed=int(settings["seed"]), progress=progress, workers=workers)
    return model, result.acc_matrix, test_set, result


def branch_separation(task, settings=None, modes=EVAL_MODES, **kwargs):
    """
    :return: one row per evaluation mode with the test accuracy
    """
    model, acc, test_set, result = train_on_task(task, settings, **kwargs)
    rows = []
    for mode in modes:
        report = evaluate(model, acc, test_set, mode)
        rows.append(dict(task=task, mode=mode, accuracy=report['accuracy'], best_epoch=result.best_epoch))
    return rows


# (task, mode) -> (">=" or "<=", bound)
THRESHOLDS = {("temporal-order", "synthesis"): (">=", 0.9),
              ("temporal-order", "frame-only"): ("<=", 0.7),
              ("static-shapes", "frame-only"): (">=", 0.9)}


def check_thresholds(rows, thresholds=THRESHOLDS):
    """
    compare the rows of branch_separation with the expected accuracy bounds

    :return: one row per bound found in rows, with a "passed" flag
    """
    checks = []
    for row in rows:
        key = (row['task'], row['mode'])
        if key not in thresholds:
            continue
        op, bound = thresholds[key]
        passed = row['accuracy'] >= bound if op == ">=" else row['accuracy'] <= bound
        checks.append(dict(task=row['task'], mode=row['mode'], accuracy=row['accuracy'], bound="%s %.2f" % (op, bound),
                           passed=passed))
    return checks


if __name__ == "__main__":
    parser = argparse.ArgumentParser("Frame branch versus video branch on the synthetic tasks")
    parser.add_argument("--tasks", type=str, default="temporal-order,static-shapes")
    parser.add_argument("--per_class", type=int, default=150)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--learning_rate", type=float, default=1e-3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    initialize_logging(None)

    rows = []
    for task in args.tasks.split(","):
        rows += branch_separation(task, dict(seed=args.seed), per_class=args.per_class, epochs=args.epochs,
                                  base_lr=args.learning_rate, workers=args.workers, progress=True)
    print(format_table(rows, ["task", "mode", "accuracy", "best_epoch"]), end="")
    checks = check_thresholds(rows)
    print(format_table(checks, ["task", "mode", "accuracy", "bound", "passed"]), end="")
    print("PASS" if all(c['passed'] for c in checks) else "FAIL")
