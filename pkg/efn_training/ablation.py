import argparse
import logging

from aet_encoding.aet import MODES
from efn_training.branch_separation import train_on_task
from efn_training.train_efn import evaluate
from event_data.utils import initialize_logging
from speed_bench.bench import format_table

"""
encoder ablation: the same network trained on every encoder mode

python -m efn_training.ablation --task direction
"""

logger = logging.getLogger(__name__)


def run_ablation(task="direction", modes=MODES, settings=None, **kwargs):
    """
    :return: one row per encoder mode with the synthesis test accuracy
    """
    rows = []
    for mode in modes:
        logger.info("ablation: encoder mode %s", mode)
        model, acc, test_set, result = train_on_task(task, dict(settings or {}, mode=mode), **kwargs)
        report = evaluate(model, acc, test_set, "synthesis")
        rows.append(dict(mode=mode, input_shape="x".join(map(str, test_set.voxels.shape[1:])),
                         frames=model.efn_cfg.num_frames, accuracy=report['accuracy'], best_epoch=result.best_epoch))
    return rows


if __name__ == "__main__":
    parser = argparse.ArgumentParser("Compare the encoder modes on one synthetic task")
    parser.add_argument("--task", type=str, default="direction")
    parser.add_argument("--modes", type=str, default=",".join(MODES))
    parser.add_argument("--per_class", type=int, default=100)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    initialize_logging(None)

    rows = run_ablation(args.task, args.modes.split(","), dict(seed=args.seed), per_class=args.per_class,
                        epochs=args.epochs, workers=args.workers, progress=True)
    print(format_table(rows, ["mode", "input_shape", "frames", "accuracy", "best_epoch"]), end="")
    accuracy = {r['mode']: r['accuracy'] for r in rows}
    if "aet" in accuracy and "quantize-only" in accuracy:
        print("aet >= quantize-only: %s" % ("PASS" if accuracy["aet"] >= accuracy["quantize-only"] else "FAIL"))
