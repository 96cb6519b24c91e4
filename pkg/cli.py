import argparse
import logging
import os
import sys
import time
from pathlib import Path

from aet_encoding.aet import EncoderConfig, encode_batch
from aet_encoding.tensor_io import load_tensor, save_tensor
from data_generation.create_dataset import MANIFEST_NAME, EventDataset, make_dataset, write_dataset
from data_generation.utils import make_task_spec
from efn_training.model import MODEL_KEYS, model_from_settings, settings_to_strings
from efn_training.train_efn import evaluate, format_report, load_model, save_model, train, write_report
from efn_training.utils import VoxelDataset, listDict2dictList
from event_data.errors import AETError, ConfigError, EventIOError
from event_data.events import SensorGeometry, load_events, window_slice
from event_data.utils import initialize_logging
from hyperparams import parse_args
from nn_micro.checkpoint import load_args, load_checkpoint, save_args
from plots.plot_functions import export_aet_frames, plot_losscurves, plot_scaling
from speed_bench.bench import (PAPER_REFERENCE, bench_pipeline, dataset_statistics, format_table,
                               make_uniform_sample, scaling_check, write_summary)

"""
command line entry point: gen, encode, train, eval, bench and viz

python cli.py gen --task direction --per_class 20 --out data/direction/
python cli.py train --manifest data/direction/manifest.txt --mhat 20 --groups 2,2 --channels 1,4,3 --k1 3 --k2 2
python cli.py eval --manifest data/direction/manifest.txt --checkpoint data/trained_nn/efn.efnw --mode synthesis
"""

logger = logging.getLogger(__name__)


def _makedirs(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise EventIOError(path, e.strerror or str(e)) from e


def model_settings(args, num_classes):
    """
    everything needed to rebuild the model, as strings
    """
    values = {key: getattr(args, key) for key in MODEL_KEYS if key != "num_classes"}
    values["num_classes"] = num_classes
    return settings_to_strings(values)


def restore_model(checkpoint):
    """
    rebuild the model from the settings file next to the checkpoint and load its parameters

    :return: model, accuracy matrix
    """
    if not Path(checkpoint).exists():
        raise EventIOError(checkpoint, "checkpoint not found")
    settings = load_args(checkpoint)
    if not settings:
        raise ConfigError("checkpoint %s has no settings file %s.args" % (checkpoint, checkpoint))
    model = model_from_settings(settings)
    acc = load_model(model, checkpoint)
    return model, acc


def encoder_from_args(args):
    cfg = EncoderConfig.build(m_hat=args.mhat, groups=args.groups, channels=args.channels, kernel=args.kernel,
                              mode=args.mode, split_polarity=args.split_polarity, seed=args.seed)
    if args.weights is not None:
        state = load_checkpoint(args.weights)
        prefix = "encoder." if "encoder.stages.0.weight" in state else ""
        cfg = cfg.with_weights(state, prefix)
        logger.info("loaded stage weights from %s", args.weights)
    return cfg


def cmd_gen(args):
    spec = make_task_spec(args.task, args.per_class, args.split, width=args.width, height=args.height,
                          duration_us=args.duration_us, frame_rate=args.frame_rate, noise_rate=args.noise_rate,
                          num_directions=args.num_directions)
    dataset = make_dataset(spec, seed=args.seed, workers=args.workers, progress=args.progress)
    manifest = write_dataset(dataset, args.out)
    stats = dataset_statistics([s for samples in dataset.values() for s in samples])
    logger.info("classes: %s", ", ".join(spec.names))
    logger.info("%d samples, %.3f kEv mean, %.3f s mean length, %.1f kEv/s mean rate", stats['num_samples'],
                stats['mean_kev'], stats['mean_length_s'], stats['mean_kev_s'])
    print(manifest)
    return 0


def cmd_encode(args):
    cfg = encoder_from_args(args)
    source = Path(args.input)
    if source.name == MANIFEST_NAME:
        samples = [s for split in ("train", "val", "test") for s in EventDataset(source, split).samples]
    else:
        geometry = SensorGeometry(args.width, args.height) if args.width is not None else None
        samples = [load_events(source, args.format, geometry, args.label, source.stem)]
    if args.slice:
        samples = [w for sample in samples for w in window_slice(sample, args.window_us, args.step_us)]
    if not samples:
        raise ConfigError("nothing to encode in %s" % source)

    _makedirs(args.out)
    t0 = time.perf_counter()
    tensors = encode_batch(samples, cfg, workers=args.workers, progress=args.progress)
    elapsed = time.perf_counter() - t0
    for sample, aet in zip(samples, tensors):
        path = Path(args.out) / (sample.sample_id + ".aetf")
        save_tensor(aet.values, path)
        logger.debug("%s: %d events -> %s", sample.sample_id, len(sample), aet.values.shape)
    logger.info("encoded %d samples to %s in %.3f s, tensor shape %s", len(samples), args.out, elapsed,
                tensors[0].values.shape)
    return 0


def cmd_train(args):
    train_samples = EventDataset(args.manifest, "train")
    val_samples = EventDataset(args.manifest, "val")
    if len(train_samples) == 0 or len(val_samples) == 0:
        raise ConfigError("manifest %s needs train and val samples" % args.manifest)
    num_classes = max(train_samples.num_classes, val_samples.num_classes)
    settings = model_settings(args, num_classes)
    model = model_from_settings(settings)
    if args.weights is not None and model.encoder.cfg.uses_stages:
        # start the compression stages from stored weights
        for module, stage in zip(model.encoder.stages, encoder_from_args(args).stages):
            module.weight.data[...] = stage.weight
            module.bias.data[...] = stage.bias
    cfg = model.encoder.cfg
    logger.info("encoder %s, M^=%d, M*=%d, %d channels; %d classes", cfg.mode, cfg.m_hat, cfg.num_frames,
                cfg.channels, num_classes)

    train_set = VoxelDataset(train_samples.samples, cfg, args.workers, args.progress)
    val_set = VoxelDataset(val_samples.samples, cfg, args.workers, args.progress)
    result = train(model, train_set, val_set, args.epochs, base_lr=args.learning_rate, batch_size=args.batch_size,
                   warmup_frac=args.warmup_frac, seed=args.seed, progress=args.progress, workers=args.workers)

    _makedirs(Path(args.checkpoint).parent)
    save_model(model, result.acc_matrix, args.checkpoint)
    try:
        save_args(argparse.Namespace(**settings), args.checkpoint)
    except OSError as e:
        raise EventIOError(args.checkpoint + ".args", e.strerror or str(e)) from e
    logger.info("saved checkpoint %s (best epoch %d, val acc %.3f)", args.checkpoint, result.best_epoch,
                result.best_val_acc)

    test_samples = EventDataset(args.manifest, "test")
    if len(test_samples):
        report = evaluate(model, result.acc_matrix, VoxelDataset(test_samples.samples, cfg, args.workers),
                          "synthesis", args.batch_size, args.workers)
        logger.info("test accuracy (synthesis): %.3f", report['accuracy'])
    if args.plot_loss:
        path = plot_losscurves(listDict2dictList(result.history), "efn", args.path_plot_loss)
        logger.info("loss curves saved to %s", path)
    return 0


def cmd_eval(args):
    model, acc = restore_model(args.checkpoint)
    samples = EventDataset(args.manifest, args.split)
    if len(samples) == 0:
        raise ConfigError("manifest %s has no %s samples" % (args.manifest, args.split))
    dataset = VoxelDataset(samples.samples, model.encoder.cfg, args.workers, args.progress)
    report = evaluate(model, acc, dataset, args.mode, args.batch_size, args.workers)
    print(format_report(report), end="")
    if args.report is not None or args.summary is not None:
        write_report(report, args.report, args.summary)
    return 0


def cmd_bench(args):
    model, acc = None, None
    if args.checkpoint is not None:
        model, acc = restore_model(args.checkpoint)
        cfg = model.encoder_config()
    else:
        cfg = encoder_from_args(args)
    if args.manifest is not None:
        samples = EventDataset(args.manifest, "test").samples
    else:
        geometry = SensorGeometry(args.width, args.height)
        samples = [make_uniform_sample(args.num_events, geometry, seed=args.seed + i) for i in range(args.num_samples)]
    model_eval = model.eval() if model is not None else None

    stages = ["encode-only", "full"] if args.stage == "both" else [args.stage]
    reports = [bench_pipeline(samples, model_eval, cfg, stage, acc, args.warmup, args.eval_mode) for stage in stages]
    rows = [r.summary() for r in reports]
    print(format_table(rows, ["stage", "num_samples", "total_events", "mean_ms", "median_ms", "p95_ms",
                              "throughput_kev_s", "doubling_factor", "fingerprint"]), end="")
    print("reference (GPU): %.2f ms latency, %.2f kEv/s" % (PAPER_REFERENCE['latency_ms'],
                                                            PAPER_REFERENCE['throughput_kev_s']))
    values = {}
    for row in rows:
        values.update({"%s.%s" % (row['stage'], k): v for k, v in row.items() if k != "stage"})

    if args.scaling:
        geometry = samples[0].geometry
        scaling = scaling_check(args.scaling_counts, cfg, geometry, args.repeats, seed=args.seed)
        print(format_table(scaling, ["num_events", "mean_ms", "median_ms", "cv", "ratio"]), end="")
        for row in scaling:
            values["scaling.%d.median_ms" % row['num_events']] = row['median_ms']
            values["scaling.%d.ratio" % row['num_events']] = row['ratio']
        if args.path_plot_scaling is not None:
            plot_scaling(scaling, cfg.mode, args.path_plot_scaling)
    if args.summary is not None:
        write_summary(values, args.summary)
    return 0


def cmd_viz(args):
    values = load_tensor(args.input)
    if values.ndim != 4:
        raise ConfigError("%s holds a tensor of shape %s, expected C x M* x H x W" % (args.input, values.shape))
    paths = export_aet_frames(values, args.out, prefix=Path(args.input).stem)
    logger.info("wrote %d frames to %s", len(paths), args.out)
    return 0


COMMANDS = dict(gen=cmd_gen, encode=cmd_encode, train=cmd_train, eval=cmd_eval, bench=cmd_bench, viz=cmd_viz)


def main(argv=None):
    """
    :return: exit status, 0 on success, 1 on runtime errors, 2 on invalid usage
    """
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else (0 if e.code is None else 2)
    initialize_logging(args.path_log, args.log_level, args.command)
    try:
        return COMMANDS[args.command](args)
    except (AETError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
