import argparse
import logging
from pathlib import Path

import numpy as np

from aet_encoding.aet import MODES, MODE_ALIASES
from data_generation.utils import TASKS
from efn_training.train_efn import EVAL_MODES
from event_data.events import FORMATS
from speed_bench.bench import STAGES

"""
hyperparameters and settings which can be adapted
"""

logger = logging.getLogger(__name__)

COMMANDS = ("gen", "encode", "train", "eval", "bench", "viz")
TRUE_VALUES = ("1", "true", "yes", "on")
FALSE_VALUES = ("0", "false", "no", "off")


def int_list(text):
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated integers, got '%s'" % text)


def float_list(text):
    try:
        return [float(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated numbers, got '%s'" % text)


def add_common_args(parser):
    parser.add_argument('--config', type=str, default=None)  # key=value file which pre-fills the flags
    parser.add_argument('--seed', '--random_seed', dest='seed', type=int, default=0)
    parser.add_argument('--workers', type=int, default=1)
    parser.add_argument('--verbose', action='store_true')
    parser.add_argument('--no_progress', '--no-progress', dest='no_progress', action='store_true')
    parser.add_argument('--path_log', type=str, default=None)  # timestamped run folders with logfile.txt


def add_encoder_args(parser):
    ### AET ENCODER
    parser.add_argument('--mhat', type=int, default=100)
    parser.add_argument('--groups', type=int_list, default="2,5")
    parser.add_argument('--kernel', type=int, default=5)
    parser.add_argument('--channels', type=int_list, default="1,4,3")
    parser.add_argument('--mode', type=str, default="aet", choices=list(MODES) + list(MODE_ALIASES))
    parser.add_argument('--split_polarity', '--split-polarity', dest='split_polarity', action='store_true')
    parser.add_argument('--weights', type=str, default=None)  # EFNW file with stages.<i>.weight/bias


def add_network_args(parser):
    ### EVENT FRAME NET
    parser.add_argument('--feature_dim', type=int, default=64)
    parser.add_argument('--widths', type=int_list, default="16,32,64")
    parser.add_argument('--k1', type=int, default=5)
    parser.add_argument('--k2', type=int, default=3)
    parser.add_argument('--pool_size', type=int, default=2)
    parser.add_argument('--shared_frame_classifier', '--shared-frame-classifier', dest='shared_frame_classifier',
                        action='store_true')


def add_task_args(parser):
    ### DATA GENERATION
    parser.add_argument('--task', type=str, default="static-shapes", choices=TASKS)
    parser.add_argument('--per_class', '--per-class', dest='per_class', type=int, default=20)
    parser.add_argument('--split', type=float_list, default="0.6,0.2,0.2")
    parser.add_argument('--width', type=int, default=32)
    parser.add_argument('--height', type=int, default=32)
    parser.add_argument('--duration_us', type=int, default=100000)
    parser.add_argument('--frame_rate', type=float, default=1000.0)  # virtual frames per second
    parser.add_argument('--noise_rate', type=float, default=1.0)  # events per pixel per second
    parser.add_argument('--num_directions', type=int, default=2, choices=[2, 4])


def build_parser():
    parser = argparse.ArgumentParser(prog="cli", description="AET event encoding and event frame net classification")
    subparsers = parser.add_subparsers(dest='command', required=True)

    # gen
    gen = subparsers.add_parser('gen', help="render a synthetic dataset")
    add_common_args(gen)
    add_task_args(gen)
    gen.add_argument('--out', type=str, default="data/dataset/")

    # encode
    enc = subparsers.add_parser('encode', help="encode event files into AETF tensors")
    add_common_args(enc)
    add_encoder_args(enc)
    enc.add_argument('--input', type=str, required=True)  # event file or manifest.txt
    enc.add_argument('--format', type=str, default="binary", choices=FORMATS)
    enc.add_argument('--width', type=int, default=None)  # csv geometry
    enc.add_argument('--height', type=int, default=None)
    enc.add_argument('--label', type=int, default=None)
    enc.add_argument('--slice', action='store_true')  # sliding windows before encoding
    enc.add_argument('--window_us', type=int, default=750000)
    enc.add_argument('--step_us', type=int, default=100000)
    enc.add_argument('--out', type=str, default="data/aet/")

    # train
    tr = subparsers.add_parser('train', help="train the network on a generated dataset")
    add_common_args(tr)
    add_encoder_args(tr)
    add_network_args(tr)
    tr.add_argument('--manifest', type=str, required=True)
    tr.add_argument('--epochs', type=int, default=30)
    tr.add_argument('--batch_size', type=int, default=8)
    tr.add_argument('--learning_rate', type=float, default=1e-4)
    tr.add_argument('--warmup_frac', type=float, default=0.1)
    tr.add_argument('--checkpoint', type=str, default="data/trained_nn/efn.efnw")
    tr.add_argument('--plot_loss', action='store_true')
    tr.add_argument('--path_plot_loss', type=str, default="plots/losscurves/")

    # eval
    ev = subparsers.add_parser('eval', help="evaluate a checkpoint")
    add_common_args(ev)
    ev.add_argument('--manifest', type=str, required=True)
    ev.add_argument('--checkpoint', type=str, required=True)
    ev.add_argument('--mode', type=str, default="synthesis", choices=EVAL_MODES)
    ev.add_argument('--split', type=str, default="test", choices=["train", "val", "test"])
    ev.add_argument('--batch_size', type=int, default=8)
    ev.add_argument('--report', type=str, default=None)
    ev.add_argument('--summary', type=str, default=None)

    # bench
    be = subparsers.add_parser('bench', help="measure latency and throughput")
    add_common_args(be)
    add_encoder_args(be)
    be.add_argument('--manifest', type=str, default=None)  # samples of the test split, synthetic if unset
    be.add_argument('--checkpoint', type=str, default=None)  # needed for the full stage
    be.add_argument('--stage', type=str, default="encode-only", choices=list(STAGES) + ["both"])
    be.add_argument('--eval_mode', type=str, default="synthesis", choices=EVAL_MODES)
    be.add_argument('--num_samples', type=int, default=20)
    be.add_argument('--num_events', type=int, default=10000)
    be.add_argument('--width', type=int, default=64)
    be.add_argument('--height', type=int, default=64)
    be.add_argument('--warmup', type=int, default=3)
    be.add_argument('--scaling', action='store_true')
    be.add_argument('--scaling_counts', type=int_list, default="10000,100000")
    be.add_argument('--repeats', type=int, default=5)
    be.add_argument('--summary', type=str, default=None)
    be.add_argument('--path_plot_scaling', type=str, default=None)

    # viz
    vi = subparsers.add_parser('viz', help="export AETF frames as PPM images")
    add_common_args(vi)
    vi.add_argument('--input', type=str, required=True)
    vi.add_argument('--out', type=str, default="plots/aet_frames/")
    return parser, subparsers


def read_config_file(path):
    """
    key=value lines, '#' starts a comment, keys may carry leading dashes and use '-' or '_'
    """
    values = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError("%s:%d: expected key=value" % (path, line_no))
        key, value = line.split("=", 1)
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def apply_config_file(parser, subparser, path):
    """
    turn the config values into parser defaults so that explicit flags win
    """
    try:
        values = read_config_file(path)
    except (OSError, ValueError) as e:
        parser.error("cannot read config file: %s" % e)
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in values.items():
        if key not in actions or key in ("config", "help"):
            parser.error("config file %s: unknown setting '%s'" % (path, key))
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in TRUE_VALUES + FALSE_VALUES:
                parser.error("config file %s: '%s' needs a boolean, got '%s'" % (path, key, value))
            defaults[key] = value.lower() in TRUE_VALUES
        else:
            if action.choices is not None and value not in [str(c) for c in action.choices]:
                parser.error("config file %s: invalid choice '%s' for '%s'" % (path, value, key))
            defaults[key] = value
            action.required = False
    subparser.set_defaults(**defaults)


def validate_args(parser, args):
    """
    reject invalid settings before any work starts
    """
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    if args.command in ("encode", "train", "bench"):
        if args.mhat < 1:
            parser.error("--mhat must be >= 1")
        if not args.groups or any(g < 1 for g in args.groups):
            parser.error("--groups must be positive integers")
        if len(args.channels) != len(args.groups) + 1:
            parser.error("--channels needs %d entries for %d stages" % (len(args.groups) + 1, len(args.groups)))
        if any(c < 1 for c in args.channels):
            parser.error("--channels must be positive")
        if args.kernel < 1 or args.kernel % 2 == 0:
            parser.error("--kernel must be a positive odd number")
        if args.mhat % int(np.prod(args.groups)) != 0:
            parser.error("product of --groups %s must divide --mhat %d" % (args.groups, args.mhat))
    if args.command == "gen":
        if len(args.split) != 3 or any(f < 0 for f in args.split) or abs(sum(args.split) - 1) > 1e-6:
            parser.error("--split needs 3 non-negative fractions summing to 1")
        if args.per_class * min(args.split) < 1:
            parser.error("--per_class %d leaves an empty split" % args.per_class)
        if args.width < 1 or args.height < 1 or args.duration_us < 1 or args.noise_rate < 0:
            parser.error("geometry and duration must be positive, noise rate non-negative")
    if args.command == "encode":
        if args.format == "csv" and (args.width is None or args.height is None):
            parser.error("csv input needs --width and --height")
        if args.window_us <= 0 or args.step_us <= 0:
            parser.error("--window_us and --step_us must be positive")
    if args.command == "train":
        if args.epochs < 1 or args.batch_size < 1:
            parser.error("--epochs and --batch_size must be >= 1")
        if args.learning_rate <= 0 or not 0 <= args.warmup_frac < 1:
            parser.error("--learning_rate must be positive and --warmup_frac in [0, 1)")
        num_frames = args.mhat // int(np.prod(args.groups))
        if (num_frames - args.k1 + 1 - args.k2 + 1) // max(args.pool_size, 1) < 1 or args.pool_size < 1:
            parser.error("video branch with --k1 %d --k2 %d --pool_size %d does not fit %d frames"
                         % (args.k1, args.k2, args.pool_size, num_frames))
    if args.command == "eval" and args.batch_size < 1:
        parser.error("--batch_size must be >= 1")
    if args.command == "bench":
        if args.stage in ("full", "both") and args.checkpoint is None:
            parser.error("--stage %s needs --checkpoint" % args.stage)
        if args.num_samples < 10:
            parser.error("--num_samples must be >= 10")
        if args.scaling and any(b <= a for a, b in zip(args.scaling_counts, args.scaling_counts[1:])):
            parser.error("--scaling_counts must be increasing")


def parse_args(argv=None):
    parser, subparsers = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('command', nargs='?')
    pre.add_argument('--config', type=str, default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is not None and known.command in subparsers.choices:
        apply_config_file(parser, subparsers.choices[known.command], known.config)

    args = parser.parse_args(argv)
    validate_args(parser, args)
    # derived settings
    args.log_level = logging.DEBUG if args.verbose else logging.INFO
    args.progress = not args.no_progress
    if hasattr(args, "mode") and args.command in ("encode", "train", "bench"):
        args.mode = MODE_ALIASES.get(args.mode, args.mode)
    return args
