"""
Command-line entry point: ``ssagan {synth,train,eval,gradcheck,plot,sweep}``.

Every option can also come from a ``key=value`` file given with ``--config``
(keys are the long flag names with ``_`` for ``-``); flags win over the file.
The merged settings are echoed to ``<out>/run.cfg`` (``<out>/<command>.cfg``
for eval, plot and gradcheck).

Exit codes: 0 success, 1 usage, 2 validation/format, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys
import time
from dataclasses import dataclass

from . import layers
from .checkpoint import checkpoint_load
from .dataset import SynthSpec, read_dataset, read_keyvalue, read_predictions, synth_generate, write_predictions
from .errors import (ConfigurationError, FormatError, IncompatibleCheckpointError, NumericalError,
                     UsageError)
from .metrics import REPORT_COLUMNS, evaluate, mean_row, report_csv, report_table
from .plot import write_timeline
from .training import VARIANTS, TrainConfig, detections_from_predictions, infer_labels, train_epochs
from .verify import gradcheck_suite

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    if isinstance(text, tuple):
        return text
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _floats(text):
    if isinstance(text, tuple):
        return text
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def parse_epochs(text):
    """``N`` splits 1:3 into two learning-rate phases; ``a,b`` gives them directly."""
    vals = _ints(text)
    if len(vals) == 1:
        n = vals[0]
        return (n // 4, n - n // 4)
    return vals


@dataclass(frozen=True)
class Opt:
    key: str
    type: object = str
    default: object = None
    help: str = ""
    required: bool = False
    flag: bool = False  # store_true switch

    @property
    def dest_flag(self):
        return "--" + self.key.replace("_", "-")


_TRAIN_OPTS = [
    Opt("data", help="dataset directory", required=True),
    Opt("out", help="run directory", required=True),
    Opt("variant", default="ssa-gan", help="one of: " + ", ".join(VARIANTS)),
    Opt("lambda_c", float, 100.0, "classification weight"),
    Opt("m", int, 16, "context queue length"),
    Opt("epochs", parse_epochs, (20, 60), "total epochs N (split 1:3) or 'a,b' per phase"),
    Opt("lr", float, 2e-3, "initial learning rate"),
    Opt("lr_decay", float, 0.1, "learning-rate factor of the second phase"),
    Opt("beta1", float, 0.5),
    Opt("beta2", float, 0.999),
    Opt("batch_size", int, 32),
    Opt("seed", int, 0),
    Opt("noise_mode", default="concat", help="concat or dropout"),
    Opt("noise_dim", int, 16),
    Opt("d", int, None, "context width (defaults to the encoder output width)"),
    Opt("enc_widths", _ints, None, "comma-separated encoder widths"),
    Opt("fusion_width", int, 64),
    Opt("trunk_width", int, 64),
    Opt("gate_mode", default="scalar", help="scalar or vector gates"),
    Opt("classifier_input", default="joint", help="joint or frame"),
]

_TRAIN_KEYS = ("variant", "lambda_c", "m", "epochs", "lr", "lr_decay", "beta1", "beta2", "batch_size",
               "seed", "noise_mode", "noise_dim", "d", "enc_widths", "fusion_width", "trunk_width",
               "gate_mode", "classifier_input")

COMMANDS = {
    "synth": [
        Opt("out", help="output dataset directory", required=True),
        Opt("classes", int, 5, "number of action classes (background is extra)"),
        Opt("videos", int, 25),
        Opt("frames", int, 300, "frames per video"),
        Opt("seed", int, 7),
        Opt("feature_dim", int, 16),
        Opt("separation", float, 4.0, "norm of each class mean"),
        Opt("noise", float, 1.0, "per-frame noise standard deviation"),
        Opt("bg_prob", float, 0.3, "probability of a background gap before a segment"),
        Opt("bg_min", int, 2),
        Opt("bg_max", int, 8),
        Opt("seg_min", int, None, "shortest segment (default 10, or 5 with --history-dependence)"),
        Opt("seg_max", int, None, "longest segment (default 40, or 15 with --history-dependence)"),
        Opt("history_dependence", _bool, False, "make the last two actions emission-identical", flag=True),
        Opt("test_videos", int, None, "test split size (default videos // 5)"),
        Opt("val_videos", int, 0),
    ],
    "train": _TRAIN_OPTS + [
        Opt("resume", help="checkpoint to continue from"),
        Opt("quiet", _bool, False, "no per-epoch output", flag=True),
    ],
    "eval": [
        Opt("data", help="dataset directory", required=True),
        Opt("out", help="run directory (predictions/, metrics.csv)", required=True),
        Opt("checkpoint", help="default: <out>/checkpoint.bin"),
        Opt("split", default="test"),
        Opt("from_predictions", help="directory of <video>.csv predictions; no model is run"),
        Opt("infer_seed", int, 0),
        Opt("include_background", _bool, False, flag=True),
        Opt("plots", _bool, False, "also write plots/<video>.svg", flag=True),
    ],
    "gradcheck": [
        Opt("tolerance", float, 1e-4),
        Opt("h", float, 1e-4, "finite-difference step"),
        Opt("seed", int, 0),
        Opt("inject_fault", help="corrupt a primitive's backward rule (negative control): sigmoid"),
        Opt("out", help="optional directory for the echoed config"),
    ],
    "plot": [
        Opt("data", help="dataset directory", required=True),
        Opt("predictions", help="prediction file or directory", required=True),
        Opt("out", help="output directory (writes plots/)", required=True),
        Opt("split", default="test"),
        Opt("px_per_frame", float, 2.0),
    ],
    "sweep": [o for o in _TRAIN_OPTS if o.key not in ("m", "lambda_c")] + [
        Opt("m_values", _ints, (0, 4, 16)),
        Opt("lambda_values", _floats, (1.0, 10.0, 100.0)),
        Opt("infer_seed", int, 0),
    ],
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="ssagan", description="Adversarial frame-wise action segmentation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value settings file (flags override it)")
        for o in opts:
            if o.flag:
                p.add_argument(o.dest_flag, dest=o.key, action="store_const", const=True, default=None,
                               help=o.help)
            else:
                p.add_argument(o.dest_flag, dest=o.key, default=None, help=o.help)
    return parser


def resolve(command, args):
    """Defaults, then --config file, then flags; converts types and checks required keys."""
    opts = {o.key: o for o in COMMANDS[command]}
    values = {k: o.default for k, o in opts.items()}
    raw = {}
    if args.config:
        file_values = read_keyvalue(args.config)
        unknown = sorted(set(file_values) - set(opts) - {"command"})
        if unknown:
            raise UsageError(f"{args.config}: unknown keys {unknown} for '{command}'")
        raw.update({k: v for k, v in file_values.items() if k in opts})
    raw.update({k: getattr(args, k) for k in opts if getattr(args, k) is not None})
    for k, v in raw.items():
        try:
            values[k] = opts[k].type(v)
        except ValueError as exc:
            raise UsageError(f"--{k.replace('_', '-')}: {exc}") from None
    missing = [opts[k].dest_flag for k in opts if opts[k].required and values[k] is None]
    if missing:
        raise UsageError(f"{command}: missing required {', '.join(missing)}")
    return values


def _format_value(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return "" if v is None else str(v)


def echo_config(directory, command, values):
    """Write the merged settings; eval/plot/gradcheck use their own file so a run's run.cfg survives."""
    os.makedirs(directory, exist_ok=True)
    name = "run.cfg" if command in ("synth", "train", "sweep") else f"{command}.cfg"
    lines = [f"command={command}"] + [f"{k}={_format_value(v)}" for k, v in values.items() if v is not None]
    with open(os.path.join(directory, name), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def train_config_from(values, **overrides):
    if values["variant"] not in VARIANTS:
        raise UsageError(f"unknown variant {values['variant']!r}; valid: {', '.join(VARIANTS)}")
    kw = {k: values[k] for k in _TRAIN_KEYS if k in values}
    kw.update(overrides)
    return TrainConfig(**kw)


# -- commands --------------------------------------------------------------------


def cmd_synth(values, out=print):
    defaults = (5, 15) if values["history_dependence"] else (10, 40)
    seg = (values["seg_min"] or defaults[0], values["seg_max"] or defaults[1])
    spec = SynthSpec(
        n_actions=values["classes"], feature_dim=values["feature_dim"], separation=values["separation"],
        noise_scale=values["noise"], bg_prob=values["bg_prob"], bg_duration=(values["bg_min"], values["bg_max"]),
        seg_duration=seg, history_dependence=values["history_dependence"], seed=values["seed"])
    data = synth_generate(spec, values["videos"], values["frames"], out_dir=values["out"],
                          n_test=values["test_videos"], n_val=values["val_videos"])
    echo_config(values["out"], "synth", values)
    sizes = {s: len(data.manifest.splits[s]) for s in data.manifest.splits}
    out(f"wrote {len(data.videos)} videos (k={data.manifest.k}, splits {sizes}) to {values['out']}")
    return EXIT_OK


def cmd_train(values, out=print):
    config = train_config_from(values)
    data = read_dataset(values["data"])
    echo_config(values["out"], "train", values)

    def progress(epoch, d, g, lr):
        if not values["quiet"]:
            out(f"epoch {epoch:4d}  d_loss {d:.4f}  g_loss {g:.4f}  lr {lr:g}")

    start = time.perf_counter()
    train_epochs(data, config, out_dir=values["out"], resume=values["resume"], progress=progress)
    out(f"trained {config.variant} for {config.total_epochs} epochs in {time.perf_counter() - start:.1f}s; "
        f"checkpoint at {os.path.join(values['out'], 'checkpoint.bin')}")
    return EXIT_OK


def evaluate_split(data, split, predictions, include_background=False):
    """Metric rows {video: metrics} from {video: (labels, probs)}."""
    rows = {}
    for seq in data.split(split):
        labels, probs = predictions[seq.video_id]
        dets = detections_from_predictions(labels, probs, include_background)
        rows[seq.video_id] = evaluate(labels, seq.labels, dets, include_background)
    return rows


def _load_prediction_dir(directory, videos):
    preds = {}
    for vid in videos:
        path = os.path.join(directory, f"{vid}.csv")
        if not os.path.exists(path):
            raise FormatError("prediction file missing", path)
        preds[vid] = read_predictions(path)
    return preds


def cmd_eval(values, out=print):
    data = read_dataset(values["data"])
    run = values["out"]
    split = values["split"]
    if split not in data.manifest.splits:
        raise UsageError(f"unknown split {split!r}")
    videos = [s.video_id for s in data.split(split)]
    if not videos:
        raise ConfigurationError(f"split {split!r} of {values['data']} is empty")
    echo_config(run, "eval", values)
    if values["from_predictions"]:
        preds = _load_prediction_dir(values["from_predictions"], videos)
    else:
        ckpt_path = values["checkpoint"] or os.path.join(run, "checkpoint.bin")
        if not os.path.exists(ckpt_path):
            raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
        model = checkpoint_load(ckpt_path).model
        if model.config.k != data.manifest.k:
            raise IncompatibleCheckpointError(
                f"checkpoint has k={model.config.k}, dataset has k={data.manifest.k}")
        preds = {seq.video_id: infer_labels(seq, model, seed=values["infer_seed"]) for seq in data.split(split)}
        os.makedirs(os.path.join(run, "predictions"), exist_ok=True)
        for vid, (labels, probs) in preds.items():
            write_predictions(os.path.join(run, "predictions", f"{vid}.csv"), labels, probs)
    for vid, (labels, _) in preds.items():
        if labels.shape[0] != len(data.videos[vid]):
            raise FormatError(f"{labels.shape[0]} predicted frames for a {len(data.videos[vid])}-frame video",
                              vid)
    rows = evaluate_split(data, split, preds, values["include_background"])
    with open(os.path.join(run, "metrics.csv"), "w") as fh:
        fh.write(report_csv(rows))
    if values["plots"]:
        _write_plots(data, split, preds, os.path.join(run, "plots"))
    out(report_table(rows))
    return EXIT_OK


def cmd_gradcheck(values, out=print):
    if values["out"]:
        echo_config(values["out"], "gradcheck", values)
    fault = values["inject_fault"]
    if fault is not None and fault != "sigmoid":
        raise UsageError(f"unknown fault {fault!r}; available: sigmoid")
    if fault:
        layers.inject_fault(fault)
    try:
        start = time.perf_counter()
        results = gradcheck_suite(tol=values["tolerance"], h=values["h"], seed=values["seed"])
    finally:
        if fault:
            layers.inject_fault(fault, enabled=False)
    failed = 0
    for name, rep in results:
        status = "PASS" if rep.passed else "FAIL"
        failed += not rep.passed
        out(f"{status}  {name:<20} max rel err {rep.max_relative_error:.3e}  ({rep.n_coords} coords)")
    out(f"{len(results) - failed}/{len(results)} checks passed at tolerance {values['tolerance']:g} "
        f"in {time.perf_counter() - start:.1f}s")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def _write_plots(data, split, preds, directory, px_per_frame=2.0):
    os.makedirs(directory, exist_ok=True)
    names = data.manifest.class_names
    paths = []
    for seq in data.split(split):
        if seq.video_id not in preds:
            continue
        path = os.path.join(directory, f"{seq.video_id}.svg")
        write_timeline(path, seq.labels, preds[seq.video_id][0], data.manifest.k, names,
                       px_per_frame=px_per_frame, title=seq.video_id)
        paths.append(path)
    return paths


def cmd_plot(values, out=print):
    data = read_dataset(values["data"])
    src = values["predictions"]
    if os.path.isdir(src):
        videos = [s.video_id for s in data.split(values["split"])]
        preds = _load_prediction_dir(src, videos)
    else:
        vid = os.path.splitext(os.path.basename(src))[0]
        if vid not in data.videos:
            raise FormatError(f"no video {vid!r} in {values['data']}", src)
        preds = {vid: read_predictions(src)}
        values = dict(values, split=next(s for s, ids in data.manifest.splits.items() if vid in ids))
    echo_config(values["out"], "plot", values)
    paths = _write_plots(data, values["split"], preds, os.path.join(values["out"], "plots"),
                         values["px_per_frame"])
    out(f"wrote {len(paths)} plot(s) to {os.path.join(values['out'], 'plots')}")
    return EXIT_OK


def cmd_sweep(values, out=print):
    base = values["out"]
    data = read_dataset(values["data"])
    if not data.manifest.splits["test"]:
        raise ConfigurationError(f"split 'test' of {values['data']} is empty")
    echo_config(base, "sweep", values)
    lines = ["m,lambda_c," + ",".join(REPORT_COLUMNS)]
    for m, lam in itertools.product(values["m_values"], values["lambda_values"]):
        config = train_config_from(values, m=m, lambda_c=lam)
        run = os.path.join(base, f"m{m}_lambda{lam:g}")
        model, _ = train_epochs(data, config, out_dir=run)
        preds = {s.video_id: infer_labels(s, model, seed=values["infer_seed"]) for s in data.split("test")}
        rows = evaluate_split(data, "test", preds)
        with open(os.path.join(run, "metrics.csv"), "w") as fh:
            fh.write(report_csv(rows))
        mean = mean_row(rows)
        lines.append(f"{m},{lam:g}," + ",".join(f"{mean[c]:.4f}" for c in REPORT_COLUMNS))
        out(f"m={m} lambda_c={lam:g}  accuracy {mean['accuracy']:.1f}  f1@10 {mean['f1@10']:.1f}")
    with open(os.path.join(base, "sweep.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_OK


HANDLERS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
            "plot": cmd_plot, "sweep": cmd_sweep}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        values = resolve(args.command, args)
        return HANDLERS[args.command](values)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FormatError, ConfigurationError, IncompatibleCheckpointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
