"""Command-line front end.

Subcommands: ``synth``, ``preprocess``, ``train``, ``eval``, ``baseline``,
``gradcheck``. Every run is deterministic given its flags and inputs, and
every output artifact is accompanied by (or embeds) the effective
configuration and the tool version. Report paths also render figures next
to the delimited outputs.

Exit codes: 0 success, 1 gradient-check failure, 2 usage or input error,
3 numeric failure, 4 file-format error.

Settings resolve as: command-line flag > config file (``--config``, simple
``key = value`` lines, ``#`` comments) > built-in default. The seed default
may also come from the ``FNWL_SEED`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    SYNTH_BAND_HZ,
    read_raw_csv,
    read_windows,
    synth_generate,
    write_windows,
)
from .errors import FormatError, NumericError
from .evaluation import build_report, confusion_matrix, write_confusion_csv
from .figures import nback_class_names, save_confusion_figure, save_training_curves
from .filters import design_butterworth_bandpass, filtfilt
from .model import (
    ModelConfig,
    build_model,
    load_weights,
    predict_in_batches,
    save_weights,
    sidecar_path,
)
from .training import TrainConfig, split_dataset, train
from .windows import (
    ChannelStats,
    RawRecording,
    WindowDataset,
    channel_stats,
    concat_datasets,
    segment_windows,
    standardize_channels,
)
from .baselines import BASELINES

USAGE_EXIT = 2
NUMERIC_EXIT = 3
FORMAT_EXIT = 4


def _default_seed() -> int:
    value = os.environ.get("FNWL_SEED")
    if value is None:
        return 0
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"FNWL_SEED must be an integer, got {value!r}") from None


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; later keys override earlier ones."""
    settings: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ValueError(f"{path}:{line_no}: expected 'key = value', got {line!r}")
        key, value = text.split("=", 1)
        settings[key.strip().replace("-", "_")] = value.strip()
    return settings


class _Resolver:
    """Merge flag values, config-file entries and defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file = read_config_file(args.config) if getattr(args, "config", None) else {}
        self.effective: dict = {}

    def get(self, key: str, default, cast=None):
        value = getattr(self.args, key, None)
        if value is None and key in self.file:
            raw = self.file[key]
            if cast is bool or isinstance(default, bool):
                value = raw.lower() in ("1", "true", "yes", "on")
            elif cast is not None:
                value = cast(raw)
            elif default is not None:
                value = type(default)(raw)
            else:
                value = raw
        if value is None:
            value = default
        self.effective[key] = value
        return value


def _write_sidecar(path, effective: dict) -> None:
    meta = {"config": effective, "tool_version": __version__}
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _standardize_with_fallback(dataset, stats):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return standardize_channels(dataset, stats)


# --- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    r = _Resolver(args)
    out = r.get("out", None, str)
    if out is None:
        raise ValueError("synth needs --out")
    n = r.get("n", 150, int)
    snr = r.get("snr", 10.0, float)
    seed = r.get("seed", _default_seed(), int)
    classes = r.get("classes", 4, int)
    window = r.get("window", 150, int)
    channels = r.get("channels", 8, int)
    fs = r.get("fs", 5.2, float)
    band_low = r.get("band_low", SYNTH_BAND_HZ[0], float)
    band_high = r.get("band_high", SYNTH_BAND_HZ[1], float)
    dataset = synth_generate(
        classes=classes, windows_per_class=n, window_len=window, channels=channels,
        seed=seed, snr_db=snr, sample_rate_hz=fs, band=(band_low, band_high),
    )
    write_windows(dataset, out)
    _write_sidecar(out, r.effective)
    print(f"wrote {len(dataset)} windows ({classes} classes x {n}) to {out}")
    return 0


def cmd_preprocess(args) -> int:
    r = _Resolver(args)
    inp = r.get("input", None, str)
    out = r.get("out", None, str)
    if inp is None or out is None:
        raise ValueError("preprocess needs --input and --out")
    low = r.get("low", 0.001, float)
    high = r.get("high", 0.2, float)
    order = r.get("order", 3, int)
    fs_override = r.get("fs", None, float)
    window_s = r.get("window_seconds", None, float)
    stride_s = r.get("stride_seconds", None, float)
    pure_only = r.get("pure_only", True)
    if low >= high:
        raise ValueError(f"--low ({low}) must be below --high ({high})")

    recordings = read_raw_csv(inp)
    parts = []
    for rec in recordings:
        fs = fs_override if fs_override is not None else rec.sample_rate_hz
        window = r.get("window", 150, int)
        stride = r.get("stride", 3, int)
        if window_s is not None:
            window = int(round(window_s * fs))
        if stride_s is not None:
            stride = int(round(stride_s * fs))
        filt = design_butterworth_bandpass(order, low, high, fs)
        filtered = RawRecording(
            subject_id=rec.subject_id,
            sample_rate_hz=fs,
            channels=filtfilt(filt, rec.channels),
            labels=rec.labels,
        )
        parts.append(segment_windows(filtered, window, stride, pure_only=pure_only))
    rates = {round(p.sample_rate_hz, 9) for p in parts}
    if len(rates) > 1:
        raise ValueError(f"recordings disagree on sample rate: {sorted(rates)}")
    dataset = concat_datasets(parts)
    write_windows(dataset, out)
    _write_sidecar(out, r.effective)
    print(f"wrote {len(dataset)} windows from {len(recordings)} subject(s) to {out}")
    return 0


def _load_and_split(r, data_path, seed):
    """Shared by train/baseline: read a windows file and split it."""
    dataset = read_windows(data_path)
    test_frac = r.get("test_frac", 0.2, float)
    split_mode = r.get("split_mode", "random", str)
    train_set, test_set = split_dataset(dataset, test_frac, seed, split_mode)
    return dataset, train_set, test_set


def cmd_train(args) -> int:
    r = _Resolver(args)
    data_path = r.get("data", None, str)
    out = r.get("out", None, str)
    if data_path is None or out is None:
        raise ValueError("train needs --data and --out")
    model_kind = r.get("model", "cnn-lstm", str)
    if model_kind not in ("cnn-lstm", "cnn"):
        raise ValueError(f"--model must be cnn-lstm or cnn, got {model_kind!r}")
    lstm_mode = r.get("lstm_mode", "flat", str)
    if lstm_mode not in ("flat", "seq"):
        raise ValueError(f"--lstm-mode must be flat or seq, got {lstm_mode!r}")
    epochs = r.get("epochs", 1000, int)
    lr = r.get("lr", 0.001, float)
    batch = r.get("batch", 64, int)
    seed = r.get("seed", _default_seed(), int)
    log_path = r.get("log", None, str)
    standardize = r.get("standardize", True)
    clip_norm = r.get("clip_norm", None, float)
    peephole = r.get("peephole", True)

    _, train_set, test_set = _load_and_split(r, data_path, seed)
    classes = r.get("classes", int(max(train_set.labels.max(), test_set.labels.max())) + 1, int)
    stats = None
    if standardize:
        stats = channel_stats(train_set)
        train_set = _standardize_with_fallback(train_set, stats)
        test_set = _standardize_with_fallback(test_set, stats)

    cfg = ModelConfig(
        input_channels=train_set.n_channels,
        input_length=train_set.window_length,
        classes=classes,
        lstm_input_mode="flat_single_step" if lstm_mode == "flat" else "sequence_T_by_32",
        variant="cnn_lstm" if model_kind == "cnn-lstm" else "cnn_only",
        peephole=peephole,
    ).validate()
    tcfg = TrainConfig(
        learning_rate=lr, epochs=epochs, batch_size=batch, seed=seed,
        clip_norm=clip_norm,
    ).validate()
    weights = build_model(cfg, seed)
    weights, log = train(weights, cfg, train_set, test_set, tcfg)

    extra = {"train": r.effective}
    if stats is not None:
        extra["standardize"] = stats.to_dict()
    save_weights(weights, cfg, out, extra_metadata=extra)
    if log_path:
        log.write_csv(log_path)
        _write_sidecar(log_path, r.effective)
        save_training_curves(log, str(Path(log_path).with_suffix(".png")))
    if log.records:
        last = log.records[-1]
        print(
            f"epoch {last.epoch}: train_acc={last.train_acc:.4f} "
            f"test_acc={last.test_acc:.4f} train_loss={last.train_loss:.6f}"
        )
    else:
        print("0 epochs requested: initial weights persisted, empty log")
    print(f"weights written to {out}")
    return 0


def report_artifact_paths(report_path) -> tuple[str, str]:
    """CSV and PNG companions that land next to a report JSON."""
    base = str(report_path)
    if base.endswith(".json"):
        base = base[: -len(".json")]
    return base + ".confusion.csv", base + ".confusion.png"


def _emit_report(report, report_path, class_names) -> None:
    report.write_json(report_path)
    csv_path, png_path = report_artifact_paths(report_path)
    write_confusion_csv(report.confusion, csv_path)
    save_confusion_figure(report.confusion, png_path, class_names)
    print(f"report: {report_path}\nconfusion: {csv_path}\nfigure: {png_path}")


def cmd_eval(args) -> int:
    r = _Resolver(args)
    data_path = r.get("data", None, str)
    weights_path = r.get("weights", None, str)
    report_path = r.get("report", None, str)
    if None in (data_path, weights_path, report_path):
        raise ValueError("eval needs --data, --weights and --report")
    weights, cfg, meta = load_weights(weights_path)
    dataset = read_windows(data_path)
    if meta.get("standardize"):
        dataset = _standardize_with_fallback(
            dataset, ChannelStats.from_dict(meta["standardize"])
        )
    logits = predict_in_batches(weights, cfg, dataset.windows)
    predicted = logits.argmax(axis=1)
    m = confusion_matrix(dataset.labels, predicted, cfg.classes)
    report = build_report(
        m, scores=logits, actual=dataset.labels,
        metadata={
            "model": "cnn_lstm" if cfg.variant == "cnn_lstm" else "cnn_only",
            "weights_file": str(weights_path),
            "dataset_file": str(data_path),
            "config": r.effective,
            "model_config": asdict(cfg),
            "tool_version": __version__,
        },
    )
    _emit_report(report, report_path, nback_class_names(cfg.classes))
    print(f"accuracy: {report.accuracy:.4f}")
    return 0


def cmd_baseline(args) -> int:
    r = _Resolver(args)
    data_path = r.get("data", None, str)
    report_path = r.get("report", None, str)
    algo = r.get("algo", None, str)
    if None in (data_path, report_path, algo):
        raise ValueError("baseline needs --data, --algo and --report")
    if algo not in BASELINES:
        raise ValueError(f"--algo must be one of {sorted(BASELINES)}, got {algo!r}")
    seed = r.get("seed", _default_seed(), int)
    k = r.get("k", 5, int)
    max_depth = r.get("max_depth", None, int)
    standardize = r.get("standardize", False)
    eval_on = r.get("eval_on", "test", str)
    if eval_on not in ("test", "train"):
        raise ValueError(f"--eval-on must be test or train, got {eval_on!r}")

    _, train_set, test_set = _load_and_split(r, data_path, seed)
    if standardize:
        stats = channel_stats(train_set)
        train_set = _standardize_with_fallback(train_set, stats)
        test_set = _standardize_with_fallback(test_set, stats)
    n_classes = int(max(train_set.labels.max(), test_set.labels.max())) + 1
    kwargs = {}
    if algo == "knn":
        kwargs["k"] = k
    elif algo == "tree":
        kwargs["max_depth"] = max_depth
    eval_set = train_set if eval_on == "train" else test_set
    predicted, scores = BASELINES[algo](
        train_set.flatten(), train_set.labels, eval_set.flatten(),
        n_classes=n_classes, **kwargs,
    )
    m = confusion_matrix(eval_set.labels, predicted, n_classes)
    report = build_report(
        m, scores=scores, actual=eval_set.labels,
        metadata={
            "model": algo,
            "dataset_file": str(data_path),
            "config": r.effective,
            "tool_version": __version__,
        },
    )
    _emit_report(report, report_path, nback_class_names(n_classes))
    print(f"accuracy: {report.accuracy:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_suite  # deferred: imports the whole model stack

    r = _Resolver(args)
    seed = r.get("seed", 42, int)
    tol = r.get("tol", 1e-6, float)
    model_tol = r.get("model_tol", 1e-4, float)
    entries = run_suite(seed, layer_tol=tol, model_tol=model_tol)
    failures = 0
    for entry in entries:
        status = "PASS" if entry.passed else "FAIL"
        print(
            f"{status} {entry.name}: max rel err {entry.report.max_rel_err:.3e} "
            f"(tol {entry.tol:g})"
        )
        if not entry.passed:
            failures += 1
            for check in entry.report.failures(entry.tol):
                print(
                    f"     {check.name}: rel err {check.max_rel_err:.3e} "
                    f"at index {check.worst_index}"
                )
    print(f"{len(entries) - failures}/{len(entries)} checks passed (seed {seed})")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fnwl",
        description="fNIRS cognitive-workload classification pipeline",
    )
    parser.add_argument("--version", action="version", version=f"fnwl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--seed", type=int, help="RNG seed (default: FNWL_SEED or 0)")

    p = sub.add_parser("synth", help="generate a synthetic windows file")
    add_common(p)
    p.add_argument("--out", help="output windows file")
    p.add_argument("--n", type=int, help="windows per class (default 150)")
    p.add_argument("--snr", type=float, help="per-window SNR in dB (default 10)")
    p.add_argument("--classes", type=int, help="number of classes (default 4)")
    p.add_argument("--window", type=int, help="window length in samples (default 150)")
    p.add_argument("--channels", type=int, help="channel count (default 8)")
    p.add_argument("--fs", type=float, help="sample rate in Hz (default 5.2)")
    p.add_argument("--band-low", type=float, dest="band_low")
    p.add_argument("--band-high", type=float, dest="band_high")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="raw CSV -> filtered, windowed dataset")
    add_common(p)
    p.add_argument("--input", help="raw recording CSV")
    p.add_argument("--out", help="output windows file")
    p.add_argument("--fs", type=float, help="override the inferred sample rate")
    p.add_argument("--low", type=float, help="bandpass low edge in Hz (default 0.001)")
    p.add_argument("--high", type=float, help="bandpass high edge in Hz (default 0.2)")
    p.add_argument("--order", type=int, help="filter order (default 3)")
    p.add_argument("--window", type=int, help="window length in samples (default 150)")
    p.add_argument("--stride", type=int, help="stride in samples (default 3)")
    p.add_argument("--window-seconds", type=float, dest="window_seconds")
    p.add_argument("--stride-seconds", type=float, dest="stride_seconds")
    p.add_argument(
        "--pure-only", action=argparse.BooleanOptionalAction, default=None,
        help="drop windows spanning a label change (default on)",
    )
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the network on a windows file")
    add_common(p)
    p.add_argument("--data", help="windows file")
    p.add_argument("--model", choices=["cnn-lstm", "cnn"], default=None)
    p.add_argument("--epochs", type=int, help="training epochs (default 1000)")
    p.add_argument("--lr", type=float, help="learning rate (default 0.001)")
    p.add_argument("--batch", type=int, help="batch size (default 64)")
    p.add_argument("--lstm-mode", choices=["flat", "seq"], dest="lstm_mode")
    p.add_argument("--out", help="output weights file")
    p.add_argument("--log", help="training-log CSV (a curves PNG lands next to it)")
    p.add_argument("--test-frac", type=float, dest="test_frac")
    p.add_argument("--split-mode", choices=["random", "by_subject"], dest="split_mode")
    p.add_argument("--classes", type=int)
    p.add_argument("--clip-norm", type=float, dest="clip_norm")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--peephole", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate saved weights on a windows file")
    add_common(p)
    p.add_argument("--data", help="windows file")
    p.add_argument("--weights", help="weights file from `fnwl train`")
    p.add_argument("--report", help="output report JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="run a classical classifier")
    add_common(p)
    p.add_argument("--data", help="windows file")
    p.add_argument("--algo", choices=sorted(BASELINES))
    p.add_argument("--k", type=int, help="k for k-NN (default 5)")
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--test-frac", type=float, dest="test_frac")
    p.add_argument("--split-mode", choices=["random", "by_subject"], dest="split_mode")
    p.add_argument("--report", help="output report JSON")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--eval-on", choices=["test", "train"], dest="eval_on",
                   help="score the held-out split (default) or the training split")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    add_common(p)
    p.add_argument("--tol", type=float, help="layer tolerance (default 1e-6)")
    p.add_argument("--model-tol", type=float, dest="model_tol",
                   help="full-model tolerance (default 1e-4)")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"fnwl: format error: {exc}", file=sys.stderr)
        return FORMAT_EXIT
    except NumericError as exc:
        print(f"fnwl: numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT
    except (ValueError, OSError) as exc:
        print(f"fnwl: error: {exc}", file=sys.stderr)
        return USAGE_EXIT


def entrypoint() -> None:
    raise SystemExit(main())
