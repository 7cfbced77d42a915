"""Command-line interface.

Exit codes: 0 success, 2 configuration/layout error, 3 data error,
4 checkpoint error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import neuralnet as nn
from .errors import ConfigError, DataError, S2PError
from .metrics import compute_report, energy_share
from .powerdata import (
    DEFAULT_MAX_GAP,
    DEFAULT_PERIOD,
    ChannelLayout,
    load_dataset_config,
    load_house_pairs,
    parse_channel_file,
    resample,
    split_on_gaps,
)
from .seq2point import (
    ApplianceSpec,
    TrainConfig,
    build_model,
    extract_features,
    mains_windows,
    predict,
    synthesize_household,
    train,
)
from .transfer import atl_transfer, ctl_apply, ctl_finetune, load_checkpoint, save_checkpoint
from .windowing import DEFAULT_WINDOW, WindowBatch, load_norm_config, make_training_pairs, params_for

log = logging.getLogger("s2pnilm")

DEFAULT_SYNTH = {
    "length": 100000,
    "noise_std": 30.0,
    "period": DEFAULT_PERIOD,
    "start": 0,
    "appliances": [
        {"name": "target", "on_power": 1000.0, "mean_on_duration": 20, "duty_cycle": 0.1},
        {"name": "fridge", "on_power": 150.0, "mean_on_duration": 60, "duty_cycle": 0.4},
        {"name": "heater", "on_power": 2000.0, "mean_on_duration": 40, "duty_cycle": 0.05},
    ],
}


# -- shared helpers -------------------------------------------------------------

def _train_config(args):
    return TrainConfig(max_epochs=args.max_epochs, batch_size=args.batch_size,
                       min_epochs=min(args.min_epochs, args.max_epochs),
                       patience=args.patience, seed=args.seed,
                       learning_rate=args.learning_rate)


def _load_arch(path):
    if path is None:
        return None
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read architecture file {path}: {exc}") from None
    return [nn.LayerSpec.from_dict(d) for d in raw]


def _pairs(cfg, houses, appliance, args):
    pairs = []
    for h in houses:
        pairs += load_house_pairs(cfg, h, appliance, period=args.period, max_gap=args.max_gap)
    return pairs


def _batches(pairs, window, mp, ap):
    if not pairs:
        raise DataError("no data for the requested split")
    return WindowBatch.concat([make_training_pairs(p, window, mp, ap) for p in pairs])


def _read_mains(args, period, max_gap):
    layout = ChannelLayout(timestamp=args.timestamp_col, power=(args.mains_col,),
                           time_format=args.time_format, period=args.source_period or period)
    try:
        raw = Path(args.mains).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.mains}: {exc}") from None
    series = parse_channel_file(raw, layout)[0]
    series = resample(series, period, max_gap)
    return split_on_gaps(series, max_gap)


def _write_series_csv(path, segments, header=("timestamp", "watts")):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for seg in segments:
            for t, v in zip(seg.timestamps.tolist(), seg.values.tolist()):
                w.writerow([t, repr(v)])


def _evaluate_model(model, cfg, houses, args, apply=predict):
    """List of (prediction, truth) segments over the given houses."""
    segments = [(apply(model, pair.mains), pair.appliance)
                for pair in _pairs(cfg, houses, model.appliance, args)]
    if not segments:
        raise DataError(f"no test data for {model.appliance}")
    return segments


def _write_reports(results, args):
    report = compute_report(results)
    report.to_csv(args.out)
    if getattr(args, "energy_share", None):
        energy_share({k: [p for p, _ in v] for k, v in results.items()},
                     {k: [t for _, t in v] for k, v in results.items()}).to_csv(args.energy_share)
    return report


# -- subcommands ----------------------------------------------------------------

def cmd_synth(args):
    cfg = dict(DEFAULT_SYNTH)
    if args.config:
        try:
            cfg.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read synth config {args.config}: {exc}") from None
    if args.length:
        cfg["length"] = args.length
    try:
        specs = [ApplianceSpec(**a) for a in cfg["appliances"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad appliance entry: {exc}") from None
    mains, parts = synthesize_household(specs, float(cfg["noise_std"]), int(cfg["length"]),
                                        args.seed, int(cfg.get("period", DEFAULT_PERIOD)),
                                        int(cfg.get("start", 0)))
    names = [s.name for s in specs]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "mains", *names])
        cols = [mains.values] + [parts[n].values for n in names]
        for i, t in enumerate(mains.timestamps.tolist()):
            w.writerow([t, *(repr(float(c[i])) for c in cols)])
    return 0


def cmd_train(args):
    cfg = load_dataset_config(args.dataset)
    norms = load_norm_config(args.norm_config)
    mp, ap = params_for("aggregate", norms), params_for(args.appliance, norms)
    split = cfg.split_for(args.appliance)
    train_b = _batches(_pairs(cfg, split.train, args.appliance, args), args.window, mp, ap)
    val_b = _batches(_pairs(cfg, split.validation, args.appliance, args), args.window, mp, ap)
    model = build_model(args.window, mp, ap, _load_arch(args.arch), seed=args.seed,
                        appliance=args.appliance, period=args.period)
    model, hist = train(model, train_b, val_b, _train_config(args))
    save_checkpoint(model, args.out)
    if args.history:
        hist.to_csv(args.history)
    print(f"trained {args.appliance}: best epoch {hist.best_epoch} of {hist.stopped_epoch}")
    return 0


def cmd_predict(args):
    model = load_checkpoint(args.checkpoint)
    segments = _read_mains(args, model.period, args.max_gap)
    _write_series_csv(args.out, [predict(model, s) for s in segments])
    return 0


def cmd_evaluate(args):
    cfg = load_dataset_config(args.dataset)
    results = {}
    for ck in args.checkpoint:
        model = load_checkpoint(ck)
        houses = getattr(cfg.split_for(model.appliance), args.split)
        results[model.appliance] = _evaluate_model(model, cfg, houses, args)
    _write_reports(results, args)
    return 0


def cmd_transfer_atl(args):
    cfg = load_dataset_config(args.dataset)
    norms = load_norm_config(args.norm_config)
    source = load_checkpoint(args.source)
    ap = params_for(args.appliance, norms)
    split = cfg.split_for(args.appliance)
    W = source.window_length
    train_b = _batches(_pairs(cfg, split.train, args.appliance, args), W, source.mains_params, ap)
    val_b = _batches(_pairs(cfg, split.validation, args.appliance, args), W, source.mains_params, ap)
    model, hist = atl_transfer(source, train_b, val_b, _train_config(args), ap,
                               appliance=args.appliance)
    save_checkpoint(model, args.out)
    if args.history:
        hist.to_csv(args.history)
    return 0


def cmd_transfer_ctl(args):
    cfg = load_dataset_config(args.dataset)
    source = load_checkpoint(args.source)
    appliance = args.appliance or source.appliance
    if appliance != source.appliance:
        raise ConfigError(f"source checkpoint is for {source.appliance!r}, not {appliance!r}")
    split = cfg.split_for(appliance)
    model = source
    if args.finetune:
        pairs = _pairs(cfg, split.train, appliance, args)
        val = _pairs(cfg, split.validation, appliance, args) or None
        model, hist = ctl_finetune(source, pairs, args.subset_fraction, _train_config(args),
                                   validation_pairs=val)
        if args.out_checkpoint:
            save_checkpoint(model, args.out_checkpoint)
        if args.history:
            hist.to_csv(args.history)
        results = {appliance: _evaluate_model(model, cfg, split.test, args)}
    else:
        results = {appliance: _evaluate_model(model, cfg, split.test, args, apply=ctl_apply)}
    _write_reports(results, args)
    return 0


def cmd_features(args):
    model = load_checkpoint(args.checkpoint)
    segments = _read_mains(args, model.period, args.max_gap)
    if not 0 <= args.segment < len(segments):
        raise DataError(f"segment {args.segment} out of range; file has {len(segments)}")
    seg = segments[args.segment]
    stop = args.stop if args.stop is not None else len(seg)
    windows = mains_windows(model, seg, args.start, stop)
    if windows.shape[0] == 0:
        raise DataError("empty window range")
    feats = extract_features(model, windows)
    n, length, channels = feats.shape
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "timestamp", "position", *(f"ch{c}" for c in range(channels))])
        for i in range(n):
            ts = int(seg.timestamps[args.start + i])
            for pos in range(length):
                w.writerow([args.start + i, ts, pos, *(repr(float(v)) for v in feats[i, pos])])
    return 0


# -- parser ---------------------------------------------------------------------

def _common(p, training=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--period", type=int, default=DEFAULT_PERIOD)
    p.add_argument("--max-gap", type=int, default=DEFAULT_MAX_GAP)
    p.add_argument("--norm-config", default=None)
    if training:
        p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
        p.add_argument("--batch-size", type=int, default=1000)
        p.add_argument("--max-epochs", type=int, default=50)
        p.add_argument("--patience", type=int, default=5)
        p.add_argument("--min-epochs", type=int, default=5)
        p.add_argument("--learning-rate", type=float, default=0.001)
        p.add_argument("--history", default=None, help="training-history CSV")


def _mains_opts(p):
    p.add_argument("--mains", required=True, help="CSV file with a header row")
    p.add_argument("--timestamp-col", default="timestamp")
    p.add_argument("--mains-col", default="mains")
    p.add_argument("--time-format", choices=("unix", "datetime"), default="unix")
    p.add_argument("--source-period", type=int, default=None,
                   help="native sampling period of the file (defaults to the model period)")


def build_parser():
    parser = argparse.ArgumentParser(prog="s2pnilm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a seq2point model for one appliance")
    p.add_argument("--dataset", required=True)
    p.add_argument("--appliance", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--arch", default=None, help="JSON list of layer specs")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="disaggregate a mains file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    _mains_opts(p)
    _common(p, training=False)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metrics report on a dataset split")
    p.add_argument("--checkpoint", required=True, nargs="+")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("train", "validation", "test"), default="test")
    p.add_argument("--out", required=True, help="report CSV")
    p.add_argument("--energy-share", default=None, help="energy-share CSV")
    _common(p, training=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("transfer", help="appliance or cross-domain transfer")
    tsub = p.add_subparsers(dest="mode", required=True)
    a = tsub.add_parser("atl", help="frozen conv stack, new dense head for another appliance")
    a.add_argument("--source", required=True)
    a.add_argument("--dataset", required=True)
    a.add_argument("--appliance", required=True)
    a.add_argument("--out", required=True, help="checkpoint directory")
    _common(a)
    a.set_defaults(func=cmd_transfer_atl)
    c = tsub.add_parser("ctl", help="apply (or fine-tune) a model on another domain")
    c.add_argument("--source", required=True)
    c.add_argument("--dataset", required=True)
    c.add_argument("--appliance", default=None)
    c.add_argument("--finetune", action="store_true")
    c.add_argument("--subset-fraction", type=float, default=0.1)
    c.add_argument("--out", required=True, help="report CSV")
    c.add_argument("--out-checkpoint", default=None)
    c.add_argument("--energy-share", default=None)
    _common(c)
    c.set_defaults(func=cmd_transfer_ctl)

    p = sub.add_parser("features", help="dump last-conv-layer activations")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--stop", type=int, default=None)
    p.add_argument("--segment", type=int, default=0)
    _mains_opts(p)
    _common(p, training=False)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("synth", help="write a synthetic household CSV")
    p.add_argument("--config", default=None, help="JSON generator config")
    p.add_argument("--length", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except S2PError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
