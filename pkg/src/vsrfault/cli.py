"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or file-format error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict

from .dataset import (
    DEFAULT_PER_CLASS,
    DEFAULT_TRAIN_FRAC,
    Dataset,
    build_dataset,
    evaluate,
    read_dataset_csv,
    split,
    tree_sweep,
    write_confusion_csv,
    write_dataset_csv,
    write_report_csv,
    write_sweep_csv,
)
from .diagnosis import diagnose_stream, write_records_csv
from .forest import ForestModel, ModelFormatError, TrainParams, train_forest
from .labels import CLASS_CONDITIONS, CLASS_NAMES, class_from_name
from .signal import SignalConfig, draw_scenario, read_stream_csv, synthesize_stream, write_stream_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    return lo, hi


def _counts(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_signal_flags(p):
    d = SignalConfig()
    g = p.add_argument_group("signal")
    g.add_argument("--amplitude", type=float, default=d.amplitude_A, help="current amplitude [A]")
    g.add_argument("--grid-freq", type=float, default=d.grid_freq, help="grid frequency [Hz]")
    g.add_argument("--sample-rate", type=float, default=d.sample_rate, help="sampling rate [Hz]")
    g.add_argument("--noise", type=float, default=d.noise_sigma_frac,
                   help="noise sigma as a fraction of the amplitude")
    g.add_argument("--soft-range", type=_range, default=d.soft_range, metavar="LO,HI")
    g.add_argument("--hard-range", type=_range, default=d.hard_range, metavar="LO,HI")


def _add_tree_flags(p, with_count=True):
    g = p.add_argument_group("forest")
    if with_count:
        g.add_argument("--trees", type=int, default=200, help="number of trees")
    g.add_argument("--m-features", type=int, default=None,
                   help="features tried per split (default ceil(sqrt(dim)))")
    g.add_argument("--min-leaf", type=int, default=1)
    g.add_argument("--max-depth", type=int, default=None)


def _signal_config(args) -> SignalConfig:
    try:
        return SignalConfig(
            amplitude_A=args.amplitude,
            grid_freq=args.grid_freq,
            sample_rate=args.sample_rate,
            noise_sigma_frac=args.noise,
            soft_range=tuple(args.soft_range),
            hard_range=tuple(args.hard_range),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _train_params(args, n_trees=None) -> TrainParams:
    try:
        return TrainParams(
            n_trees=n_trees or args.trees,
            m_features=args.m_features,
            min_leaf=args.min_leaf,
            max_depth=args.max_depth,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _header(command: str, **config) -> list[str]:
    return [f"vsrfault {command} " + json.dumps(config, sort_keys=True)]


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _load_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return read_dataset_csv(fh)


def _load_model(path) -> ForestModel:
    return ForestModel.load(path)


def _check_kind(model: ForestModel, data: Dataset):
    if model.feature_kind != data.feature_kind or model.dim != data.dim:
        raise DataError(
            f"model expects {model.feature_kind} features ({model.dim}), "
            f"data has {data.feature_kind} ({data.dim})"
        )


def _scenario_from_args(args, cfg):
    post = CLASS_CONDITIONS[class_from_name(args.scenario)]
    pre = CLASS_CONDITIONS[class_from_name(args.pre)]
    return draw_scenario(post, cfg, args.seed, args.onset, args.cycles, pre)


def cmd_simulate(args) -> int:
    cfg = _signal_config(args)
    try:
        scenario = _scenario_from_args(args, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    windows = synthesize_stream(scenario, cfg)
    comments = _header(
        "simulate", signal=asdict(cfg), scenario=args.scenario, pre=args.pre,
        onset=args.onset, cycles=args.cycles, seed=args.seed,
        pre_gains=scenario.pre_state.gains, post_gains=scenario.post_state.gains,
    )
    with _output(args.out) as fh:
        write_stream_csv(fh, windows, comments)
    return EXIT_OK


def cmd_gen(args) -> int:
    cfg = _signal_config(args)
    if args.per_class < 1:
        raise UsageError("--per-class must be >= 1")
    d = build_dataset(cfg, args.per_class, args.features, args.seed, args.threads)
    comments = _header(
        "gen", signal=asdict(cfg), per_class=args.per_class, features=args.features, seed=args.seed
    )
    with _output(args.out) as fh:
        write_dataset_csv(fh, d, comments)
    print(f"wrote {len(d)} rows of {d.dim} {d.feature_kind} features", file=sys.stderr)
    return EXIT_OK


def _holdout(data: Dataset, train_frac: float, split_seed: int):
    if train_frac >= 1.0:
        return data, None
    try:
        return split(data, train_frac, split_seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_train(args) -> int:
    data = _load_dataset(args.data)
    params = _train_params(args)
    split_seed = args.seed if args.split_seed is None else args.split_seed
    train, test = _holdout(data, args.train_frac, split_seed)
    try:
        params.resolve(data.dim)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    t0 = time.perf_counter()
    model = train_forest(train.X, train.y, params, data.feature_kind, args.threads)
    elapsed = time.perf_counter() - t0
    model.save(args.model)
    print(f"trained {model.n_trees} trees on {len(train)} rows "
          f"({model.feature_kind}, dim {model.dim}) in {elapsed:.1f}s")
    if test is not None:
        report = evaluate(model, test)
        print(f"test accuracy {report.overall:.4f} on {len(test)} rows")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = _load_model(args.model)
    data = _load_dataset(args.data)
    _check_kind(model, data)
    if args.train_frac is not None:
        _, data = _holdout(data, args.train_frac, model.params.seed if args.split_seed is None else args.split_seed)
        if data is None:
            raise UsageError("--train-frac must be below 1 to select a holdout")
    report = evaluate(model, data)
    with _output(args.report) as fh:
        write_report_csv(fh, report)
    if args.confusion:
        with _output(args.confusion) as fh:
            write_confusion_csv(fh, report)
    print(f"overall accuracy {report.overall:.4f} on {len(data)} rows", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    data = _load_dataset(args.data)
    counts = args.tree_counts
    if not counts or min(counts) < 1:
        raise UsageError("--trees needs positive counts")
    params = _train_params(args, n_trees=max(counts))
    try:
        params.resolve(data.dim)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    curve = tree_sweep(data, counts, params, args.seed, args.train_frac, args.threads)
    with _output(args.out) as fh:
        write_sweep_csv(fh, curve)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = _signal_config(args)
    if (args.stream is None) == (args.scenario is None):
        raise UsageError("give exactly one of --stream or --scenario")
    model = _load_model(args.model)
    if args.stream is not None:
        with open(args.stream, encoding="utf-8") as fh:
            windows = read_stream_csv(fh)
        source = {"stream": args.stream}
    else:
        try:
            scenario = _scenario_from_args(args, cfg)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        windows = synthesize_stream(scenario, cfg)
        source = {"scenario": args.scenario, "pre": args.pre, "onset": args.onset,
                  "cycles": args.cycles, "seed": args.seed}
    if not windows:
        raise DataError("no cycles to diagnose")
    try:
        records = diagnose_stream(model, windows, cfg)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    with _output(args.out) as fh:
        write_records_csv(fh, records, _header("diagnose", signal=asdict(cfg), **source))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vsrfault", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="synthesize a fault scenario as a stream CSV")
    _add_signal_flags(p)
    p.add_argument("--scenario", default="a-soft", help=f"post-onset state: {', '.join(CLASS_NAMES)}")
    p.add_argument("--pre", default="normal", help="pre-onset state")
    p.add_argument("--onset", type=int, default=2)
    p.add_argument("--cycles", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen", help="generate a labeled feature dataset CSV")
    _add_signal_flags(p)
    p.add_argument("--per-class", type=int, default=DEFAULT_PER_CLASS)
    p.add_argument("--features", choices=("texture", "raw"), default="texture")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a forest on a dataset CSV")
    _add_tree_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--train-frac", type=float, default=DEFAULT_TRAIN_FRAC,
                   help="fraction used for training; 1 trains on everything")
    p.add_argument("--split-seed", type=int, default=None, help="defaults to --seed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="per-class accuracy report for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--train-frac", type=float, default=None,
                   help="evaluate only the holdout of this split (as used by train)")
    p.add_argument("--split-seed", type=int, default=None, help="defaults to the model seed")
    p.add_argument("--report", default="-")
    p.add_argument("--confusion", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="accuracy against number of trees")
    _add_tree_flags(p, with_count=False)
    p.add_argument("--data", required=True)
    p.add_argument("--trees", dest="tree_counts", type=_counts, default=[10, 50, 100, 200],
                   metavar="N1,N2,...")
    p.add_argument("--train-frac", type=float, default=DEFAULT_TRAIN_FRAC)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diagnose", help="classify each cycle of a stream")
    _add_signal_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--stream", default=None, help="stream CSV from `simulate`")
    p.add_argument("--scenario", default=None, help="synthesize this post-onset state instead")
    p.add_argument("--pre", default="normal")
    p.add_argument("--onset", type=int, default=2)
    p.add_argument("--cycles", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"vsrfault {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFormatError, ValueError, OSError) as exc:
        print(f"vsrfault {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
