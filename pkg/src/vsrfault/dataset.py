"""Labeled dataset generation, train/test protocol and evaluation reports."""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

import numpy as np

from .features import extract
from .forest import ForestModel, TrainParams, predict, train_forest
from .labels import CLASS_CONDITIONS, N_CLASSES
from .signal import CycleWindow, FaultState, SignalConfig, synthesize_cycle

DEFAULT_PER_CLASS = 2400
DEFAULT_TRAIN_FRAC = 0.7
DEFAULT_REPEATS = 5

_SPLIT_TAG = 0x5911
_REPEAT_TAG = 0xE7A1


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=np.intp)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"feature matrix {self.X.shape} does not match {self.y.shape[0]} labels")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= N_CLASSES):
            raise ValueError("labels must be class ids in [0, 9]")

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def dim(self) -> int:
        return int(self.X.shape[1])

    def subset(self, idx) -> Dataset:
        return Dataset(self.X[idx], self.y[idx], self.feature_kind, dict(self.meta))


def labeled_cycle(cfg: SignalConfig, class_id: int, index: int, seed: int) -> CycleWindow:
    """The ``index``-th training cycle of a class; gains and noise from its own seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, class_id, index]))
    state = FaultState.draw(CLASS_CONDITIONS[class_id], cfg, rng)
    return synthesize_cycle(cfg, state, 0, rng)


def build_dataset(
    cfg: SignalConfig,
    per_class: int = DEFAULT_PER_CLASS,
    feature_kind: str = "texture",
    seed: int = 0,
    threads: int = 1,
) -> Dataset:
    """``per_class`` cycles for each of the ten classes, rows grouped by class.

    The underlying cycles depend only on (cfg, seed), so texture and raw
    datasets built with the same seed describe the same measurements.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    jobs = [(c, i) for c in range(N_CLASSES) for i in range(per_class)]

    def make(job):
        c, i = job
        return extract(feature_kind, labeled_cycle(cfg, c, i, seed), cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(make, jobs, chunksize=256))
    else:
        rows = [make(j) for j in jobs]
    meta = {"per_class": per_class, "seed": seed, "feature_kind": feature_kind}
    return Dataset(np.array(rows), np.array([c for c, _ in jobs]), feature_kind, meta)


def split(d: Dataset, train_frac: float = DEFAULT_TRAIN_FRAC, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0 < train_frac < 1:
        raise ValueError(f"train_frac must lie in (0, 1), got {train_frac}")
    n = len(d)
    n_train = int(round(train_frac * n))
    if n_train == 0 or n_train == n:
        raise ValueError(f"train_frac={train_frac} leaves an empty side for {n} rows")
    perm = np.random.default_rng(np.random.SeedSequence([seed, _SPLIT_TAG])).permutation(n)
    return d.subset(perm[:n_train]), d.subset(perm[n_train:])


@dataclass
class EvalReport:
    confusion: np.ndarray
    accuracy: np.ndarray
    misdiagnosis: np.ndarray
    overall: float

    @classmethod
    def from_confusion(cls, confusion) -> EvalReport:
        """Rows are true classes, columns predictions. Absent classes get NaN."""
        cm = np.asarray(confusion, dtype=np.int64)
        totals = cm.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            acc = np.where(totals > 0, np.diag(cm) / totals, np.nan)
        return cls(cm, acc, 1.0 - acc, float(np.trace(cm) / cm.sum()))


def confusion_report(y_true, y_pred, n_classes: int = N_CLASSES) -> EvalReport:
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    if y_true.size == 0:
        raise ValueError("cannot evaluate an empty test set")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return EvalReport.from_confusion(cm)


def evaluate(model: ForestModel, test: Dataset) -> EvalReport:
    if test.feature_kind != model.feature_kind:
        raise ValueError(
            f"model uses {model.feature_kind} features but data is {test.feature_kind}"
        )
    return confusion_report(test.y, predict(model, test.X))


@dataclass
class RepeatedEval:
    runs: np.ndarray
    per_class: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.runs.mean())

    @property
    def std(self) -> float:
        return float(self.runs.std())


def repeat_seed(seed: int, r: int) -> int:
    return int(np.random.SeedSequence([seed, _REPEAT_TAG, r]).generate_state(1)[0])


def repeated_eval(
    d: Dataset,
    params: TrainParams,
    repeats: int = DEFAULT_REPEATS,
    train_frac: float = DEFAULT_TRAIN_FRAC,
    threads: int = 1,
) -> RepeatedEval:
    """Monte Carlo cross-validation: ``repeats`` independent random splits.

    Repeat r uses ``repeat_seed(params.seed, r)`` for both its split and its
    forest.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    runs, per_class = [], []
    for r in range(repeats):
        s = repeat_seed(params.seed, r)
        train, test = split(d, train_frac, s)
        model = train_forest(train.X, train.y, replace(params, seed=s), d.feature_kind, threads)
        rep = evaluate(model, test)
        runs.append(rep.overall)
        per_class.append(rep.accuracy)
    with warnings.catch_warnings():
        # a class missing from every test split stays NaN
        warnings.simplefilter("ignore", RuntimeWarning)
        class_means = np.nanmean(np.array(per_class), axis=0)
    return RepeatedEval(np.array(runs), class_means)


def tree_sweep(
    d: Dataset,
    tree_counts: Sequence[int],
    params: TrainParams,
    seed: int = 0,
    train_frac: float = DEFAULT_TRAIN_FRAC,
    threads: int = 1,
) -> list[tuple[int, float]]:
    """Accuracy against forest size on one fixed split.

    One forest of ``max(tree_counts)`` trees is grown; smaller forests are its
    prefixes, which is exactly what training them separately would give.
    """
    counts = [int(c) for c in tree_counts]
    if not counts or min(counts) < 1:
        raise ValueError("tree_counts must be a nonempty list of positive counts")
    train, test = split(d, train_frac, seed)
    full = train_forest(train.X, train.y, replace(params, n_trees=max(counts)), d.feature_kind, threads)
    return [(c, evaluate(full.prefix(c), test).overall) for c in counts]


# -- CSV formats ---------------------------------------------------------------

def feature_columns(kind: str, dim: int) -> list[str]:
    prefix = {"texture": "f", "raw": "r"}[kind]
    return [f"{prefix}{i}" for i in range(dim)]


def write_dataset_csv(fh: IO[str], d: Dataset, comments: Sequence[str] = ()) -> None:
    for line in comments:
        fh.write(f"# {line}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["label", *feature_columns(d.feature_kind, d.dim)])
    for label, row in zip(d.y, d.X):
        writer.writerow([int(label), *(repr(float(v)) for v in row)])


def read_dataset_csv(fh: IO[str]) -> Dataset:
    """Parse a dataset CSV; errors name the offending line."""
    header = None
    labels, rows = [], []
    for lineno, line in enumerate(fh, start=1):
        if line.startswith("#") or not line.strip():
            continue
        cells = [c.strip() for c in line.rstrip("\r\n").split(",")]
        if header is None:
            header = cells
            if len(header) < 2 or header[0] != "label":
                raise ValueError(f"line {lineno}: header must start with 'label'")
            prefix = header[1][:1]
            kind = {"f": "texture", "r": "raw"}.get(prefix)
            if kind is None or header[1:] != feature_columns(kind, len(header) - 1):
                raise ValueError(f"line {lineno}: unrecognised feature columns")
            continue
        if len(cells) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields, got {len(cells)}")
        try:
            label = int(cells[0])
            values = [float(c) for c in cells[1:]]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if not 0 <= label < N_CLASSES:
            raise ValueError(f"line {lineno}: label {label} outside [0, 9]")
        labels.append(label)
        rows.append(values)
    if header is None:
        raise ValueError("dataset file has no header")
    if not rows:
        raise ValueError("dataset file has no rows")
    return Dataset(np.array(rows), np.array(labels), kind)


def write_report_csv(fh: IO[str], report: EvalReport) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["class", "accuracy", "misdiagnosis"])
    for c, (a, m) in enumerate(zip(report.accuracy, report.misdiagnosis)):
        writer.writerow([c, f"{a:.6f}", f"{m:.6f}"])
    writer.writerow(["overall", f"{report.overall:.6f}", f"{1.0 - report.overall:.6f}"])


def write_confusion_csv(fh: IO[str], report: EvalReport) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    n = report.confusion.shape[0]
    writer.writerow(["true", *(f"pred{c}" for c in range(n))])
    for c, row in enumerate(report.confusion):
        writer.writerow([c, *(int(v) for v in row)])


def write_sweep_csv(fh: IO[str], curve: Sequence[tuple[int, float]]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["n_trees", "accuracy"])
    for n, acc in curve:
        writer.writerow([n, f"{acc:.6f}"])
