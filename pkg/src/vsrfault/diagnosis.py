"""Per-cycle streaming diagnosis: each cycle is classified on its own."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .features import extract
from .forest import ForestModel, predict_votes
from .labels import LABEL_FIELDS, class_to_labels
from .signal import CycleWindow, SignalConfig


@dataclass(frozen=True)
class DiagnosisRecord:
    cycle_index: int
    class_id: int
    labels: tuple[int, ...]
    confidence: float


def _record(cycle_index: int, votes: np.ndarray) -> DiagnosisRecord:
    c = int(np.argmax(votes))
    return DiagnosisRecord(cycle_index, c, class_to_labels(c), float(votes[c] / votes.sum()))


def _features(model: ForestModel, w: CycleWindow, cfg: SignalConfig) -> np.ndarray:
    x = extract(model.feature_kind, w, cfg)
    if x.shape[0] != model.dim:
        raise ValueError(
            f"cycle yields {x.shape[0]} {model.feature_kind} features, model expects {model.dim}"
        )
    return x


def diagnose_cycle(model: ForestModel, w: CycleWindow, cfg: SignalConfig) -> DiagnosisRecord:
    votes = predict_votes(model, _features(model, w, cfg))[0]
    return _record(w.cycle_index, votes)


def diagnose_stream(
    model: ForestModel, cycles: Sequence[CycleWindow], cfg: SignalConfig
) -> list[DiagnosisRecord]:
    """Same result as mapping :func:`diagnose_cycle`, but predicted in one batch."""
    if len(cycles) == 0:
        raise ValueError("empty cycle sequence")
    X = np.stack([_features(model, w, cfg) for w in cycles])
    votes = predict_votes(model, X)
    return [_record(w.cycle_index, v) for w, v in zip(cycles, votes)]


RECORD_HEADER = ("cycle", "class", *LABEL_FIELDS, "confidence")


def write_records_csv(
    fh: IO[str], records: Iterable[DiagnosisRecord], comments: Sequence[str] = ()
) -> None:
    for line in comments:
        fh.write(f"# {line}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(RECORD_HEADER)
    for r in records:
        writer.writerow([r.cycle_index, r.class_id, *r.labels, f"{r.confidence:.6f}"])
