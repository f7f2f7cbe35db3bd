"""The ten sensor-fault classes and their six-bit label vectors.

Bits are (S1, S2, S3, H1, H2, H3): soft fault on phase A/B/C, then hard
fault on phase A/B/C.
"""

from __future__ import annotations

from .signal import Condition, FaultState

N_CLASSES = 10

CLASS_NAMES = (
    "normal",
    "a-soft",
    "a-hard",
    "b-soft",
    "b-hard",
    "c-soft",
    "c-hard",
    "ab-soft",
    "ab-hard",
    "a-soft-b-hard",
)

# Per-phase conditions (A, B, C) for each class id.
CLASS_CONDITIONS = (
    "NNN",
    "SNN",
    "HNN",
    "NSN",
    "NHN",
    "NNS",
    "NNH",
    "SSN",
    "HHN",
    "SHN",
)

LABEL_FIELDS = ("S1", "S2", "S3", "H1", "H2", "H3")


def conditions_to_labels(conditions) -> tuple[int, ...]:
    conds = [Condition(c) for c in conditions]
    return tuple(int(c is Condition.SOFT) for c in conds) + tuple(
        int(c is Condition.HARD) for c in conds
    )


LABEL_TABLE = tuple(conditions_to_labels(c) for c in CLASS_CONDITIONS)
_BY_LABELS = {labels: cid for cid, labels in enumerate(LABEL_TABLE)}
_BY_CONDITIONS = {c: cid for cid, c in enumerate(CLASS_CONDITIONS)}


def check_class(c: int) -> int:
    if isinstance(c, bool) or int(c) != c or not 0 <= c < N_CLASSES:
        raise ValueError(f"class id must be an integer in [0, {N_CLASSES - 1}], got {c!r}")
    return int(c)


def class_to_labels(c: int) -> tuple[int, ...]:
    return LABEL_TABLE[check_class(c)]


def class_conditions(c: int) -> str:
    return CLASS_CONDITIONS[check_class(c)]


def class_from_name(name: str) -> int:
    key = name.strip().lower().replace("_", "-")
    if key not in CLASS_NAMES:
        raise ValueError(f"unknown class {name!r}; expected one of {', '.join(CLASS_NAMES)}")
    return CLASS_NAMES.index(key)


def class_of_state(state: FaultState) -> int:
    """Class id of a fault state; raises if the combination has no class."""
    key = "".join(c.value for c in state.conditions)
    try:
        return _BY_CONDITIONS[key]
    except KeyError:
        raise ValueError(f"fault combination {key} is not one of the ten classes") from None


def labels_to_class(labels) -> int:
    try:
        return _BY_LABELS[tuple(int(b) for b in labels)]
    except KeyError:
        raise ValueError(f"label vector {tuple(labels)} does not match any class") from None
