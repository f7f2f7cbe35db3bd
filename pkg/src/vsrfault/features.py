"""Per-cycle texture features and the raw-sample baseline."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .signal import PHASES, CycleWindow, SignalConfig

STAT_NAMES = ("mean", "std", "smoothness", "skewness", "kurtosis", "rms")
TEXTURE_NAMES = tuple(f"{p}_{s}" for p in PHASES for s in STAT_NAMES)
TEXTURE_DIM = len(TEXTURE_NAMES)

# Relative to amplitude_A**2; below this a phase is treated as constant.
DEGENERATE_VAR = 1e-12


def phase_moments(samples: Sequence[float]) -> tuple[float, float, float, float]:
    """Population mean, std and third/fourth central moments."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("phase_moments needs a 1-D sequence of at least 2 samples")
    mean = float(x.mean())
    d = x - mean
    d2 = d * d
    m2 = float(d2.mean())
    m3 = float((d2 * d).mean())
    m4 = float((d2 * d2).mean())
    return mean, math.sqrt(m2), m3, m4


def smoothness(std: float, amplitude: float) -> float:
    s = (std / amplitude) ** 2
    return s / (1.0 + s)


def phase_texture(samples: Sequence[float], amplitude: float) -> tuple[float, ...]:
    x = np.asarray(samples, dtype=float)
    mean, std, m3, m4 = phase_moments(x)
    m2 = std * std
    if m2 < DEGENERATE_VAR * amplitude**2:
        skew = kurt = 0.0
    else:
        skew = m3 / m2**1.5
        kurt = m4 / (m2 * m2)
    rms = math.sqrt(float(np.mean(x * x)))
    return (mean, std, smoothness(std, amplitude), skew, kurt, rms)


def extract_texture(w: CycleWindow, cfg: SignalConfig) -> np.ndarray:
    """18 texture features ordered phase-major: (A, B, C) x STAT_NAMES."""
    if not np.all(np.isfinite(w.samples)):
        raise ValueError("cycle window contains non-finite samples")
    return np.array(
        [v for row in w.samples for v in phase_texture(row, cfg.amplitude_A)]
    )


def extract_raw(w: CycleWindow) -> np.ndarray:
    return np.asarray(w.samples, dtype=float).reshape(-1).copy()


def raw_dim(cfg: SignalConfig) -> int:
    return 3 * cfg.samples_per_cycle


def extract(kind: str, w: CycleWindow, cfg: SignalConfig) -> np.ndarray:
    if kind == "texture":
        return extract_texture(w, cfg)
    if kind == "raw":
        return extract_raw(w)
    raise ValueError(f"unknown feature kind {kind!r}")


def feature_dim(kind: str, cfg: SignalConfig) -> int:
    if kind == "texture":
        return TEXTURE_DIM
    if kind == "raw":
        return raw_dim(cfg)
    raise ValueError(f"unknown feature kind {kind!r}")
