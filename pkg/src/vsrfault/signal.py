"""Three-phase current synthesis with injected current-sensor faults.

Phase currents are generated analytically as balanced sinusoids. A faulty
sensor scales its phase reading by a gain below one (soft faults mildly,
hard faults severely) and every reading carries additive Gaussian noise.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

PHASES = ("A", "B", "C")
PHASE_OFFSETS = {"A": 0.0, "B": -2.0 * math.pi / 3.0, "C": 2.0 * math.pi / 3.0}

# Platform power balance: P = Vdc^2 / R = 100^2 / 16, I = 2P / (3 * 40 V).
DEFAULT_AMPLITUDE = 2.0 * (100.0**2 / 16.0) / (3.0 * 40.0)

STREAM_HEADER = ("cycle", "phase", "sample_index", "value")


class Condition(str, enum.Enum):
    NORMAL = "N"
    SOFT = "S"
    HARD = "H"


@dataclass(frozen=True)
class SignalConfig:
    amplitude_A: float = DEFAULT_AMPLITUDE
    grid_freq: float = 50.0
    sample_rate: float = 25_600.0
    noise_sigma_frac: float = 0.02
    soft_range: tuple[float, float] = (0.6, 0.8)
    hard_range: tuple[float, float] = (0.3, 0.5)

    def __post_init__(self):
        if not self.amplitude_A > 0:
            raise ValueError(f"amplitude_A must be positive, got {self.amplitude_A}")
        if not self.grid_freq > 0 or not self.sample_rate > 0:
            raise ValueError("grid_freq and sample_rate must be positive")
        ratio = self.sample_rate / self.grid_freq
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 2:
            raise ValueError(
                f"sample_rate ({self.sample_rate}) must be an integer multiple "
                f"of grid_freq ({self.grid_freq})"
            )
        if self.noise_sigma_frac < 0:
            raise ValueError("noise_sigma_frac must be >= 0")
        for name in ("soft_range", "hard_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi < 1:
                raise ValueError(f"{name} must satisfy 0 < lo <= hi < 1, got {(lo, hi)}")
        s_lo, s_hi = self.soft_range
        h_lo, h_hi = self.hard_range
        if not (h_hi < s_lo or s_hi < h_lo):
            raise ValueError("soft_range and hard_range must be disjoint")

    @property
    def samples_per_cycle(self) -> int:
        return int(round(self.sample_rate / self.grid_freq))

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.grid_freq

    @property
    def noise_sigma(self) -> float:
        return self.noise_sigma_frac * self.amplitude_A

    def gain_range(self, cond: Condition) -> tuple[float, float]:
        if cond is Condition.SOFT:
            return self.soft_range
        if cond is Condition.HARD:
            return self.hard_range
        return (1.0, 1.0)


@dataclass(frozen=True)
class FaultState:
    """Sensor condition and applied gain for each of the three phases."""

    conditions: tuple[Condition, Condition, Condition] = (
        Condition.NORMAL,
        Condition.NORMAL,
        Condition.NORMAL,
    )
    gains: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.conditions) != 3 or len(self.gains) != 3:
            raise ValueError("FaultState needs exactly three phases")
        for cond, gain in zip(self.conditions, self.gains):
            if cond is Condition.NORMAL and gain != 1.0:
                raise ValueError("a Normal phase must have gain 1.0")
            if not 0 < gain <= 1.0:
                raise ValueError(f"gain out of range: {gain}")

    @classmethod
    def normal(cls) -> FaultState:
        return cls()

    @classmethod
    def draw(
        cls,
        conditions: Sequence[Condition | str],
        cfg: SignalConfig,
        rng: np.random.Generator,
    ) -> FaultState:
        """Draw a gain for every faulted phase from its configured range."""
        conds = tuple(Condition(c) for c in conditions)
        gains = []
        for cond in conds:
            if cond is Condition.NORMAL:
                gains.append(1.0)
            else:
                lo, hi = cfg.gain_range(cond)
                gains.append(float(rng.uniform(lo, hi)))
        return cls(conds, tuple(gains))

    def check(self, cfg: SignalConfig) -> None:
        for cond, gain in zip(self.conditions, self.gains):
            lo, hi = cfg.gain_range(cond)
            if not lo <= gain <= hi:
                raise ValueError(f"gain {gain} outside {cond.name} range {(lo, hi)}")

    @property
    def is_normal(self) -> bool:
        return all(c is Condition.NORMAL for c in self.conditions)


@dataclass
class CycleWindow:
    samples: np.ndarray
    cycle_index: int = 0
    truth: FaultState | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[0] != 3:
            raise ValueError(f"expected a 3 x n sample array, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("cycle window contains non-finite samples")


@dataclass(frozen=True)
class Scenario:
    post_state: FaultState
    pre_state: FaultState = field(default_factory=FaultState.normal)
    total_cycles: int = 5
    onset_cycle: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.total_cycles < 1:
            raise ValueError("total_cycles must be >= 1")
        if not 0 <= self.onset_cycle <= self.total_cycles:
            raise ValueError(
                f"onset_cycle {self.onset_cycle} outside [0, {self.total_cycles}]"
            )

    def state_at(self, cycle: int) -> FaultState:
        return self.pre_state if cycle < self.onset_cycle else self.post_state


def ideal_phase_current(t, phase: str, cfg: SignalConfig):
    """Healthy current of one phase at time ``t`` (scalar or array, seconds)."""
    return cfg.amplitude_A * np.sin(cfg.omega * np.asarray(t, dtype=float) + PHASE_OFFSETS[phase])


def cycle_times(cfg: SignalConfig, cycle_index: int = 0) -> np.ndarray:
    n = cfg.samples_per_cycle
    return (np.arange(n) + cycle_index * n) / cfg.sample_rate


def ideal_cycle(cfg: SignalConfig, cycle_index: int = 0) -> np.ndarray:
    t = cycle_times(cfg, cycle_index)
    return np.stack([ideal_phase_current(t, p, cfg) for p in PHASES])


def synthesize_cycle(
    cfg: SignalConfig,
    fault: FaultState,
    cycle_index: int,
    rng: np.random.Generator,
) -> CycleWindow:
    gains = np.asarray(fault.gains)[:, None]
    samples = gains * ideal_cycle(cfg, cycle_index)
    if cfg.noise_sigma_frac > 0:
        samples = samples + rng.normal(0.0, cfg.noise_sigma, size=samples.shape)
    return CycleWindow(samples, cycle_index, fault)


def synthesize_stream(scenario: Scenario, cfg: SignalConfig) -> list[CycleWindow]:
    """Synthesize every cycle of a scenario.

    Gains for the pre- and post-onset states are fixed by the scenario, so a
    fault keeps the same severity for its whole duration.
    """
    rng = np.random.default_rng(scenario.seed)
    return [
        synthesize_cycle(cfg, scenario.state_at(k), k, rng)
        for k in range(scenario.total_cycles)
    ]


def draw_scenario(
    post_conditions: Sequence[Condition | str],
    cfg: SignalConfig,
    seed: int,
    onset_cycle: int = 2,
    total_cycles: int = 5,
    pre_conditions: Sequence[Condition | str] = "NNN",
) -> Scenario:
    """Build a scenario whose fault gains are drawn from ``seed``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5CE7]))
    pre = FaultState.draw(pre_conditions, cfg, rng)
    post = FaultState.draw(post_conditions, cfg, rng)
    return Scenario(post, pre, total_cycles, onset_cycle, seed)


def write_stream_csv(
    fh: IO[str], windows: Iterable[CycleWindow], comments: Sequence[str] = ()
) -> None:
    for line in comments:
        fh.write(f"# {line}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(STREAM_HEADER)
    for w in windows:
        for p, phase in enumerate(PHASES):
            for i, v in enumerate(w.samples[p]):
                writer.writerow((w.cycle_index, phase, i, repr(float(v))))


def read_stream_csv(fh: IO[str]) -> list[CycleWindow]:
    """Parse a stream CSV back into cycle windows ordered by cycle index."""
    rows = (line for line in fh if not line.startswith("#"))
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != STREAM_HEADER:
        raise ValueError(f"bad stream header: {header}")
    data: dict[int, dict[str, dict[int, float]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            cycle, phase, idx, value = int(row[0]), row[1].strip(), int(row[2]), float(row[3])
        except (ValueError, IndexError) as exc:
            raise ValueError(f"stream row {lineno}: {exc}") from None
        if phase not in PHASES:
            raise ValueError(f"stream row {lineno}: unknown phase {phase!r}")
        data.setdefault(cycle, {p: {} for p in PHASES})[phase][idx] = value
    windows = []
    for cycle in sorted(data):
        rows_ = []
        for phase in PHASES:
            by_idx = data[cycle][phase]
            if sorted(by_idx) != list(range(len(by_idx))) or not by_idx:
                raise ValueError(f"cycle {cycle} phase {phase}: missing samples")
            rows_.append([by_idx[i] for i in range(len(by_idx))])
        if len({len(r) for r in rows_}) != 1:
            raise ValueError(f"cycle {cycle}: phases have different lengths")
        windows.append(CycleWindow(np.array(rows_), cycle))
    return windows
