import io
import math

import numpy as np
import pytest

from vsrfault.signal import (
    DEFAULT_AMPLITUDE,
    Condition,
    CycleWindow,
    FaultState,
    Scenario,
    SignalConfig,
    draw_scenario,
    ideal_cycle,
    ideal_phase_current,
    read_stream_csv,
    synthesize_cycle,
    synthesize_stream,
    write_stream_csv,
)

N, S, H = Condition.NORMAL, Condition.SOFT, Condition.HARD


def test_defaults():
    cfg = SignalConfig()
    assert cfg.samples_per_cycle == 512
    assert cfg.omega == pytest.approx(100 * math.pi)
    # 2 * (100**2 / 16) / (3 * 40)
    assert DEFAULT_AMPLITUDE == pytest.approx(10.4167, abs=1e-4)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(amplitude_A=0.0),
        dict(sample_rate=25_000.0, grid_freq=60.0),
        dict(noise_sigma_frac=-0.1),
        dict(soft_range=(0.4, 0.8)),
        dict(hard_range=(0.3, 1.2)),
    ],
)
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        SignalConfig(**kwargs)


@pytest.mark.parametrize(
    "t, phase, expected",
    [
        (0.0, "A", 0.0),
        (1 / (4 * 50), "A", 10.0),
        (0.0, "B", -10 * math.sqrt(3) / 2),
        (0.0, "C", 10 * math.sqrt(3) / 2),
    ],
)
def test_ideal_phase_current(quiet_cfg, t, phase, expected):
    assert ideal_phase_current(t, phase, quiet_cfg) == pytest.approx(expected, abs=1e-12)
    if phase == "B":
        assert round(float(ideal_phase_current(t, phase, quiet_cfg)), 4) == -8.6603


def test_zero_noise_normal_cycle_is_ideal(quiet_cfg, rng):
    w = synthesize_cycle(quiet_cfg, FaultState.normal(), 3, rng)
    t = (np.arange(512) + 3 * 512) / quiet_cfg.sample_rate
    for p, phase in enumerate("ABC"):
        np.testing.assert_allclose(w.samples[p], ideal_phase_current(t, phase, quiet_cfg), rtol=0, atol=1e-12)


def test_phase_symmetry(quiet_cfg, rng):
    for k in (0, 1, 7):
        w = synthesize_cycle(quiet_cfg, FaultState.normal(), k, rng)
        assert np.max(np.abs(w.samples.sum(axis=0))) <= 1e-9 * quiet_cfg.amplitude_A


def test_soft_fault_scales_only_faulted_phase(quiet_cfg, rng):
    normal = synthesize_cycle(quiet_cfg, FaultState.normal(), 0, rng)
    faulted = synthesize_cycle(quiet_cfg, FaultState((S, N, N), (0.7, 1.0, 1.0)), 0, rng)
    np.testing.assert_array_equal(faulted.samples[0], 0.7 * normal.samples[0])
    np.testing.assert_array_equal(faulted.samples[1:], normal.samples[1:])


def test_noise_is_zero_mean():
    cfg = SignalConfig(amplitude_A=10.0, noise_sigma_frac=0.02)
    rng = np.random.default_rng(7)
    fault = FaultState((H, S, N), (0.4, 0.7, 1.0))
    resid_sum, count = 0.0, 0
    for k in range(10_000):
        w = synthesize_cycle(cfg, fault, k, rng)
        ideal = np.asarray(fault.gains)[:, None] * ideal_cycle(cfg, k)
        resid_sum += float((w.samples - ideal).sum())
        count += w.samples.size
    assert abs(resid_sum / count) <= 0.005 * cfg.amplitude_A


def test_fault_state_invariants(cfg, rng):
    with pytest.raises(ValueError):
        FaultState((N, N, N), (0.9, 1.0, 1.0))
    for _ in range(200):
        st = FaultState.draw("SHN", cfg, rng)
        st.check(cfg)
        assert 0.6 <= st.gains[0] <= 0.8
        assert 0.3 <= st.gains[1] <= 0.5
        assert st.gains[2] == 1.0


def test_window_validation():
    with pytest.raises(ValueError):
        CycleWindow(np.zeros((2, 8)))
    bad = np.zeros((3, 8))
    bad[1, 2] = np.nan
    with pytest.raises(ValueError):
        CycleWindow(bad)


def test_stream_truths(cfg):
    post = FaultState((S, N, N), (0.7, 1.0, 1.0))
    windows = synthesize_stream(Scenario(post, onset_cycle=2, total_cycles=5, seed=1), cfg)
    assert [w.cycle_index for w in windows] == [0, 1, 2, 3, 4]
    assert ["S" if not w.truth.is_normal else "N" for w in windows] == list("NNSSS")


def test_stream_onset_zero_all_faulted(cfg):
    post = FaultState((S, N, N), (0.7, 1.0, 1.0))
    windows = synthesize_stream(Scenario(post, onset_cycle=0, seed=1), cfg)
    assert all(w.truth == post for w in windows)


def test_stream_rejects_late_onset():
    with pytest.raises(ValueError):
        Scenario(FaultState.normal(), onset_cycle=6, total_cycles=5)


def test_drawn_scenario_gain_ranges(cfg):
    for seed in range(50):
        sc = draw_scenario("SHN", cfg, seed)
        windows = synthesize_stream(sc, cfg)
        for w in windows[2:]:
            g = w.truth.gains
            assert 0.6 <= g[0] <= 0.8 and 0.3 <= g[1] <= 0.5 and g[2] == 1.0
        assert all(w.truth.is_normal for w in windows[:2])
        # one draw per scenario: every post-onset cycle shares its gains
        assert len({w.truth.gains for w in windows[2:]}) == 1


def test_stream_determinism(cfg):
    sc = draw_scenario("HHN", cfg, 99)
    a = synthesize_stream(sc, cfg)
    b = synthesize_stream(draw_scenario("HHN", cfg, 99), cfg)
    for wa, wb in zip(a, b):
        assert wa.samples.tobytes() == wb.samples.tobytes()


def test_stream_csv_round_trip(cfg):
    windows = synthesize_stream(draw_scenario("SNN", cfg, 3, total_cycles=2), cfg)
    buf = io.StringIO()
    write_stream_csv(buf, windows, ["config line"])
    text = buf.getvalue()
    assert text.splitlines()[1] == "cycle,phase,sample_index,value"
    back = read_stream_csv(io.StringIO(text))
    assert len(back) == 2
    for w, b in zip(windows, back):
        assert b.cycle_index == w.cycle_index
        np.testing.assert_array_equal(b.samples, w.samples)


def test_stream_csv_rejects_missing_samples():
    text = "cycle,phase,sample_index,value\n0,A,0,1.0\n0,A,2,1.0\n0,B,0,1\n0,C,0,1\n"
    with pytest.raises(ValueError, match="missing"):
        read_stream_csv(io.StringIO(text))
