"""Exit criteria for the package, one test per criterion.

Each test prints a PASS/FAIL line (collected again in the terminal summary).
Run alone with ``pytest tests/test_acceptance.py -s``.
"""

import math
import time

import numpy as np
import pytest

from oracles import brute_force_split
from vsrfault.cli import main as cli_main
from vsrfault.dataset import build_dataset, evaluate, split, tree_sweep
from vsrfault.diagnosis import diagnose_stream
from vsrfault.features import extract_texture
from vsrfault.forest import TrainParams, best_split, bootstrap, ensemble_error_report, train_forest
from vsrfault.labels import CLASS_CONDITIONS, CLASS_NAMES, class_to_labels
from vsrfault.signal import Condition, FaultState, SignalConfig, draw_scenario, synthesize_cycle, synthesize_stream

SEED = 0
DEFAULT_TREES = 200


@pytest.fixture(scope="module")
def default_run():
    """Seed-pinned default protocol: 24,000 texture cycles, 70/30 split, 200 trees."""
    cfg = SignalConfig()
    t0 = time.perf_counter()
    data = build_dataset(cfg, seed=SEED)
    train, test = split(data, 0.7, SEED)
    model = train_forest(train.X, train.y, TrainParams(n_trees=DEFAULT_TREES, seed=SEED))
    report = evaluate(model, test)
    elapsed = time.perf_counter() - t0
    return dict(cfg=cfg, data=data, train=train, test=test, model=model, report=report, elapsed=elapsed)


@pytest.fixture(scope="module")
def jensen_checks():
    return []


def test_c1_paper_analogue_accuracy(default_run, acceptance_line, jensen_checks):
    rep = default_run["report"]
    assert (len(default_run["train"]), len(default_run["test"])) == (16_800, 7_200)
    texture_ok = rep.overall >= 0.95 and default_run["elapsed"] < 600

    # raw baseline on the 2,400-cycle subset; same cycles, same split, same forest size
    cfg = default_run["cfg"]
    accs, times = {}, {}
    for kind in ("texture", "raw"):
        t0 = time.perf_counter()
        d = build_dataset(cfg, per_class=240, feature_kind=kind, seed=SEED)
        train, test = split(d, 0.7, SEED)
        model = train_forest(train.X, train.y, TrainParams(n_trees=DEFAULT_TREES, seed=SEED), kind)
        accs[kind] = evaluate(model, test).overall
        times[kind] = time.perf_counter() - t0
        jensen_checks.append((f"{kind} 2,400-cycle model", ensemble_error_report(model, test.X, test.y)))
    order_ok = accs["texture"] >= accs["raw"] and times["raw"] < 900

    ok = texture_ok and order_ok
    acceptance_line(
        "C1 paper-analogue accuracy",
        ok,
        f"texture 24k/200 trees acc={rep.overall:.4f} (>=0.95) in {default_run['elapsed']:.0f}s (<600s); "
        f"2,400-cycle subset texture={accs['texture']:.4f} >= raw={accs['raw']:.4f}, raw run {times['raw']:.0f}s (<900s)",
    )
    assert ok


def test_c2_desk_scale(acceptance_line, jensen_checks):
    t0 = time.perf_counter()
    d = build_dataset(SignalConfig(), per_class=240, seed=SEED)
    train, test = split(d, 0.7, SEED)
    model = train_forest(train.X, train.y, TrainParams(n_trees=50, seed=SEED))
    acc = evaluate(model, test).overall
    elapsed = time.perf_counter() - t0
    jensen_checks.append(("desk 50-tree model", ensemble_error_report(model, test.X, test.y)))
    ok = acc >= 0.90 and elapsed < 120
    acceptance_line("C2 desk-scale CI variant", ok, f"2,400 cycles, 50 trees: acc={acc:.4f} (>=0.90) in {elapsed:.1f}s (<120s)")
    assert ok


def test_c3_feature_closed_forms(acceptance_line):
    cfg = SignalConfig(noise_sigma_frac=0.0)
    rng = np.random.default_rng(SEED)
    A = cfg.amplitude_A
    normal = extract_texture(synthesize_cycle(cfg, FaultState.normal(), 0, rng), cfg).reshape(3, 6)
    rms_err = float(np.max(np.abs(normal[:, 5] / (A / math.sqrt(2)) - 1)))
    kurt_err = float(np.max(np.abs(normal[:, 4] / 1.5 - 1)))
    worst_scale = 0.0
    for phase in range(3):
        for gain, cond in ((0.7, Condition.SOFT), (0.4, Condition.HARD), (0.63, Condition.SOFT), (0.31, Condition.HARD)):
            conds = [Condition.NORMAL] * 3
            gains = [1.0] * 3
            conds[phase], gains[phase] = cond, gain
            f = extract_texture(synthesize_cycle(cfg, FaultState(tuple(conds), tuple(gains)), 0, rng), cfg).reshape(3, 6)
            for col in (1, 5):
                worst_scale = max(worst_scale, abs(f[phase, col] / (gain * normal[phase, col]) - 1))
    ok = rms_err <= 1e-3 and kurt_err <= 1e-3 and worst_scale <= 1e-9
    acceptance_line(
        "C3 feature closed forms",
        ok,
        f"rms rel err {rms_err:.1e}, kurtosis rel err {kurt_err:.1e} (<=1e-3); gain scaling rel err {worst_scale:.1e} (<=1e-9)",
    )
    assert ok


def small_split_cases(count, seed=SEED):
    """Datasets with <= 8 rows and <= 3 features over the integer grid 0..3."""
    rng = np.random.default_rng(seed)
    cases = []
    while len(cases) < count:
        n = int(rng.integers(2, 9))
        dim = int(rng.integers(1, 4))
        X = rng.integers(0, 4, size=(n, dim))
        y = rng.integers(0, 3, size=n)
        if len(set(y.tolist())) < 2:
            continue
        feats = sorted(rng.choice(dim, size=int(rng.integers(1, dim + 1)), replace=False).tolist())
        cases.append((X, y, feats))
    return cases


def test_c4_cart_oracle(acceptance_line):
    cases = small_split_cases(10_000)
    mismatches = 0
    for X, y, feats in cases:
        ref = brute_force_split(X.tolist(), y.tolist(), feats)
        got = best_split(X.astype(float), y, feats)
        if ref is None:
            mismatches += got is not None
        else:
            mismatches += got is None or (got.feature, got.threshold) != (ref[0], float(ref[1])) or abs(
                got.impurity - float(ref[2])
            ) > 1e-12
    ok = mismatches == 0
    acceptance_line("C4 CART oracle", ok, f"{len(cases)} cases, {mismatches} mismatches against exhaustive enumeration")
    assert ok


def test_c6_tree_count_trend(default_run, acceptance_line):
    curve = dict(tree_sweep(default_run["data"], [10, DEFAULT_TREES], TrainParams(seed=SEED), seed=SEED))
    ok = curve[DEFAULT_TREES] >= curve[10]
    acceptance_line("C6 tree-count trend", ok, f"acc(200)={curve[200]:.4f} >= acc(10)={curve[10]:.4f}")
    assert ok


def test_c7_streaming_scenarios(default_run, acceptance_line):
    cfg, model = default_run["cfg"], default_run["model"]
    pre_total = pre_ok = post_total = post_ok = 0
    worst = []
    for cid, conds in enumerate(CLASS_CONDITIONS):
        hits = 0
        for k in range(100):
            sc = draw_scenario(conds, cfg, seed=10_000 * (cid + 1) + k, onset_cycle=2, total_cycles=5)
            recs = diagnose_stream(model, synthesize_stream(sc, cfg), cfg)
            for r in recs[:2]:
                pre_total += 1
                pre_ok += r.class_id == 0
            for r in recs[2:]:
                post_total += 1
                good = r.class_id == cid and r.labels == class_to_labels(cid)
                post_ok += good
                hits += good
        worst.append((hits / 300, CLASS_NAMES[cid]))
    post_frac = post_ok / post_total
    ok = pre_ok == pre_total and min(worst)[0] >= 0.90
    acceptance_line(
        "C7 streaming scenarios",
        ok,
        f"pre-onset {pre_ok}/{pre_total} Normal; post-onset exact {post_frac:.4f} overall, "
        f"worst state {min(worst)[1]} {min(worst)[0]:.4f} (>=0.90)",
    )
    assert ok


def test_c8_determinism(tmp_path, acceptance_line):
    outputs = {}
    for run, threads in (("a", 1), ("b", 1), ("c", 4)):
        data, model = tmp_path / f"{run}.csv", tmp_path / f"{run}.txt"
        assert cli_main(["gen", "--per-class", "60", "--seed", "17", "--threads", str(threads), "--out", str(data)]) == 0
        assert cli_main(["train", "--data", str(data), "--model", str(model), "--trees", "40",
                         "--seed", "17", "--threads", str(threads)]) == 0
        outputs[run] = (data.read_bytes(), model.read_bytes())
    files_ok = outputs["a"] == outputs["b"] == outputs["c"]

    rng = np.random.default_rng(SEED)
    frac = float(np.mean([np.unique(bootstrap(1000, rng)).size / 1000 for _ in range(1000)]))
    boot_ok = abs(frac - 0.632) <= 0.01
    ok = files_ok and boot_ok
    acceptance_line(
        "C8 determinism",
        ok,
        f"gen+train bytes identical across runs and --threads 1/4: {files_ok}; bootstrap unique fraction {frac:.4f} (0.632+-0.01)",
    )
    assert ok


def test_c5_jensen_invariant(default_run, jensen_checks, acceptance_line):
    # runs last so every model evaluated above is included
    test = default_run["test"]
    checks = list(jensen_checks)
    checks.append(("default 200-tree model", ensemble_error_report(default_run["model"], test.X, test.y)))
    rng = np.random.default_rng(SEED)
    for k in range(5):
        idx = rng.choice(len(test), size=500, replace=False)
        sub = test.subset(idx)
        checks.append((f"default model, test subset {k}", ensemble_error_report(default_run["model"].prefix(5 + k), sub.X, sub.y)))
    failures = [name for name, rep in checks if not rep.ensemble_brier <= rep.mean_tree_brier + 1e-12]
    ok = not failures
    worst_gap = min(rep.jensen_gap for _, rep in checks)
    acceptance_line(
        "C5 ensemble Jensen invariant",
        ok,
        f"{len(checks)} model/test pairs, smallest (mean tree Brier - ensemble Brier) = {worst_gap:.3e}; failures: {failures or 'none'}",
    )
    assert ok
