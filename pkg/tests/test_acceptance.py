"""Acceptance criteria, one test each; every test records a PASS/FAIL line for the run summary."""
import time
from collections import Counter

import numpy as np
import pytest

from conftest import ScriptedSeeds, TableHasher, make_population
from etmti import bench
from etmti.analysis import fnr_bound, predict_phase2_time, sweep_argmin, sweep_beta_b
from etmti.baseline import run_aloha_baseline
from etmti.channel import symbols_to_str
from etmti.ebud import (SURVIVAL, bits_to_str, build_pv, draw_seed, estimate_unknown, run_deactivation_frame,
                        run_estimation_frame)
from etmti.model import ScenarioParams, generate_population
from etmti.tsmti import build_bv_first, run_phase2

RESULTS = []


def record(n, title, ok, detail, elapsed):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2} {title}: {detail} ({elapsed:.2f} s)"
    RESULTS.append(line)
    print(line)
    return ok


def check(n, title, ok, detail, elapsed, limit=None):
    if limit is not None and elapsed >= limit:
        ok, detail = False, f"{detail}; over the {limit} s budget"
    record(n, title, ok, detail, elapsed)
    assert ok, detail


def test_c01_beta_b_optimum():
    t = time.perf_counter()
    beta, B, t2 = sweep_argmin(sweep_beta_b(3000))
    at_default = predict_phase2_time(3000, 0.95, 3, encoding="flat").T2
    check(1, "(beta, B) grid optimum at K=3000", (beta, B) == (0.95, 3),
          f"argmin beta={beta:g}, B={B}, T2={t2:.1f} ms; T2 at (0.95, 3) = {at_default:.1f} ms",
          time.perf_counter() - t, 5)


def test_c02_fnr_table():
    t = time.perf_counter()
    want = {0.01: 0.007, 0.05: 0.035, 0.10: 0.069, 0.15: 0.099, 0.20: 0.128}
    got = {r: fnr_bound(3000, 0.3, r * 3000) for r in want}
    rel = {r: got[r] / want[r] - 1 for r in want}
    ok = all(abs(v) <= 0.10 for v in rel.values())
    detail = ", ".join(f"{r:g}: {got[r]:.4f} vs {want[r]} ({rel[r]:+.0%})" for r in want)
    check(2, "false-negative bound table", ok, detail, time.perf_counter() - t, 1)


def test_c03_estimation_error_trend():
    t = time.perf_counter()
    K, U = 3000, 1500
    gammas = [1 / 16, 1 / 8, 1 / 4, 1 / 2]
    err = {g: [] for g in gammas}
    for trial in range(100):
        pop = generate_population(ScenarioParams(K=K, r_u=U / K), np.random.SeedSequence(303, spawn_key=(trial,)))
        rng = np.random.default_rng(np.random.SeedSequence(304, spawn_key=(trial,)))
        for g in gammas:
            pop.reset()
            fr = run_estimation_frame(pop, g, draw_seed(rng))
            err[g].append(abs(estimate_unknown(fr.n_x, K, g) - U) / U)
    eps = [float(np.mean(err[g])) for g in gammas]
    monotone = all(b <= a for a, b in zip(eps, eps[1:]))
    in_band = 0.10 <= eps[2] <= 0.30
    detail = "eps for gamma 1/16..1/2 = " + ", ".join(f"{e:.4f}" for e in eps)
    detail += f"; monotone={monotone}, eps(1/4) in [0.10, 0.30]={in_band}"
    check(3, "estimation error trend", monotone and in_band, detail, time.perf_counter() - t, 30)


def test_c04_reliability():
    t = time.perf_counter()
    s31 = bench.presets()["S31"]
    ok, parts = True, []
    for alpha in (0.95, 0.99):
        spec = bench.with_overrides(s31, alpha=alpha, master_seed=404)
        for j, K in enumerate(spec.sweep_values):
            r = np.array([o.r_fn for o in bench.run_trials(spec, j, "etmti")])
            share = float(np.mean(r < 1 - alpha))
            ok &= r.mean() < 1 - alpha and share >= 0.90
            parts.append(f"a={alpha} K={K}: mean {r.mean():.4f}, {share:.0%} below")
    check(4, "reliability in S31", ok, "; ".join(parts), time.perf_counter() - t, 300)


def test_c05_zero_unknown_exactness():
    t = time.perf_counter()
    rng = np.random.default_rng(505)
    bad = 0
    for trial in range(1000):
        K = int(rng.integers(1, 51))
        p = ScenarioParams(K=K, r_m=float(rng.random()))
        pop = generate_population(p, np.random.SeedSequence(505, spawn_key=(trial,)))
        rep = run_phase2(pop, 0.95, 3, np.random.default_rng(trial))
        exact = (rep.identified_missing == pop.missing_ids() and not rep.falsely_present
                 and rep.verified_present == {x.id for x in pop.known if x.present})
        bad += not exact
    check(5, "zero-unknown exactness", bad == 0, f"{bad} of 1000 rounds disagree with ground truth",
          time.perf_counter() - t)


def test_c06_analysis_vs_simulation():
    t = time.perf_counter()
    K = 3000
    p = ScenarioParams(K=K)
    t2, fm = [], []
    for trial in range(100):
        pop = generate_population(p, np.random.SeedSequence(606, spawn_key=(trial,)))
        rep = run_phase2(pop, 0.95, 3, np.random.default_rng(np.random.SeedSequence(607, spawn_key=(trial,))))
        t2.append(rep.ledger.phase2_total)
        fm.append(rep.frames_used)
    pred = predict_phase2_time(K, 0.95, 3)
    mode = Counter(fm).most_common(1)[0][0]
    rel = np.mean(t2) / pred.T2 - 1
    ok = abs(rel) <= 0.10 and abs(mode - pred.F_m) <= 1
    check(6, "analysis vs simulation", ok,
          f"T2 sim {np.mean(t2):.1f} vs pred {pred.T2:.1f} ms ({rel:+.1%}); F_m mode {mode} vs pred {pred.F_m}",
          time.perf_counter() - t)


def test_c07_deactivation_decay():
    t = time.perf_counter()
    K = 3000
    ok, parts = True, []
    for U in (300, 1500):
        for F_d in (1, 2, 4):
            left = []
            for trial in range(100):
                pop = generate_population(ScenarioParams(K=K, r_u=U / K),
                                          np.random.SeedSequence(707, spawn_key=(U, F_d, trial)))
                rng = np.random.default_rng(np.random.SeedSequence(708, spawn_key=(U, F_d, trial)))
                for _ in range(F_d):
                    run_deactivation_frame(pop, draw_seed(rng))
                left.append(sum(x.active for x in pop.unknown))
            want = U * SURVIVAL ** F_d
            rel = np.mean(left) / want - 1
            ok &= abs(rel) <= 0.10
            parts.append(f"U={U} F_d={F_d}: {np.mean(left):.1f} vs {want:.1f} ({rel:+.1%})")
    check(7, "deactivation decay", ok, "; ".join(parts), time.perf_counter() - t)


FIG3 = {7: {1: 1, 2: 3, 3: 5, 4: 7, 5: 8, 6: 9, 7: 1, 8: 3, 9: 5, 10: 8,
            101: 1, 102: 2, 103: 7, 104: 2, 105: 6}}
FIG4 = {
    1: {1: 2, 3: 2, 7: 2, 4: 3, 5: 5, 8: 5, 101: 5, 2: 7, 9: 7, 10: 7, 6: 9, 103: 1},
    2: {1: 1, 3: 2, 7: 2, 5: 1, 8: 2, 101: 3, 2: 3, 9: 2, 10: 2},
    3: {3: 1, 7: 2, 9: 1, 10: 3},
}


def test_c08_golden_traces():
    t = time.perf_counter()
    known = list(range(1, 11))
    pop = make_population(known, [101, 102, 103, 104, 105])
    pv = bits_to_str(build_pv(pop.known, 10, 7, TableHasher(FIG3)))
    fr = run_estimation_frame(pop, 0.8, 7, TableHasher(FIG3))
    fig3 = (pv, symbols_to_str(fr.received), fr.n_x) == ("1010101110", "x0x", 2)

    pop = make_population(known, [101, 103], missing={2, 5, 8})
    _, ac = build_bv_first(pop.known, 1.0, 1, TableHasher(FIG4))
    rep = run_phase2(pop, 1.0, 3, ScriptedSeeds([1, 2, 3]), TableHasher(FIG4), keep_trace=True)
    bvs = [str(f.bv) for f in rep.trace]
    fig4 = (bvs[:2] == ["0 11 10 0 11 0 11 0 10 0", "10 11 0 10 10 0 0 11 10"]
            and dict(zip(known, ac.tolist())) == {1: 1, 3: 1, 7: 1, 5: 2, 8: 2, 2: 3, 9: 3, 10: 3, 4: 0, 6: 0}
            and [f.received for f in rep.trace[:2]] == ["xx", "1000"]
            and rep.verified_present == {1, 3, 4, 6, 7, 9, 10}
            and rep.identified_missing == {2, 5, 8}
            and rep.frames_used == 3)
    check(8, "golden traces", fig3 and fig4,
          f"estimation frame PV={pv} received={symbols_to_str(fr.received)} n_x={fr.n_x}; "
          f"splitting frames {' | '.join(bvs)}, F_m={rep.frames_used}",
          time.perf_counter() - t)


def test_c09_baseline_comparison():
    t = time.perf_counter()
    p = ScenarioParams(K=1000, r_m=0.3)
    tree, aloha = [], []
    for trial in range(50):
        seq = np.random.SeedSequence(909, spawn_key=(trial,))
        tree.append(run_phase2(generate_population(p, seq), 0.95, 3, np.random.default_rng(trial)).ledger.phase2_total)
        aloha.append(run_aloha_baseline(generate_population(p, seq), 1.0, trial).ledger.phase2_total)
    check(9, "tree splitting beats Aloha", np.mean(tree) < np.mean(aloha),
          f"Phase II {np.mean(tree):.1f} ms vs baseline {np.mean(aloha):.1f} ms", time.perf_counter() - t)


def test_c10_determinism(tmp_path):
    t = time.perf_counter()
    same = []
    for i, (name, spec) in enumerate(bench.presets().items()):
        spec = bench.with_overrides(spec, trials=2, master_seed=1010)
        paths = []
        for run in "ab":
            rows = bench.run_scenario(spec, scenario_index=i)
            paths.append(bench.emit_results(rows, tmp_path / f"{name}_{run}.csv"))
        same.append(paths[0].read_bytes() == paths[1].read_bytes())
    check(10, "determinism", all(same), f"{sum(same)} of {len(same)} presets byte-identical",
          time.perf_counter() - t)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
