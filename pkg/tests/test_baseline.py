import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etmti.baseline import baseline_frame_size, run_aloha_baseline
from etmti.model import ScenarioParams, generate_population
from etmti.tsmti import run_phase2


@pytest.mark.parametrize("seed", range(20))
def test_small_instance_exact_without_unknowns(seed):
    pop = generate_population(ScenarioParams(K=20, r_m=0.25), seed)
    rep = run_aloha_baseline(pop, 1.0, seed)
    assert rep.identified_missing == pop.missing_ids()
    assert rep.falsely_present == set()
    assert len(rep.verified_present) == 15


def test_nothing_missing():
    pop = generate_population(ScenarioParams(K=300), 5)
    rep = run_aloha_baseline(pop, 1.0, 5)
    assert len(rep.verified_present) == 300
    assert rep.identified_missing == set() == rep.falsely_present
    assert not rep.depth_capped


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 200), st.floats(0, 1), st.floats(0, 1), st.floats(0.3, 3.0), st.integers(0, 2 ** 32 - 1))
def test_partition(K, r_m, r_u, ff, seed):
    pop = generate_population(ScenarioParams(K=K, r_m=r_m, r_u=r_u), seed)
    rep = run_aloha_baseline(pop, ff, seed)
    parts = [rep.verified_present, rep.identified_missing, rep.falsely_present]
    assert sum(map(len, parts)) == K
    assert set().union(*parts) == {t.id for t in pop.known}
    assert rep.falsely_present <= pop.missing_ids()


def test_unknowns_cause_false_negatives():
    p = ScenarioParams(K=1000, r_m=0.3, r_u=0.5)
    r = [run_aloha_baseline(generate_population(p, t), 1.0, t).r_fn for t in range(5)]
    # frames never exceed K slots while all U unknowns keep answering, so a checked
    # slot is hit with probability at least 1 - (1 - 1/K)**U
    assert np.mean(r) >= 1 - (1 - 1 / 1000) ** 500
    quiet = generate_population(ScenarioParams(K=1000, r_m=0.3), 0)
    assert run_aloha_baseline(quiet, 1.0, 0).r_fn == 0


def test_slot_accounting_costs_more_than_packed_frames():
    p = ScenarioParams(K=500, r_m=0.3)
    slot = run_aloha_baseline(generate_population(p, 1), 1.0, 1)
    packed = run_aloha_baseline(generate_population(p, 1), 1.0, 1, slot_accounting="frame")
    assert slot.frames_used == packed.frames_used
    assert slot.ledger.t_r == packed.ledger.t_r
    assert slot.ledger.t_t > 10 * packed.ledger.t_t


def test_slower_than_tree_splitting():
    p = ScenarioParams(K=1000, r_m=0.3)
    base, tree = [], []
    for t in range(5):
        base.append(run_aloha_baseline(generate_population(p, t), 1.0, t).ledger.phase2_total)
        tree.append(run_phase2(generate_population(p, t), 0.95, 3, np.random.default_rng(t)).ledger.phase2_total)
    assert np.mean(base) > np.mean(tree)


def test_arguments():
    assert baseline_frame_size(0, 1.0) == 1
    assert baseline_frame_size(100, 1.5) == 150
    pop = generate_population(ScenarioParams(K=3), 0)
    with pytest.raises(ValueError):
        run_aloha_baseline(pop, 0)
    with pytest.raises(ValueError):
        run_aloha_baseline(pop, 1.0, slot_accounting="bits")
