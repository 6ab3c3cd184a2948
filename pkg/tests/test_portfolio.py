import json
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import best_subset_bruteforce

from papforge.metrics import hypervolume
from papforge.moea import CLASSICS, classic_config
from papforge.portfolio import (InstanceReference, MemberOutcome, MissingEntry, PerformanceMatrix, Portfolio,
                                aas_bounds, evaluate_configs, pap_performance, run_portfolio, select_portfolio,
                                select_subset, subset_objective)
from papforge.problems import generate_instance, instance_id


def _members(k=4, pop=20):
    return [classic_config(CLASSICS[i]).with_assignment({"pop_size": pop}) for i in range(k)]


@pytest.fixture(scope="module")
def mkp():
    inst = generate_instance("MKP", 16, "train", 0)
    return inst, instance_id(inst)


def _matrix(inst, iid, path=None):
    m = PerformanceMatrix(path)
    m.add_instance(iid, InstanceReference.build(inst, 2000, 500, seed=1))
    return m


def test_portfolio_distinct_members():
    P = Portfolio(_members())
    assert P.K == 4 and len(P.keys()) == 4
    with pytest.raises(ValueError):
        Portfolio([classic_config("nsga2"), classic_config("nsga2").with_assignment({}, "copy")])
    back = Portfolio.from_dict(json.loads(P.dumps()))
    assert back.keys() == P.keys()


def test_pap_performance_examples():
    assert pap_performance([0.8, 0.9, 0.7, 0.85]) == 0.9
    assert pap_performance([0.42]) == 0.42
    assert pap_performance([0.8, 0.9, 0.9]) == 0.9


def test_run_portfolio_is_max_of_members(mkp):
    inst, iid = mkp
    m = _matrix(inst, iid)
    run = run_portfolio(Portfolio(_members()), inst, iid, m, max_eval=300, seed=2, workers=1)
    assert run.performance == max(run.values)
    assert all(v >= 0 for v in run.values)
    single = run_portfolio(Portfolio(_members(1)), inst, iid, m, max_eval=300, seed=2, workers=1)
    assert single.performance == run.values[0]


def test_member_value_independent_of_portfolio(mkp):
    inst, iid = mkp
    a = run_portfolio(Portfolio(_members(2)), inst, iid, _matrix(inst, iid), 300, seed=5, workers=1)
    b = run_portfolio(Portfolio(_members(2)[::-1]), inst, iid, _matrix(inst, iid), 300, seed=5, workers=1)
    # same references are widened in a different order, but the fronts are identical
    for fa, fb in zip(a.fronts, b.fronts[::-1]):
        np.testing.assert_array_equal(fa, fb)


def test_parallel_matches_sequential(mkp):
    inst, iid = mkp
    seq = run_portfolio(Portfolio(_members()), inst, iid, _matrix(inst, iid), 300, seed=3, workers=1)
    par = run_portfolio(Portfolio(_members()), inst, iid, _matrix(inst, iid), 300, seed=3, workers=2)
    assert seq.values == par.values


def test_failed_member_scores_zero(mkp):
    inst, iid = mkp
    m = _matrix(inst, iid)
    bad = classic_config("nsga2").with_assignment({"pop_size": 400}, "too-big")
    vals = evaluate_configs([bad] + _members(1), inst, iid, m, 200, seed=0, workers=1)
    assert vals[0] == 0.0 and vals[1] > 0
    e = m.entries[(bad.key(), iid)]
    assert e.failed and "BudgetTooSmall" in e.error


def test_reference_widening_rescales_column(mkp):
    inst, iid = mkp
    m = _matrix(inst, iid)
    c = _members(1)[0]
    ref = m.refs[iid]
    front = ref.front[:3]
    m.record(c, iid, MemberOutcome(front, ref.ref.copy(), 0.0))
    before = m.value(c, iid)
    lower = ref.ref - 1.0
    m.record(_members(2)[1], iid, MemberOutcome(front, lower, 0.0))
    np.testing.assert_array_equal(m.refs[iid].ref, lower)
    after = m.value(c, iid)
    assert after == pytest.approx(hypervolume(front, lower) / hypervolume(ref.front, lower))
    assert after != before


def test_missing_entry_and_table(mkp):
    inst, iid = mkp
    m = _matrix(inst, iid)
    with pytest.raises(MissingEntry):
        m.value(_members(1)[0], iid)
    with pytest.raises(MissingEntry):
        select_portfolio(m, _members(2), [iid], 1)


def test_matrix_snapshot_and_record_file(tmp_path, mkp):
    inst, iid = mkp
    path = tmp_path / "records.jsonl"
    m = _matrix(inst, iid, path)
    evaluate_configs(_members(3), inst, iid, m, 200, seed=1, workers=1)
    back = PerformanceMatrix.from_dict(json.loads(json.dumps(m.to_dict())))
    np.testing.assert_array_equal(back.table(_members(3), [iid]), m.table(_members(3), [iid]))
    recs = [json.loads(line) for line in path.read_text().splitlines()]
    assert sum(r["event"] == "record" for r in recs) == 3
    for r in recs:
        assert {"config", "instance", "raw_hv", "hv_ref", "normalized", "wall_time"} <= set(r)
    last = {}
    for r in recs:
        last[r["config_key"]] = r["normalized"]
    for c in _members(3):
        assert last[c.key()] == m.value(c, iid)


def test_select_subset_examples():
    V = np.random.default_rng(0).uniform(size=(6, 4))
    assert select_subset(V, 6) == tuple(range(6))
    D = np.full((5, 3), 0.5)
    D[3] = 0.9
    assert select_subset(D, 1) == (3,)
    best, arg = best_subset_bruteforce(V, 2)
    assert select_subset(V, 2) == arg
    with pytest.raises(ValueError):
        select_subset(V, 7)
    with pytest.raises(MissingEntry):
        select_subset(np.array([[1.0, np.nan]]), 1)


def test_select_subset_ties_lexicographic():
    V = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    assert select_subset(V, 2) == (0, 2)


@settings(max_examples=100, deadline=None)
@given(V=arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 6)), elements=st.floats(0, 2, width=32)),
       data=st.data())
def test_select_subset_optimal(V, data):
    K = data.draw(st.integers(1, min(4, V.shape[0])))
    rows = select_subset(V, K)
    best, _ = best_subset_bruteforce(V, K)
    assert subset_objective(V, rows) == best


@settings(max_examples=100, deadline=None)
@given(V=arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(1, 6)), elements=st.floats(0, 2, width=32)),
       data=st.data())
def test_superset_selection_never_degrades(V, data):
    K = data.draw(st.integers(1, V.shape[0] - 1))
    old = data.draw(st.sampled_from(list(combinations(range(V.shape[0]), K))))
    assert subset_objective(V, select_subset(V, K)) >= subset_objective(V, old)


@settings(max_examples=100, deadline=None)
@given(V=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(0, 2, width=32)),
       extra=arrays(np.float64, st.integers(1, 6), elements=st.floats(0, 2, width=32)))
def test_adding_a_member_never_hurts(V, extra):
    if len(extra) != V.shape[1]:
        extra = np.resize(extra, V.shape[1])
    assert np.all(np.vstack([V, extra]).max(axis=0) >= V.max(axis=0))


def test_aas_bounds_examples():
    b = aas_bounds([[0.8], [0.9]])
    assert b["oracle"][0] == 0.9 and b["worst"][0] == 0.8 and b["random"][0] == pytest.approx(0.85)
    same = aas_bounds([[0.5, 0.7], [0.5, 0.7]])
    np.testing.assert_array_equal(same["oracle"], same["worst"])
    np.testing.assert_array_equal(same["oracle"], same["random"])
    assert same["mean"]["oracle"] == pytest.approx(0.6)


@settings(max_examples=100, deadline=None)
@given(V=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(0, 2, width=32)))
def test_aas_ordering(V):
    b = aas_bounds(V)
    assert np.all(b["oracle"] >= b["random"] - 1e-12)
    assert np.all(b["random"] >= b["worst"] - 1e-12)


def test_instance_reference_roundtrip(mkp):
    inst, _ = mkp
    r = InstanceReference.build(inst, 1000, 300, seed=4)
    r.widen(r.ref - 0.5)
    back = InstanceReference.from_dict(json.loads(json.dumps(r.to_dict())))
    assert back.hv_ref() == r.hv_ref()
    np.testing.assert_array_equal(back.init_range(), r.init_range())
