import json
from dataclasses import replace

import numpy as np
import pytest

import papforge.coevolve as co
from papforge.insgen import MutationResult
from papforge.moea import CLASSICS
from papforge.problems import instance_id


def _cfg(**kw):
    # the bundled pretrained weights are covered by the acceptance suite; keep these runs independent of them
    return co.profile("smoke", **{"seq2seq": "none", **kw})


def _audit(out):
    return [json.loads(line) for line in (out / "audit.jsonl").read_text().splitlines()]


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    state = co.run(co.smoke_instances(0), _cfg(seed=0), out)
    return out, state


def test_profiles_and_validation():
    assert co.profile("paper").K == 4 and co.profile("paper").tuner_trials == 1600
    d = co.profile("desk")
    assert (d.K, d.max_round, d.n_mining) == (2, 2, 4)
    s = co.profile("smoke")
    assert (s.K, s.max_round, s.n_mining, s.provider) == (2, 2, 3, "catalog")
    with pytest.raises(ValueError):
        co.profile("huge")
    for bad in (dict(K=0), dict(max_round=0), dict(provider="oracle"), dict(tuner_trials=0)):
        with pytest.raises(ValueError):
            co.Coevolution(replace(s, **bad))
    assert s.digest() == co.CoevolutionConfig.from_dict(s.to_dict()).digest()
    assert s.digest() != replace(s, seed=1).digest()


def test_initialize_fills_classics_cyclically():
    insts = co.smoke_instances(1)
    st = co.initialize(insts, _cfg(K=6, tuner_trials=1, nir_epochs=2, seed=1))
    labels = [c.descriptor.update_scheme for c in st.portfolio]
    assert labels == list(CLASSICS[:4]) + list(CLASSICS[:2])
    assert len(set(st.portfolio.keys())) == 6
    assert len(st.nir_ids) == len(insts) == len(st.nirs)
    assert st.nir_ids == [instance_id(i) for i in insts]
    with pytest.raises(ValueError):
        co.initialize([], _cfg())


def test_initialize_k4_uses_the_four_classics():
    st = co.initialize(co.smoke_instances(2)[:1], _cfg(K=4, tuner_trials=1, nir_epochs=2, seed=2))
    assert sorted(c.descriptor.update_scheme for c in st.portfolio) == sorted(CLASSICS)


def test_zero_mining_keeps_portfolio():
    cfg = _cfg(n_mining=0, tuner_trials=1, nir_epochs=2, seed=3)
    st = co.initialize(co.smoke_instances(3), cfg)
    before = st.portfolio.keys()
    co.evolve_pap(st, cfg)
    assert sorted(st.portfolio.keys()) == sorted(before)


def test_smoke_run_end_to_end(smoke_run):
    out, state = smoke_run
    assert state.phase == "done" and state.round == 2
    assert state.portfolio.K == 2 and len(set(state.portfolio.keys())) == 2
    for name in ("portfolio.json", "matrix.json", "audit.jsonl", "rounds/round-1", "rounds/round-2",
                 "checkpoint/state.json", "checkpoint/nirs.npz"):
        assert (out / name).exists(), name
    digest = _cfg(seed=0).digest()
    assert json.loads((out / "portfolio.json").read_text())["config_digest"] == digest
    assert json.loads((out / "matrix.json").read_text())["config_digest"] == digest
    recs = _audit(out)
    assert recs[0] == {"round": 1, "event": "config", "config_digest": digest}
    selects = [r for r in recs if r["event"] == "select"]
    assert len(selects) == 2
    for r in selects:
        assert r["objective_after"] >= r["objective_before"]
    # instance evolution happens between rounds only
    assert {r["round"] for r in recs if r["event"] == "mutation"} <= {1}
    sizes = [r["size"] for r in recs if r["event"] == "training-set"]
    assert sizes and sizes[0] >= 3


def test_replacement_rule_in_audit(smoke_run):
    out, _ = smoke_run
    for r in _audit(out):
        if r["event"] == "mutation" and r["outcome"] == "accepted":
            assert r["replaced_fitness"] < r["fitness"]


def test_state_roundtrip(smoke_run):
    out, state = smoke_run
    back, cfg = co.read_state(out / "checkpoint")
    assert cfg == _cfg(seed=0)
    assert back.portfolio.keys() == state.portfolio.keys()
    assert back.nir_ids == state.nir_ids
    X = np.random.default_rng(0).integers(0, 2, (5, 8))
    for nid in back.nir_ids:
        if back.nirs[nid].dim == 8:
            np.testing.assert_array_equal(back.nirs[nid].evaluate(X), state.nirs[nid].evaluate(X))
    with pytest.raises(ValueError):
        co.Coevolution(_cfg(seed=5), out).load(out / "checkpoint")


class Crash(RuntimeError):
    pass


def _crash_on_call(monkeypatch, name, n):
    real = getattr(co, name)
    calls = {"n": 0}

    def wrapper(*a, **kw):
        calls["n"] += 1
        if calls["n"] == n:
            raise Crash(name)
        return real(*a, **kw)

    monkeypatch.setattr(co, name, wrapper)


@pytest.mark.parametrize("name, n", [("mutate_nir", 1), ("tune_contribution", 5)])
def test_resume_reproduces_uninterrupted_run(tmp_path, monkeypatch, smoke_run, name, n):
    out, _ = smoke_run
    with monkeypatch.context() as m:
        _crash_on_call(m, name, n)
        with pytest.raises(Crash):
            co.run(co.smoke_instances(0), _cfg(seed=0), tmp_path)
    st = json.loads((tmp_path / "checkpoint" / "state.json").read_text())
    assert st["phase"] in ("pap", "instances")
    co.run(None, _cfg(seed=0), tmp_path, resume=tmp_path / "checkpoint")
    assert (tmp_path / "portfolio.json").read_bytes() == (out / "portfolio.json").read_bytes()
    assert (tmp_path / "matrix.json").read_bytes() == (out / "matrix.json").read_bytes()


# ---------------------------------------------------------------- instance evolution, controlled


@pytest.fixture(scope="module")
def five_nir_state():
    cfg = _cfg(tuner_trials=1, nir_epochs=2, seed=4)
    insts = co.training_instances("MKP", (8, 9, 10, 11, 12), 1, seed=4)
    return cfg, co.initialize(insts, cfg)


def _controlled(monkeypatch, state, child_fitness):
    base = {nid: -0.1 * (i + 1) for i, nid in enumerate(state.nir_ids)}

    def fake_mutate(m, P, st, seed=0, max_eval=0, instance_id=None, trace_path=None):
        child = m.with_embedding(m.embedding + 0.25, instance_id)
        return MutationResult(child, 0.5, 0.6, [])

    def fake_fitness(self, st, nid):
        return base.get(nid, child_fitness)

    monkeypatch.setattr(co, "mutate_nir", fake_mutate)
    monkeypatch.setattr(co.Coevolution, "_fitness", fake_fitness)
    return base


def _clone(state):
    return co.RoundState(state.round, "instances", state.portfolio, list(state.nir_ids), dict(state.nirs),
                         dict(state.sources), state.shared, state.matrix)


def test_accept_path_and_mutation_bound(monkeypatch, five_nir_state):
    cfg, state = five_nir_state
    base = _controlled(monkeypatch, state, child_fitness=-0.05)
    st = _clone(state)
    copy = list(st.nir_ids)
    co.Coevolution(cfg).evolve_instances(st)
    muts = [r for r in st.audit if r["event"] == "mutation"]
    assert len(muts) == 2  # floor(5 / 2)
    for r in muts:
        assert r["outcome"] == "accepted" and base[r["replaced"]] < r["fitness"]
    assert st.nir_ids[:5] == copy and len(st.nir_ids) == 7
    assert st.round == state.round + 1 and st.phase == "pap"
    for nid in st.nir_ids[5:]:
        assert st.nirs[nid].shared is state.shared
        assert nid in st.matrix.refs


def test_break_path_keeps_copy(monkeypatch, five_nir_state):
    cfg, state = five_nir_state
    _controlled(monkeypatch, state, child_fitness=-9.0)
    st = _clone(state)
    co.Coevolution(cfg).evolve_instances(st)
    muts = [r for r in st.audit if r["event"] == "mutation"]
    assert len(muts) == 1 and muts[0]["outcome"] == "stop"
    assert st.nir_ids == state.nir_ids
    assert muts[0]["child"] not in st.nirs and muts[0]["child"] not in st.matrix.refs
