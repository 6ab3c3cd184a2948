import numpy as np
import pytest
from oracles import enumerate_bits, pareto_bruteforce

from papforge.metrics import hypervolume, nondominated_mask
from papforge.moea import (AGGREGATIONS, CLASSICS, CROSSOVERS, INIT_SCHEMES, MATING, UPDATE_SCHEMES,
                           AlgorithmDescriptor, BudgetExceeded, BudgetTooSmall, Configuration, HyperparameterDef,
                           InvalidConfiguration, RepairViolation, RunBudget, classic_config, dry_run, run_moea,
                           standard_defs, validate_descriptor)
from papforge.moea import operators as ops
from papforge.moea import schemes
from papforge.problems import generate_instance


def _small(name, pop=20):
    c = classic_config(name)
    return c.with_assignment({"pop_size": pop})


@pytest.fixture(scope="module")
def mmmp4():
    return generate_instance("MMMP", 4, "train", 0)


def test_classic_configs():
    assert classic_config("nsga2").descriptor.update_scheme == "nsga2"
    m = classic_config("moead").descriptor
    assert m.update_scheme == "moead" and m.aggregation == "tchebycheff"
    s = classic_config("spea2").descriptor
    assert s.update_scheme == "spea2" and s.archive
    for name in CLASSICS:
        c = classic_config(name)
        assert validate_descriptor(c.descriptor) == []
        assert c.values()["pop_size"] == 100
        assert c.values()["crossover_rate"] == 0.9
        assert c.values()["mutation_flips"] == 1.0
    with pytest.raises(ValueError):
        classic_config("ibea")


def test_validate_descriptor_reports_violations():
    bad = HyperparameterDef("crossover_rate", "float", 1.5, False, (0.0, 1.0))
    d = AlgorithmDescriptor(hyperparameters=tuple(x for x in standard_defs(tournament_size=2)
                                                  if x.name != "crossover_rate") + (bad,))
    v = validate_descriptor(d)
    assert any("default out of range" in s for s in v)
    d2 = AlgorithmDescriptor(update_scheme="moead", hyperparameters=tuple(standard_defs()))
    assert any("used but undefined" in s for s in validate_descriptor(d2))
    d3 = AlgorithmDescriptor(update_scheme="simulated-annealing", hyperparameters=tuple(standard_defs(tournament_size=2)))
    assert any("unknown value" in s for s in validate_descriptor(d3))


def test_configuration_roundtrip_and_key():
    for name in CLASSICS:
        c = classic_config(name).with_assignment({"pop_size": 37, "mutation_flips": 2.5}, "x")
        back = Configuration.loads(c.dumps())
        assert back == c
        assert back.key() == c.key()
    a = classic_config("nsga2")
    assert a.with_assignment({}, "other").key() == a.key()
    assert a.with_assignment({"pop_size": 50}).key() != a.key()


def test_invalid_assignment_rejected(mmmp4):
    c = classic_config("nsga2").with_assignment({"crossover_rate": 3.0})
    with pytest.raises(InvalidConfiguration):
        run_moea(c, mmmp4, 500)


def test_budget_too_small(mmmp4):
    with pytest.raises(BudgetTooSmall):
        run_moea(classic_config("nsga2"), mmmp4, 50)


def test_budget_equal_to_population_only_initializes():
    inst = generate_instance("MKP", 12, "train", 0)
    res = run_moea(_small("nsga2", 30), inst, 30, seed=1)
    assert res.eval_count == 30
    rng = np.random.default_rng(1)
    X0 = inst.repair(ops.initialize("uniform", 30, 12, rng))
    F0 = inst.evaluate(X0)
    assert {tuple(f) for f in res.F} == pareto_bruteforce(F0)


def test_run_budget_accounting():
    b = RunBudget(10)
    b.charge(7)
    with pytest.raises(BudgetExceeded):
        b.charge(4)
    assert b.remaining() == 3


@pytest.mark.parametrize("name", CLASSICS)
def test_budget_and_archive_invariants(name):
    inst = generate_instance("MKP", 16, "train", 2)
    res = run_moea(_small(name, 24), inst, 500, seed=3, keep_archive=True)
    assert 500 - 24 <= res.eval_count <= 500
    assert len(res.archive_X) == res.eval_count
    assert np.all(nondominated_mask(res.F))
    archive = {tuple(x) for x in res.archive_X}
    assert all(tuple(x) in archive for x in res.X)
    np.testing.assert_allclose(inst.evaluate(res.X), res.F, rtol=1e-12)


@pytest.mark.parametrize("name", CLASSICS)
def test_determinism(name):
    inst = generate_instance("MMMP", 10, "train", 1)
    a = run_moea(_small(name), inst, 400, seed=11)
    b = run_moea(_small(name), inst, 400, seed=11)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.F, b.F)


def test_exhaustive_pareto_recovery(mmmp4):
    res = run_moea(classic_config("nsga2"), mmmp4, 10_000, seed=0)
    F_all = mmmp4.evaluate(enumerate_bits(4))
    assert {tuple(f) for f in res.F} == pareto_bruteforce(F_all)


def test_sign_adapter_matches_maximization():
    # exhaustive run: every vector is evaluated, so the result is the maximization front of F
    inst = generate_instance("MKP", 4, "train", 5)
    res = run_moea(_small("spea2", 8), inst, 2000, seed=2)
    Xall = np.unique(inst.repair(enumerate_bits(4)), axis=0)
    assert {tuple(f) for f in res.F} == pareto_bruteforce(inst.evaluate(Xall))


def test_hv_non_decreasing_in_budget():
    inst = generate_instance("MKP", 20, "train", 3)
    ref = np.zeros(2)
    prev = -1.0
    for B in (100, 300, 900):
        hv = hypervolume(run_moea(_small("nsga2"), inst, B, seed=4).F, ref)
        assert hv >= prev - 1e-12
        prev = hv


def test_repair_before_evaluate_is_enforced():
    class Leaky:
        """MKP whose repair does nothing."""

        def __init__(self):
            self.inner = generate_instance("MKP", 10, "train", 0)
            self.dim, self.n_obj = 10, 2

        def repair(self, X):
            return X

        def is_feasible(self, X):
            return self.inner.is_feasible(X)

        def evaluate(self, X):
            return self.inner.evaluate(X)

    with pytest.raises(RepairViolation):
        run_moea(_small("nsga2"), Leaky(), 200, seed=0)


def test_dry_run_examples():
    assert dry_run(classic_config("nsga2")) == (True, "")
    ok, reason = dry_run(classic_config("nsga2").with_assignment({"pop_size": 0}))
    assert not ok and "budget smaller than population" in reason
    d = AlgorithmDescriptor(crossover="none", hyperparameters=tuple(standard_defs(mutation_flips=0.0,
                                                                                  tournament_size=2)))
    assert dry_run(Configuration(d, {}, "stagnant"))[0]


@pytest.mark.parametrize("update", UPDATE_SCHEMES)
@pytest.mark.parametrize("mating", MATING)
def test_descriptor_space_runs(update, mating):
    init = INIT_SCHEMES[(UPDATE_SCHEMES.index(update) + MATING.index(mating)) % len(INIT_SCHEMES)]
    cx = CROSSOVERS[len(update + mating) % len(CROSSOVERS)]
    shell = AlgorithmDescriptor(init, cx, mating, update, AGGREGATIONS[len(mating) % 2], update == "hv")
    kw = {"tournament_size": 3, "neighborhood_size": 6, "neighborhood_prob": 0.8, "replace_limit": 2,
          "archive_capacity": 30, "init_bias": 0.4}
    need = shell.required_hyperparameters()
    defs = [d for d in standard_defs(pop_size=20, **{k: v for k, v in kw.items() if k in need}) if d.name in need]
    cfg = Configuration(AlgorithmDescriptor(init, cx, mating, update, shell.aggregation, shell.archive, tuple(defs)))
    assert validate_descriptor(cfg.descriptor) == []
    inst = generate_instance("MMMP", 8, "train", 0)
    res = run_moea(cfg, inst, 200, seed=0)
    assert len(res.F) and np.all(nondominated_mask(res.F))


def test_das_dennis_on_simplex():
    W = schemes.das_dennis(3, 15)
    assert len(W) >= 15
    np.testing.assert_allclose(W.sum(axis=1), 1.0)
    assert np.all(W >= 0)


def test_nd_ranks_and_crowding():
    F = np.array([[0, 3], [1, 2], [2, 1], [3, 0], [2, 3], [3, 3]], dtype=float)  # minimization
    r = schemes.nd_ranks(F)
    assert r[0] == r[1] == r[2] == r[3] == 0
    assert r[4] == 1 and r[5] == 2
    cd = schemes.crowding(F[:4])
    assert np.isinf(cd[0]) and np.isinf(cd[3])
    assert cd[1] == pytest.approx(cd[2])


def test_operators_shapes_and_rates():
    rng = np.random.default_rng(0)
    X = ops.initialize("biased", 2000, 10, rng, bias=0.2)
    assert X.shape == (2000, 10) and abs(X.mean() - 0.2) < 0.03
    S = ops.initialize("stratified", 10, 10, rng)
    assert len({int(s.sum()) for s in S}) > 5
    A, B = np.zeros((50, 8), np.uint8), np.ones((50, 8), np.uint8)
    C1, C2 = ops.crossover(A, B, "one-point", 1.0, rng)
    np.testing.assert_array_equal(C1 + C2, 1)
    M = ops.bitflip(np.zeros((4000, 10), np.uint8), 0.1, rng)
    assert abs(M.mean() - 0.1) < 0.01
