"""The generic MOEA loop: initialize, then alternate offspring generation and
population update until the evaluation budget is spent.

Problems speak maximization; the loop minimizes the negated objectives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from papforge.metrics import nondominated_mask
from papforge.moea import operators as ops
from papforge.moea import schemes
from papforge.moea.descriptor import Configuration


class InvalidConfiguration(ValueError):
    pass


class BudgetTooSmall(ValueError):
    pass


class RepairViolation(AssertionError):
    """An infeasible solution reached the objective function."""


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class RunBudget:
    max_eval: int
    eval_count: int = 0

    def remaining(self) -> int:
        return self.max_eval - self.eval_count

    def charge(self, n: int) -> None:
        if n > self.remaining():
            raise BudgetExceeded(f"charging {n} evaluations with {self.remaining()} left")
        self.eval_count += n


@dataclass
class ParetoResult:
    """Nondominated solutions among everything evaluated during a run (maximization)."""

    X: np.ndarray
    F: np.ndarray
    eval_count: int
    n_unique: int
    observed_min: np.ndarray = None
    archive_X: np.ndarray = field(repr=False, default=None)
    archive_F: np.ndarray = field(repr=False, default=None)


class _NegatingEvaluator:
    def __init__(self, problem, budget: RunBudget):
        self.problem = problem
        self.budget = budget
        self.xs: list[np.ndarray] = []
        self.fs: list[np.ndarray] = []

    def __call__(self, X: np.ndarray) -> np.ndarray:
        if not np.all(self.problem.is_feasible(X)):
            raise RepairViolation("an unrepaired infeasible solution was passed to evaluate")
        self.budget.charge(len(X))
        F = np.asarray(self.problem.evaluate(X), dtype=np.float64).reshape(len(X), -1)
        if not np.all(np.isfinite(F)):
            raise FloatingPointError("objective function returned non-finite values")
        self.xs.append(X)
        self.fs.append(F)
        return -F


class _Range:
    """Per-objective bounds of internal (minimized) objectives, widened as values arrive."""

    def __init__(self, init_range, F0: np.ndarray):
        if init_range is None:
            self.lo, self.hi = F0.min(axis=0), F0.max(axis=0)
        else:
            r = np.asarray(init_range, dtype=np.float64).reshape(-1, 2)
            self.lo, self.hi = -r[:, 1], -r[:, 0]
        self.update(F0)

    def update(self, F: np.ndarray) -> None:
        self.lo = np.minimum(self.lo, F.min(axis=0))
        self.hi = np.maximum(self.hi, F.max(axis=0))

    def span(self) -> np.ndarray:
        s = self.hi - self.lo
        return np.where(s > 1e-12, s, 1.0)

    def normalize(self, F: np.ndarray) -> np.ndarray:
        return (F - self.lo) / self.span()

    def hv_ref(self) -> np.ndarray:
        return self.hi + 0.1 * self.span()


def run_moea(config: Configuration, problem, budget: RunBudget | int, init_range=None, seed: int = 0,
             keep_archive: bool = False) -> ParetoResult:
    """Run one configured MOEA on ``problem`` until ``budget`` is exhausted."""
    if isinstance(budget, (int, np.integer)):
        budget = RunBudget(int(budget))
    vals = config.values()
    pop = int(vals.get("pop_size", 0))
    if pop < 1 or budget.remaining() < pop:
        raise BudgetTooSmall(f"budget smaller than population (pop_size={pop}, "
                             f"remaining evaluations={budget.remaining()})")
    bad = config.violations()
    if bad:
        raise InvalidConfiguration("; ".join(bad))
    desc = config.descriptor
    dim = problem.dim
    rng = np.random.default_rng(seed)
    ev = _NegatingEvaluator(problem, budget)
    mut_rate = min(1.0, float(vals["mutation_flips"]) / dim)
    cx_rate = float(vals.get("crossover_rate", 0.0))

    X = problem.repair(ops.initialize(desc.init_scheme, pop, dim, rng, float(vals.get("init_bias", 0.5))))
    F = ev(X)
    rng_range = _Range(init_range, F)
    state = _UpdateState(desc, vals, pop, F.shape[1], rng, rng_range)
    state.start(X, F)

    while budget.remaining() > 0:
        lam = min(pop, budget.remaining())
        pX, pF, merit = state.pool()
        if desc.update_scheme == "moead":
            centers = state.next_centers(lam)
            prob = float(vals["neighborhood_prob"]) if desc.mating_selection == "neighborhood" else 0.0
            a, b, local = ops.neighborhood_pairs(state.neighbors, centers, prob, len(pX), rng)
            C, _ = ops.crossover(pX[a], pX[b], desc.crossover, cx_rate, rng)
            ctx = (centers, local)
        else:
            n_pairs = (lam + 1) // 2
            a, b = _mate(desc.mating_selection, n_pairs, pX, pF, merit, vals, rng_range, rng)
            C1, C2 = ops.crossover(pX[a], pX[b], desc.crossover, cx_rate, rng)
            C = np.concatenate([C1, C2])[:lam]
            ctx = None
        C = problem.repair(ops.bitflip(C, mut_rate, rng))
        FC = ev(C)
        rng_range.update(FC)
        state.update(C, FC, ctx)

    return _result(ev, budget, keep_archive)


def _mate(kind, n_pairs, pX, pF, merit, vals, rng_range, rng):
    if kind == "binary-tournament":
        t = int(vals.get("tournament_size", 2))
        w = ops.tournament(merit, 2 * n_pairs, t, rng)
        return w[:n_pairs], w[n_pairs:]
    if kind == "random":
        w = rng.integers(0, len(pX), size=2 * n_pairs)
        return w[:n_pairs], w[n_pairs:]
    Fn = rng_range.normalize(pF)
    d = ((Fn[:, None, :] - Fn[None, :, :]) ** 2).sum(axis=2)
    T = max(1, min(int(vals["neighborhood_size"]), len(pX)))
    nb = np.argsort(d, axis=1, kind="stable")[:, :T]
    centers = rng.integers(0, len(pX), size=n_pairs)
    a, b, _ = ops.neighborhood_pairs(nb, centers, float(vals["neighborhood_prob"]), len(pX), rng)
    return a, b


class _UpdateState:
    def __init__(self, desc, vals, pop, n_obj, rng, rng_range):
        self.desc, self.vals, self.pop, self.rng, self.range = desc, vals, pop, rng, rng_range
        self.scheme = desc.update_scheme
        self.ext = desc.archive and self.scheme != "spea2"
        self.cap = int(vals.get("archive_capacity", pop))
        if self.scheme == "nsga3":
            self.dirs = schemes.das_dennis(n_obj, pop)
        if self.scheme == "moead":
            self.W = schemes.weight_vectors(n_obj, pop, rng)
            self.neighbors = schemes.weight_neighbors(self.W, int(vals["neighborhood_size"]))
            self._order = np.empty(0, dtype=int)
        self.AX = self.AF = None

    def start(self, X, F):
        self.X, self.F = X, F
        self.merit = np.zeros(len(X))
        if self.scheme == "moead":
            self.ideal = F.min(axis=0)
        elif self.scheme == "spea2":
            self.AX, self.AF = X[:0], F[:0]
            self._spea2(X, F)
        else:
            self._select(X, F)
        if self.ext:
            self._archive(X, F)

    def pool(self):
        if self.scheme == "spea2":
            return self.AX, self.AF, self.amerit
        if self.ext and len(self.AX):
            # elites from the external archive rank ahead of the population in tournaments
            merit = np.concatenate([np.arange(len(self.AX)) - len(self.AX), self.merit])
            return np.concatenate([self.AX, self.X]), np.concatenate([self.AF, self.F]), merit
        return self.X, self.F, self.merit

    def next_centers(self, lam):
        if len(self._order) < lam:
            self._order = np.concatenate([self._order, self.rng.permutation(self.pop)])
        c, self._order = self._order[:lam], self._order[lam:]
        return c

    def update(self, C, FC, ctx):
        if self.scheme == "moead":
            self._moead(C, FC, *ctx)
        elif self.scheme == "spea2":
            self._spea2(np.concatenate([self.AX, C]), np.concatenate([self.AF, FC]))
        else:
            self._select(np.concatenate([self.X, C]), np.concatenate([self.F, FC]))
        if self.ext:
            self._archive(C, FC)

    def _select(self, X, F):
        if self.scheme == "nsga2":
            keep, merit = schemes.nsga2_select(F, self.pop)
        elif self.scheme == "nsga3":
            keep, merit = schemes.nsga3_select(F, self.pop, self.dirs)
        else:
            keep, merit = schemes.hv_select(F, self.pop, self.range.hv_ref())
        self.X, self.F, self.merit = X[keep], F[keep], merit.astype(float)

    def _spea2(self, X, F):
        keep, merit = schemes.spea2_select(F, self.range.normalize(F), self.cap)
        self.AX, self.AF, self.amerit = X[keep], F[keep], merit.astype(float)

    def _archive(self, C, FC):
        X = C if self.AX is None else np.concatenate([self.AX, C])
        F = FC if self.AF is None else np.concatenate([self.AF, FC])
        nd = np.flatnonzero(nondominated_mask(-F))
        # drop repeated bit patterns, keep first
        _, first = np.unique(np.packbits(X[nd], axis=1), axis=0, return_index=True)
        nd = nd[np.sort(first)]
        if len(nd) > self.cap:
            cd = schemes.crowding(F[nd])
            nd = nd[schemes.stable_order(F[nd], -cd)[:self.cap]]
        self.AX, self.AF = X[nd], F[nd]

    def _moead(self, C, FC, centers, local):
        agg = self.desc.aggregation
        nr = int(self.vals["replace_limit"])
        for c in range(len(C)):
            self.ideal = np.minimum(self.ideal, FC[c])
            ideal_n = self.range.normalize(self.ideal)
            pool = self.neighbors[centers[c]] if local[c] else np.arange(self.pop)
            pool = self.rng.permutation(pool)
            W = self.W[pool]
            g_new = schemes.aggregate(self.range.normalize(FC[c])[None, :], W, ideal_n, agg)
            g_old = schemes.aggregate(self.range.normalize(self.F[pool]), W, ideal_n, agg)
            hit = pool[g_new <= g_old][:nr]
            self.X[hit] = C[c]
            self.F[hit] = FC[c]


def _result(ev: _NegatingEvaluator, budget: RunBudget, keep_archive: bool) -> ParetoResult:
    VX = np.concatenate(ev.xs)
    VF = np.concatenate(ev.fs)
    _, first = np.unique(np.packbits(VX, axis=1), axis=0, return_index=True)
    first = np.sort(first)
    UX, UF = VX[first], VF[first]
    mask = nondominated_mask(UF)
    return ParetoResult(UX[mask], UF[mask], budget.eval_count, len(first), VF.min(axis=0),
                        VX if keep_archive else None, VF if keep_archive else None)


def dry_run(config: Configuration, seed: int = 0):
    """Smoke-execute a configuration on a fixed 8-bit MMMP instance with 200 evaluations.

    Returns ``(True, "")`` or ``(False, reason)``.
    """
    from papforge.problems import generate_instance

    inst = generate_instance("MMMP", 8, "train", 0)
    try:
        res = run_moea(config, inst, RunBudget(200), seed=seed)
    except Exception as exc:  # failures are reported, not raised
        return False, f"{type(exc).__name__}: {exc}"
    if len(res.F) == 0:
        return False, "empty result set"
    if not np.all(nondominated_mask(res.F)):
        return False, "result set is not mutually nondominated"
    return True, ""
