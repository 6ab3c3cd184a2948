"""Offline proposal provider: a fixed library of descriptor variants visited in a seeded cycle."""

from __future__ import annotations

from papforge.moea.descriptor import AlgorithmDescriptor, standard_defs
from papforge.opgen.proposal import OperatorProposal
from papforge.seeding import derive_seed

_EXTRA_DEFAULTS = {"tournament_size": 2, "neighborhood_size": 20, "neighborhood_prob": 0.9, "replace_limit": 2,
                   "archive_capacity": 100, "init_bias": 0.5}


def _variant(description, update, crossover="uniform", mating="binary-tournament", init="uniform",
             archive=False, aggregation="tchebycheff", pop=100, cx=0.9, flips=1.0, **extra) -> OperatorProposal:
    shell = AlgorithmDescriptor(init, crossover, mating, update, aggregation, archive, (), description)
    needed = [n for n in shell.required_hyperparameters() if n in _EXTRA_DEFAULTS]
    kw = {n: extra.get(n, _EXTRA_DEFAULTS[n]) for n in needed}
    defs = [d for d in standard_defs(pop, cx, flips, **kw) if d.name in shell.required_hyperparameters()]
    return OperatorProposal(tuple(defs), shell, description)


CATALOG: tuple[OperatorProposal, ...] = (
    _variant("dominance sorting with crowding, two-point crossover and heavier mutation", "nsga2",
             crossover="two-point", flips=2.0),
    _variant("dominance sorting with crowding, stratified-density start and an elite archive", "nsga2",
             init="stratified", archive=True, archive_capacity=150),
    _variant("dominance sorting with crowding, objective-space neighbourhood mating", "nsga2",
             mating="neighborhood", neighborhood_size=10, neighborhood_prob=0.8),
    _variant("dominance sorting with crowding, sparse biased start for knapsack-like constraints", "nsga2",
             init="biased", init_bias=0.2, flips=1.5),
    _variant("dominance sorting with crowding, mutation-only variation with a small population", "nsga2",
             crossover="none", pop=40, flips=2.5),
    _variant("dominance sorting with crowding, large tournaments for strong selection pressure", "nsga2",
             tournament_size=5, cx=0.7),
    _variant("reference-direction niching with one-point crossover", "nsga3", crossover="one-point"),
    _variant("reference-direction niching with random mating and an elite archive", "nsga3", mating="random",
             archive=True, archive_capacity=80),
    _variant("reference-direction niching, stratified start and low crossover rate", "nsga3", init="stratified",
             cx=0.5, flips=1.5),
    _variant("reference-direction niching, dense biased start", "nsga3", init="biased", init_bias=0.7),
    _variant("decomposition with weighted-sum subproblems", "moead", mating="neighborhood",
             aggregation="weighted-sum"),
    _variant("decomposition with Tchebycheff subproblems and two-point crossover", "moead",
             mating="neighborhood", crossover="two-point", neighborhood_size=10, replace_limit=1),
    _variant("decomposition with global tournament mating and wide replacement", "moead", replace_limit=5,
             neighborhood_size=30),
    _variant("decomposition with Tchebycheff subproblems, stratified start and an elite archive", "moead",
             mating="neighborhood", init="stratified", archive=True, neighborhood_prob=0.7),
    _variant("decomposition with random mating and heavier mutation", "moead", mating="random", flips=2.0,
             neighborhood_size=15),
    _variant("strength fitness with density truncation, two-point crossover", "spea2", crossover="two-point",
             archive=True),
    _variant("strength fitness with density truncation, small archive and random mating", "spea2",
             mating="random", archive=True, archive_capacity=50),
    _variant("strength fitness with density truncation, biased start", "spea2", init="biased", archive=True,
             init_bias=0.3, flips=1.5),
    _variant("strength fitness with density truncation, neighbourhood mating", "spea2", mating="neighborhood",
             archive=True, neighborhood_size=8, neighborhood_prob=0.9),
    _variant("hypervolume-contribution truncation with uniform crossover", "hv", pop=60),
    _variant("hypervolume-contribution truncation, one-point crossover and an elite archive", "hv",
             crossover="one-point", archive=True, pop=50, archive_capacity=100),
    _variant("hypervolume-contribution truncation, mutation-only with stratified start", "hv", crossover="none",
             init="stratified", pop=40, flips=2.0),
    _variant("dominance sorting with crowding, one-point crossover and random mating", "nsga2",
             crossover="one-point", mating="random", pop=150),
    _variant("reference-direction niching with neighbourhood mating and heavy mutation", "nsga3",
             mating="neighborhood", flips=3.0, neighborhood_size=12, neighborhood_prob=0.6),
)


def catalog_size() -> int:
    return len(CATALOG)


def catalog_proposal(round_index: int, iteration: int, seed: int = 0) -> OperatorProposal:
    """Entry visited at ``iteration`` of ``round_index``; the cycle's start depends on (seed, round)."""
    start = derive_seed(seed, "catalog", round_index) % len(CATALOG)
    return CATALOG[(start + iteration) % len(CATALOG)]
