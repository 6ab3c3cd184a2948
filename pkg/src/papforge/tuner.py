"""Hyperparameter search for one portfolio member.

The strategy is deliberately simple: the starting assignment is trial 0, and
every later trial is either a uniform random sample of the space or a local
perturbation of the incumbent, with equal probability.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from papforge.moea.descriptor import Configuration, HyperparameterDef
from papforge.portfolio import PerformanceMatrix, Portfolio, evaluate_configs

LOCAL_STEP = 0.1


@dataclass
class Trial:
    index: int
    assignment: dict
    value: float
    wall: float
    error: str = ""


@dataclass
class TuningTask:
    space: list[HyperparameterDef]
    objective: Callable[[dict], float]
    trial_budget: int
    seed: int = 0
    initial: dict | None = None
    history_path: str | Path | None = None


@dataclass
class TuningResult:
    best: dict
    best_value: float
    history: list[Trial] = field(default_factory=list)


def _sample(d: HyperparameterDef, rng) -> object:
    if d.categorical:
        return d.range[int(rng.integers(len(d.range)))]
    if d.kind == "bool":
        return bool(rng.integers(2))
    lo, hi = d.range
    if d.kind == "int":
        return int(rng.integers(int(lo), int(hi) + 1))
    return float(rng.uniform(lo, hi))


def _perturb(d: HyperparameterDef, value, rng) -> object:
    if d.categorical or d.kind == "bool":
        return _sample(d, rng)
    lo, hi = d.range
    step = LOCAL_STEP * (hi - lo)
    v = float(np.clip(value + rng.uniform(-step, step), lo, hi))
    if d.kind == "int":
        v = int(np.clip(round(v), lo, hi))
    return v


def random_assignment(space, rng) -> dict:
    return {d.name: _sample(d, rng) for d in space}


def local_assignment(space, incumbent: dict, rng) -> dict:
    return {d.name: _perturb(d, incumbent[d.name], rng) for d in space}


def tune(task: TuningTask) -> TuningResult:
    """Return the best assignment seen within ``task.trial_budget`` objective calls."""
    if task.trial_budget < 1:
        raise ValueError("trial_budget must be at least 1")
    space = list(task.space)
    if not space:
        raise ValueError("tuning space is empty")
    rng = np.random.default_rng(task.seed)
    start = {d.name: d.default for d in space}
    if task.initial:
        start.update({k: v for k, v in task.initial.items() if k in start})
    history: list[Trial] = []
    seen: dict[str, float] = {}
    best, best_value = dict(start), -math.inf
    fh = open(task.history_path, "a") if task.history_path else None
    try:
        for t in range(task.trial_budget):
            if t == 0:
                a = dict(start)
            elif rng.random() < 0.5:
                a = random_assignment(space, rng)
            else:
                a = local_assignment(space, best, rng)
            sig = json.dumps(a, sort_keys=True)
            t0 = time.perf_counter()
            err = ""
            if sig in seen:
                value = seen[sig]
            else:
                try:
                    value = float(task.objective(a))
                    if math.isnan(value):
                        value = -math.inf
                except Exception as exc:  # a failing trial is scored, not fatal
                    value, err = -math.inf, f"{type(exc).__name__}: {exc}"
                seen[sig] = value
            trial = Trial(t, a, value, time.perf_counter() - t0, err)
            history.append(trial)
            if fh:
                rec = {"trial": t, "assignment": a, "objective": value if math.isfinite(value) else None,
                       "wall_time": round(trial.wall, 6)}
                if err:
                    rec["error"] = err
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            if value > best_value:
                best, best_value = dict(a), value
    finally:
        if fh:
            fh.close()
    return TuningResult(best, best_value, history)


def portfolio_score(P, evaluables: dict, matrix: PerformanceMatrix, max_eval: int, seed: int,
                    workers: int | None = 1) -> float:
    """Sum over instances of the best member value; missing entries are run first."""
    return sum(max(evaluate_configs(list(P), ev, iid, matrix, max_eval, seed, workers))
               for iid, ev in evaluables.items())


def tune_contribution(target: Configuration, others, evaluables: dict, matrix: PerformanceMatrix,
                      trial_budget: int, max_eval: int = 10_000, seed: int = 0, tuning_seed: int | None = None,
                      history_path=None, workers: int | None = 1) -> tuple[Configuration, TuningResult]:
    """Tune ``target`` to maximize the summed performance of ``others`` plus the target.

    ``evaluables`` maps instance id to an evaluable already registered in
    ``matrix``; ``seed`` is the root for member runs.  The target's current
    values are trial 0.  Assignments that reproduce one of ``others`` score
    -inf, keeping portfolio members distinct.
    """
    others = list(others)
    other_keys = {m.key() for m in others}
    base = {iid: (max(evaluate_configs(others, ev, iid, matrix, max_eval, seed, workers)) if others else 0.0)
            for iid, ev in evaluables.items()}

    def objective(a: dict) -> float:
        cand = target.with_assignment(a)
        if cand.key() in other_keys:
            return -math.inf
        return sum(max(base[iid], evaluate_configs([cand], ev, iid, matrix, max_eval, seed)[0])
                   for iid, ev in evaluables.items())

    space = list(target.descriptor.hyperparameters)
    res = tune(TuningTask(space, objective, trial_budget, seed if tuning_seed is None else tuning_seed,
                          initial=target.values(), history_path=history_path))
    return target.with_assignment(res.best), res


def tune_member_in_portfolio(P: Portfolio, index: int, evaluables: dict, matrix: PerformanceMatrix,
                             trial_budget: int, max_eval: int = 10_000, seed: int = 0,
                             history_path=None, tuning_seed: int | None = None,
                             workers: int | None = 1) -> tuple[Portfolio, TuningResult]:
    """Tune member ``index`` for its contribution to the portfolio; the other members stay fixed."""
    members = list(P)
    if not 0 <= index < len(members):
        raise IndexError(f"member index {index} out of range for K={len(members)}")
    others = members[:index] + members[index + 1:]
    members[index], res = tune_contribution(members[index], others, evaluables, matrix, trial_budget, max_eval,
                                            seed, tuning_seed, history_path, workers)
    return Portfolio(members), res
