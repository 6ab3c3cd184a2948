"""Hard-instance generation: PGPE search over an NIR's embedding.

The search minimizes the portfolio's normalized performance on the candidate
NIR, which is the same as maximizing the NIR's fitness (its negation).  Only
the embedding moves; shared weights, target scaler and repair operator are
inherited from the parent NIR.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from papforge.metrics import DegenerateReference
from papforge.nir.surrogate import NIR
from papforge.portfolio import InstanceReference, run_member
from papforge.seeding import derive_seed

SHAPINGS = ("rank", "raw")


@dataclass(frozen=True)
class PGPEState:
    """Search settings plus the initial spread; ``mu`` defaults to the parent embedding."""

    sigma: float | np.ndarray = 1.0
    alpha_mu: float = 0.05
    alpha_sigma: float = 0.1
    sigma_limit: float = 0.01
    N: int = 8
    max_iter: int = 200
    shaping: str = "rank"
    mu: np.ndarray | None = None

    def validate(self) -> None:
        if self.N < 1 or self.max_iter < 1:
            raise ValueError("N and max_iter must be positive")
        if min(self.alpha_mu, self.alpha_sigma, self.sigma_limit) <= 0:
            raise ValueError("step sizes and sigma_limit must be positive")
        if np.any(np.asarray(self.sigma) <= 0):
            raise ValueError("sigma must be positive")
        if self.shaping not in SHAPINGS:
            raise ValueError(f"shaping must be one of {SHAPINGS}")


@dataclass
class PGPEResult:
    best: np.ndarray
    best_f: float
    mu: np.ndarray
    sigma: np.ndarray
    evaluations: int
    initial_f: float = float("nan")
    trace: list = field(default_factory=list)


def centered_ranks(f: np.ndarray) -> np.ndarray:
    """Utilities in [-0.5, 0.5]; the lowest (best) value gets +0.5."""
    n = len(f)
    if n == 1:
        return np.zeros(1)
    r = np.empty(n)
    r[np.argsort(-f, kind="stable")] = np.arange(n)
    return r / (n - 1) - 0.5


def pgpe_minimize(objective: Callable[[Sequence[np.ndarray]], Sequence[float]], mu0, state: PGPEState, seed: int = 0,
                  on_iter: Callable[[dict], None] | None = None) -> PGPEResult:
    """Minimize ``objective`` with symmetric-sampling PGPE.

    ``objective`` maps a list of candidate vectors to their values, so a caller
    may evaluate one iteration's candidates concurrently.
    """
    state.validate()
    rng = np.random.default_rng(seed)
    mu = np.array(mu0, dtype=np.float64)
    d = mu.size
    sigma = np.broadcast_to(np.asarray(state.sigma, dtype=np.float64), (d,)).copy()
    sigma = np.maximum(sigma, state.sigma_limit)
    N = state.N
    best, best_f = mu.copy(), np.inf
    trace, n_eval, initial_f = [], 0, float("nan")
    for it in range(state.max_iter):
        eps = rng.normal(size=(N, d)) * sigma
        cands = [mu + e for e in eps] + [mu - e for e in eps] + [mu.copy()]
        f = np.array([float(v) for v in objective(cands)], dtype=np.float64)
        n_eval += len(f)
        if it == 0:
            initial_f = f[2 * N]
        # baseline first so that ties keep the parent
        order = [2 * N] + list(range(2 * N))
        for i in order:
            if f[i] < best_f:
                best_f, best = f[i], cands[i].copy()
        S = (eps ** 2 - sigma ** 2) / sigma
        if state.shaping == "rank":
            u = centered_ranks(f[:2 * N])
            up, um = u[:N], u[N:]
            mu = mu + state.alpha_mu * eps.T @ (up - um)
            sigma = sigma + state.alpha_sigma * S.T @ ((up + um) / 2)
        else:
            # raw differences, signed for descent; failed candidates take the worst finite value
            fin = f[np.isfinite(f)]
            g = np.where(np.isfinite(f), f, fin.max() if fin.size else 0.0)
            fp, fm, fb = g[:N], g[N:2 * N], g[2 * N]
            mu = mu - state.alpha_mu * eps.T @ (fp - fm)
            sigma = sigma - state.alpha_sigma * S.T @ ((fp + fm) / 2 - fb)
        sigma = np.maximum(sigma, state.sigma_limit)
        rec = {"iteration": it, "best_f": best_f, "mu_norm": float(np.linalg.norm(mu)),
               "sigma_mean": float(sigma.mean())}
        trace.append(rec)
        if on_iter is not None:
            on_iter(rec)
    return PGPEResult(best, float(best_f), mu, sigma, n_eval, float(initial_f), trace)


REFERENCE_SAMPLE_SEED = 5000


def nir_fitness(P, m, max_eval: int = 2000, seed: int = 0, front_samples: int = 5000) -> float:
    """Negated portfolio performance on an NIR (lower means harder for ``P``).

    The reference front and point come from ``front_samples`` random solutions
    scored by the NIR.  The sample bit strings use a fixed seed, so candidate
    NIRs sharing a parent reuse cached encodings.  A degenerate reference
    front raises ``DegenerateReference``.
    """
    ref = InstanceReference.build(m, point_samples=0, front_samples=front_samples, seed=REFERENCE_SAMPLE_SEED)
    ref.hv_ref()
    init_range = ref.init_range()
    fronts = []
    for c in P:
        out = run_member(c, m, max_eval, init_range, derive_seed(seed, "fitness", c.key()))
        if out.front is not None:
            ref.widen(out.observed_min)
        fronts.append(out.front)
    return -max(ref.normalized(F) for F in fronts)


def nir_performance(P, m, max_eval: int = 2000, seed: int = 0) -> float:
    """Portfolio performance on ``m``; failures score +inf so the search never selects them."""
    try:
        return -nir_fitness(P, m, max_eval, seed)
    except (DegenerateReference, FloatingPointError, ValueError):
        return float("inf")


@dataclass
class MutationResult:
    nir: NIR
    performance: float
    parent_performance: float
    trace: list

    @property
    def fitness(self) -> float:
        return -self.performance


def mutate_nir(m: NIR, P, state: PGPEState | None = None, seed: int = 0, max_eval: int = 2000,
               instance_id: str | None = None, trace_path: str | Path | None = None,
               objective: Callable | None = None) -> MutationResult:
    """Search the embedding space around ``m`` for an NIR on which ``P`` performs worst.

    ``objective`` replaces the portfolio performance as the value to
    minimize (it receives an NIR).  The parent is evaluated as the first
    baseline, so the result is never easier than ``m`` under the same seeds.
    """
    state = state or PGPEState()
    mu0 = m.embedding if state.mu is None else state.mu
    fit = objective or (lambda nir: nir_performance(P, nir, max_eval, seed))
    new_id = instance_id or f"{m.instance_id}~{derive_seed(seed, 'mutant', m.instance_id) % 10**8:08d}"

    def batch(cands):
        return [fit(m.with_embedding(np.asarray(e, dtype=m.shared.dtype), new_id)) for e in cands]

    fh = open(trace_path, "a") if trace_path else None
    try:
        res = pgpe_minimize(batch, mu0, state, derive_seed(seed, "pgpe", m.instance_id),
                            on_iter=(lambda r: fh.write(json.dumps(r) + "\n")) if fh else None)
    finally:
        if fh:
            fh.close()
    best = m.with_embedding(res.best.astype(m.shared.dtype), new_id)
    return MutationResult(best, res.best_f, res.initial_f, res.trace)


def pgpe_defaults(**kw) -> PGPEState:
    return replace(PGPEState(), **kw)
