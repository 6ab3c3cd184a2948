"""Bi-objective contamination control over a chain of processing stages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from papforge.problems.base import as_bits, batched

BETA_RANGES = {
    "train": {"z0": (20.0, 28.0), "gamma": (4.0, 6.0), "alpha": (4.0, 6.0)},
    "test": {"z0": (24.0, 32.0), "gamma": (5.0, 7.0), "alpha": (5.0, 7.0)},
}
U_LIMIT = {"train": 0.1, "test": 0.15}
N_MC = 1000


def contamination_step(z_prev, x_i, alpha_i, gamma_i):
    """z_i = alpha_i (1 - x_i)(1 - z_{i-1}) + (1 - gamma_i x_i) z_{i-1}."""
    return alpha_i * (1 - x_i) * (1 - z_prev) + (1 - gamma_i * x_i) * z_prev


@dataclass(eq=False)
class MCCPInstance:
    costs: np.ndarray
    beta_z0: float
    beta_gamma: float
    beta_alpha: float
    u: float
    n_mc: int = N_MC
    mc_seed: int = 0
    split: str = "train"
    seed: int = 0
    draws: dict | None = None  # explicit z0/gamma/alpha override, mainly for tests
    problem_class: str = field(default="MCCP", init=False)

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=np.float64)
        if self.draws is None:
            rng = np.random.default_rng(self.mc_seed)
            self.z0 = rng.beta(1.0, self.beta_z0, size=self.n_mc)
            self.gamma = rng.beta(1.0, self.beta_gamma, size=(self.n_mc, self.dim))
            self.alpha = rng.beta(1.0, self.beta_alpha, size=(self.n_mc, self.dim))
        else:
            self.z0 = np.broadcast_to(np.asarray(self.draws["z0"], float), (self.n_mc,)).copy()
            self.gamma = np.broadcast_to(np.asarray(self.draws["gamma"], float), (self.n_mc, self.dim)).copy()
            self.alpha = np.broadcast_to(np.asarray(self.draws["alpha"], float), (self.n_mc, self.dim)).copy()
        for a in (self.z0, self.gamma, self.alpha):
            a.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.costs.shape[0]

    n_obj = 2

    def _safe_counts(self, X: np.ndarray) -> np.ndarray:
        """Per solution: sum over stages of the fraction of MC samples with z below u."""
        B = X.shape[0]
        x = X.astype(bool)
        z = np.broadcast_to(self.z0, (B, self.n_mc)).copy()
        safe = np.zeros((B, self.n_mc))
        for i in range(self.dim):
            # same arithmetic as contamination_step with x in {0, 1}
            grown = self.alpha[:, i] * (1 - z) + z
            controlled = (1 - self.gamma[:, i]) * z
            z = np.where(x[:, i:i + 1], controlled, grown)
            safe += z < self.u
        return safe.mean(axis=1)

    @batched
    def evaluate(self, X):
        B = X.shape[0]
        out = np.empty((B, 2))
        step = max(1, int(2e6 // self.n_mc))
        for s in range(0, B, step):
            out[s:s + step, 0] = self._safe_counts(X[s:s + step])
        out[:, 1] = -(X @ self.costs)
        return out

    def simulate_contamination(self, x, k: int) -> np.ndarray:
        """Per-stage contamination of MC sample ``k`` under control plan ``x``."""
        x = as_bits(x, self.dim)
        if x.ndim != 1:
            raise ValueError("simulate_contamination takes a single bit vector")
        if not 0 <= k < self.n_mc:
            raise IndexError(f"MC sample index {k} out of range [0, {self.n_mc})")
        z = self.z0[k]
        out = np.empty(self.dim)
        for i in range(self.dim):
            z = contamination_step(z, x[i], self.alpha[k, i], self.gamma[k, i])
            out[i] = z
        return out

    def repair(self, X):
        return as_bits(X, self.dim)

    def is_feasible(self, X):
        X = as_bits(X, self.dim)
        return np.ones(X.shape[:-1], dtype=bool) if X.ndim == 2 else np.bool_(True)

    def to_dict(self) -> dict:
        d = {"costs": self.costs.tolist(), "beta_z0": self.beta_z0, "beta_gamma": self.beta_gamma,
             "beta_alpha": self.beta_alpha, "u": self.u, "n_mc": self.n_mc, "mc_seed": self.mc_seed}
        if self.draws is not None:
            d["draws"] = {k: np.asarray(v).tolist() for k, v in self.draws.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict, split: str, seed: int) -> "MCCPInstance":
        return cls(costs=np.array(d["costs"]), beta_z0=d["beta_z0"], beta_gamma=d["beta_gamma"],
                   beta_alpha=d["beta_alpha"], u=d["u"], n_mc=d["n_mc"], mc_seed=d["mc_seed"],
                   draws=d.get("draws"), split=split, seed=seed)


def generate(dim: int, split: str, rng: np.random.Generator, seed: int, n_mc: int = N_MC) -> MCCPInstance:
    br = BETA_RANGES[split]
    costs = rng.uniform(0.0, 1.0, size=dim)
    betas = {k: float(rng.uniform(*br[k])) for k in ("z0", "gamma", "alpha")}
    mc_seed = int(rng.integers(0, 2**62))
    return MCCPInstance(costs=costs, beta_z0=betas["z0"], beta_gamma=betas["gamma"],
                        beta_alpha=betas["alpha"], u=U_LIMIT[split], n_mc=n_mc, mc_seed=mc_seed,
                        split=split, seed=seed)
