"""Train neural instance representations on three knapsack instances, compare
the learned scorer with the true objectives, then push one embedding toward an
instance the portfolio finds harder.

    python demos/neural_instances.py
"""

import numpy as np
from scipy.stats import spearmanr

import papforge.coevolve as co
from papforge.insgen import nir_performance, mutate_nir, pgpe_defaults
from papforge.moea import CLASSICS, classic_config
from papforge.portfolio import Portfolio

cfg = co.profile("smoke", nir_samples=600, nir_epochs=60, seed=3)
instances = co.smoke_instances(seed=3)
shared, nirs, report = co.train_instance_nirs(instances, cfg)
print(f"training MSE {report.initial_mse:.4f} -> {report.final_mse:.4f}")

# the scorer should at least order solutions the way the real instance does
rng = np.random.default_rng(0)
for inst, (nid, m) in zip(instances, nirs.items()):
    X = inst.repair(rng.integers(0, 2, (400, inst.dim)))
    rho = spearmanr(m.evaluate(X)[:, 0], inst.evaluate(X)[:, 0]).statistic
    print(f"  {nid}: rank correlation on f1 {rho:.3f}")

P = Portfolio(classic_config(name).with_assignment({"pop_size": 20}) for name in CLASSICS[:2])
parent = next(iter(nirs.values()))
before = nir_performance(P, parent, max_eval=300, seed=1)
res = mutate_nir(parent, P, pgpe_defaults(N=2, max_iter=4), seed=1, max_eval=300)
print(f"portfolio performance on parent {before:.4f}, on mutant {res.performance:.4f}")
print("embedding moved by", round(float(np.linalg.norm(res.nir.embedding - parent.embedding)), 4))
