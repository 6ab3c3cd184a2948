"""Build a four-member portfolio of classic MOEAs, score it on a few knapsack
instances, and pick the best two-member subset from the resulting matrix.

    python demos/portfolio_basics.py
"""

import numpy as np

from papforge.moea import CLASSICS, classic_config
from papforge.portfolio import (InstanceReference, PerformanceMatrix, Portfolio, aas_bounds, evaluate_configs,
                                select_subset)
from papforge.problems import generate_instance, instance_id

BUDGET = 1000

instances = [generate_instance("MKP", d, "train", seed=s) for s, d in enumerate((12, 16, 20))]
P = Portfolio(classic_config(name) for name in CLASSICS)
matrix = PerformanceMatrix()

# Each instance gets a reference point and a sampled reference front; scores are
# hypervolume relative to that front, so 1.0 means "as good as random sampling".
for inst in instances:
    iid = instance_id(inst)
    matrix.add_instance(iid, InstanceReference.build(inst, 20_000, 1000, seed=1))
    evaluate_configs(list(P), inst, iid, matrix, BUDGET, seed=7)

ids = [instance_id(i) for i in instances]
V = matrix.table(list(P), ids)
print("normalized hypervolume (rows: members, columns: instances)")
for name, row in zip(CLASSICS, V):
    print(f"  {name:8s}", "  ".join(f"{v:.4f}" for v in row))

rows = select_subset(V, 2)
print("best pair:", [CLASSICS[r] for r in rows], "objective", round(float(V[list(rows)].max(axis=0).sum()), 4))

b = aas_bounds(V[list(rows)])
print("per-instance oracle / random / worst selection:")
for iid, o, r, w in zip(ids, b["oracle"], b["random"], b["worst"]):
    print(f"  {iid:22s} {o:.4f} >= {r:.4f} >= {w:.4f}")
assert np.all(b["oracle"] >= b["random"]) and np.all(b["random"] >= b["worst"])
