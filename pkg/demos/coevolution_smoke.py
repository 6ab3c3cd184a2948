"""Run the smallest co-evolution profile end to end and walk through its audit log.

    python demos/coevolution_smoke.py [out_dir]
"""

import json
import sys
import tempfile
from pathlib import Path

import papforge.coevolve as co

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="papforge-smoke-"))
cfg = co.profile("smoke", seed=0)
state = co.run(co.smoke_instances(0), cfg, out, log=lambda rec: print("  ", rec.get("event"), rec.get("round", "")))

print("\nfinal portfolio:")
for c in state.portfolio:
    print(f"  {c.label:30s} {c.descriptor.update_scheme}")

for rec in map(json.loads, (out / "audit.jsonl").read_text().splitlines()):
    if rec["event"] == "select":
        print(f"round {rec['round']}: objective {rec['objective_before']:.4f} -> {rec['objective_after']:.4f}")
    elif rec["event"] == "mutation":
        print(f"round {rec['round']}: mutation {rec['outcome']}")

print(f"\noutputs in {out} (portfolio.json, matrix.json, audit.jsonl, checkpoint/)")
