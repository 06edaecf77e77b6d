"""Arrested versus explosive replication: compare end-of-run compartments.

    python demos/replication_patterns.py [out_dir]
"""

import sys

import numpy as np

from hbvsim.experiments import run_replication_patterns, write_scenario

res = run_replication_patterns(horizon=100.0)
arrested, explosive = res.runs
print(f"{'state':>5} {'arrested':>12} {'explosive':>12} {'decades':>8}")
for k, name in enumerate(arrested.names):
    a, e = arrested.y[-1, k], explosive.y[-1, k]
    print(f"{name:>5} {a:12.4g} {e:12.4g} {np.log10(e / a):8.2f}")
print(f"V ratio explosive/arrested: {res.metrics['V_ratio_explosive_over_arrested']:.3g}")

if len(sys.argv) > 1:
    write_scenario(res, sys.argv[1])
