"""How fast does an Oldroyd-B flow approach its Navier-Stokes limit?

Runs a small epsilon sweep from ill-prepared data and prints the three
convergence metrics together with their log-log slopes.

    python demos/newtonian_limit.py [--resolution 32]
"""

import argparse

from viscolimit.config import from_dict
from viscolimit.sweep import CONVERGENCE_METRICS, sweep

ap = argparse.ArgumentParser()
ap.add_argument("--resolution", type=int, default=32)
args = ap.parse_args()

cfg = from_dict(
    {
        "grid": {"resolution": args.resolution},
        "params": {"epsilons": [1e-1, 1e-2, 1e-3]},
        "run": {"horizon": 0.5},
    }
)
report = sweep(cfg)

print(f"{'eps':>8} " + " ".join(f"{m:>10}" for m in CONVERGENCE_METRICS))
for row in report.rows:
    print(f"{row['eps']:8.0e} " + " ".join(f"{row[m]:10.4g}" for m in CONVERGENCE_METRICS))
for m in CONVERGENCE_METRICS:
    print(f"{m}: slope {report.slopes[m]:.3f}")
# slopes are measured orders; the theory only promises that they are positive
