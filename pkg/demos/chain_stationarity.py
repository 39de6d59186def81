"""Exact gradient norms after DecByzPG on the enumerable chain.

For each seed, epsilon is three times the smallest exact gradient norm a
single-agent PAGE-PG run reaches with the same per-agent trajectory budget.
"""

import argparse

from byzpg.desk import stationarity_trial

ap = argparse.ArgumentParser()
ap.add_argument("--seeds", type=int, default=10)
args = ap.parse_args()

hits = 0
for seed in range(args.seeds):
    frac, eps, best, norms = stationarity_trial(seed)
    hits += frac == 1.0
    print(f"seed {seed}: eps {eps:.4f} (best single {best:.4f})  agent norms "
          + " ".join(f"{n:.4f}" for n in norms) + f"  fraction {frac:.1f}")
print(f"{hits}/{args.seeds} seeds with every agent eps-stationary")
