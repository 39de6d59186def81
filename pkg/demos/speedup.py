"""Trajectories-to-threshold for honest federations of 1, 5 and 13 agents.

Each run trains DecByzPG on CartPole (H = 200) until the trailing 10-iteration
mean return reaches 150 and reports the per-agent trajectory count.  With more
agents every agent needs fewer samples of its own.

    python demos/speedup.py --seeds 3
"""

import argparse

import numpy as np

from byzpg.desk import trajectories_to_threshold

ap = argparse.ArgumentParser()
ap.add_argument("--seeds", type=int, default=10)
ap.add_argument("--K", type=int, nargs="+", default=[1, 5, 13])
args = ap.parse_args()

table = {}
for K in args.K:
    table[K] = [trajectories_to_threshold(K, s) for s in range(args.seeds)]
    print(f"K={K:2d}  median {np.median(table[K]):7.0f}   per seed {[int(x) if np.isfinite(x) else 'inf' for x in table[K]]}")

base = np.median(table[args.K[0]])
for K in args.K[1:]:
    print(f"speed-up K={K} vs K={args.K[0]}: {base / np.median(table[K]):.2f}x")
