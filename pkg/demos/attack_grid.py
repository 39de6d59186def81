"""Attack grid: every attack against the naive and the robust algorithm.

Runs the sixteen ``configs/attack_*.yaml`` files (or a subset) and writes one
output directory per config under ``results/attacks``.  Plot with

    gnuplot -e "dir='results/attacks'" demos/plot_attacks.gp

    python demos/attack_grid.py --runs 2 --mode decentralized
"""

import argparse
from pathlib import Path

from byzpg import load_config, run_experiment

ROOT = Path(__file__).resolve().parent.parent
ALGS = {"decentralized": ("decpagepg", "decbyzpg"), "centralized": ("fedpagepg", "byzpg")}

ap = argparse.ArgumentParser()
ap.add_argument("--runs", type=int, default=10)
ap.add_argument("--mode", choices=sorted(ALGS), default="decentralized")
ap.add_argument("--out", default="results/attacks")
args = ap.parse_args()

for attack in ("none", "avg_zero", "large_noise", "random_action"):
    for alg in ALGS[args.mode]:
        name = f"attack_{attack}_{alg}"
        cfg = load_config(ROOT / "configs" / f"{name}.yaml")
        cfg.run.runs = args.runs
        res = run_experiment(cfg, Path(args.out) / name)
        print(f"{name:32s} final mean return {res['mean'][-1]:7.2f} +- {res['std'][-1]:6.2f} "
              f"at {res['grid'][-1]} trajectories/agent")
