"""Seeded multi-run experiments, metrics CSV, summaries and replay.

Output directory layout::

    config.yaml        resolved configuration (load_config round-trips it)
    metrics.csv        one row per (run, iteration), see METRIC_COLUMNS
    summary.csv        mean/std of smoothed honest return on a trajectory grid
    summary.dat        the same, whitespace separated for gnuplot
    thresholds.csv     trajectories-to-threshold per run (when run.threshold is set)
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .algorithms import Simulation
from .config import ExperimentConfig, load_config, save_config
from .errors import ConfigurationError, SimulationError

METRIC_COLUMNS = ("run", "seed", "iteration", "trajectories", "mean_honest_return", "branch_large",
                  "max_importance_weight", "honest_diameter")
OUT_ENV_VAR = "BYZPG_OUT"


def agent_columns(K: int) -> list[str]:
    return [f"return_agent_{k}" for k in range(K)]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if np.isnan(x) else repr(x)


def metrics_row(run: int, seed: int, rec) -> list[str]:
    returns = np.where(rec.honest, rec.agent_returns, np.nan)
    return [_fmt(v) for v in (run, seed, rec.t, rec.trajectories, rec.mean_honest_return, rec.large,
                              rec.max_importance_weight, rec.honest_diameter)] + [_fmt(r) for r in returns]


def make_simulation(cfg: ExperimentConfig, seed: int) -> Simulation:
    return Simulation(cfg.build_env(), cfg.policy, cfg.algo, cfg.aggregator, cfg.agreement,
                      cfg.adversary, seed=seed, keep_history=cfg.run.keep_history)


# -- curve utilities ---------------------------------------------------------------


def smoothed(values, window: int) -> np.ndarray:
    """Trailing mean over the last ``window`` finite entries' positions (NaNs skipped)."""
    v = np.asarray(values, dtype=np.float64)
    out = np.empty_like(v)
    for i in range(len(v)):
        w = v[max(0, i - window + 1):i + 1]
        w = w[np.isfinite(w)]
        out[i] = w.mean() if w.size else np.nan
    return out


@dataclass
class Curve:
    """Per-run learning curve: trajectories sampled per agent vs smoothed honest return."""

    trajectories: np.ndarray
    returns: np.ndarray

    @classmethod
    def from_records(cls, records, window: int = 10) -> "Curve":
        traj = np.array([r.trajectories for r in records], dtype=np.int64)
        ret = smoothed([r.mean_honest_return for r in records], window)
        return cls(traj, ret)

    def at_budget(self, budget: float) -> float:
        """Smoothed return at the last iteration whose trajectory count is within ``budget``."""
        idx = np.searchsorted(self.trajectories, budget, side="right") - 1
        return float(self.returns[idx]) if idx >= 0 else float("nan")

    def trajectories_to(self, threshold: float) -> float:
        hit = np.flatnonzero(self.returns >= threshold)
        return float(self.trajectories[hit[0]]) if hit.size else float("inf")

    def on_grid(self, grid) -> np.ndarray:
        return np.array([self.at_budget(g) for g in grid])


def run_single(cfg: ExperimentConfig, seed: int, T: int | None = None, callback=None):
    sim = make_simulation(cfg, seed)
    sim.run(T, cfg.run.trajectory_budget, callback)
    return sim


# -- experiments -------------------------------------------------------------------


def resolve_out_dir(cfg: ExperimentConfig, out=None) -> Path:
    if out is not None:
        return Path(out)
    return Path(os.environ.get(OUT_ENV_VAR) or cfg.run.output_dir)


def run_experiment(cfg: ExperimentConfig, out_dir=None, seeds=None, log=None) -> dict:
    """Run every seed, write the output files and return the summary."""
    out = resolve_out_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(seeds) if seeds is not None else cfg.run.run_seeds()
    save_config(cfg, out / "config.yaml")
    K = cfg.algo.K
    curves = []
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(METRIC_COLUMNS) + agent_columns(K))
        for run_id, seed in enumerate(seeds):
            def emit(rec, run_id=run_id, seed=seed):
                if rec.t % cfg.run.metric_every == 0:
                    writer.writerow(metrics_row(run_id, seed, rec))

            try:
                sim = run_single(cfg, seed, callback=emit)
            except (SimulationError, FloatingPointError) as exc:
                raise SimulationError(f"run {run_id} (seed {seed}) failed: {exc}; "
                                      f"replay with --seed {seed} --runs 1") from exc
            curves.append(Curve.from_records(sim.records, cfg.run.smoothing_window))
            if log:
                log(f"run {run_id} seed {seed}: {sim.state.t} iterations, "
                    f"{curves[-1].trajectories[-1]} trajectories/agent, final return {curves[-1].returns[-1]:.2f}")
    summary = summarize(curves, cfg)
    _write_summary(out, summary)
    if cfg.run.threshold is not None:
        with open(out / "thresholds.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run", "seed", "trajectories_to_threshold"])
            for run_id, (seed, c) in enumerate(zip(seeds, curves)):
                w.writerow([run_id, seed, _fmt(c.trajectories_to(cfg.run.threshold))])
    summary["curves"] = curves
    summary["seeds"] = seeds
    summary["out_dir"] = out
    return summary


def summarize(curves: list[Curve], cfg: ExperimentConfig) -> dict:
    step = cfg.algo.B
    start = min(int(c.trajectories[0]) for c in curves)
    stop = min(int(c.trajectories[-1]) for c in curves)
    grid = np.arange(start, stop + 1, step)
    values = np.stack([c.on_grid(grid) for c in curves])
    return {"grid": grid, "mean": values.mean(axis=0), "std": values.std(axis=0), "values": values}


def _write_summary(out: Path, summary: dict):
    rows = zip(summary["grid"], summary["mean"], summary["std"])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trajectories", "mean_return", "std_return"])
        for g, m, s in rows:
            w.writerow([int(g), _fmt(m), _fmt(s)])
    with open(out / "summary.dat", "w") as fh:
        fh.write("# trajectories mean_return std_return\n")
        for g, m, s in zip(summary["grid"], summary["mean"], summary["std"]):
            fh.write(f"{int(g)} {m:.10g} {s:.10g}\n")


# -- replay ------------------------------------------------------------------------


def parse_row_ref(ref: str) -> tuple[Path, int]:
    """``path/to/metrics.csv:ROW`` with ``ROW`` the 1-based data row (header excluded)."""
    path, sep, row = str(ref).rpartition(":")
    if not sep or not row.isdigit() or int(row) < 1:
        raise ConfigurationError(f"row reference {ref!r} must look like metrics.csv:ROW with ROW >= 1")
    return Path(path), int(row)


def replay(ref: str) -> dict:
    """Re-run the referenced row's run from the saved config and compare it byte for byte."""
    path, row = parse_row_ref(ref)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    if row > len(data):
        raise ConfigurationError(f"{path} has only {len(data)} data rows")
    target = data[row - 1]
    rec_map = dict(zip(header, target))
    cfg = load_config(path.parent / "config.yaml")
    run_id, seed, t = int(rec_map["run"]), int(rec_map["seed"]), int(rec_map["iteration"])
    sim = make_simulation(cfg, seed)
    rec = None
    while sim.state.t <= t:
        rec = sim.step()
    regenerated = metrics_row(run_id, seed, rec)
    return {"path": str(path), "row": row, "seed": seed, "iteration": t, "header": header,
            "recorded": target, "replayed": regenerated, "match": regenerated == target}


def load_metrics(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(x) if x != "" else np.nan for x in r] for r in rows[1:]])
    return rows[0], data
