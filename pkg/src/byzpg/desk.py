"""Desk-scale experiment protocols: speed-up, resilience and stationarity.

Reduced horizon and iteration counts keep each seed to seconds or minutes.  Each
function runs one seed and returns plain numbers so that callers (the
acceptance suite, the demos) decide how to judge them.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .adversary import AdversaryConfig
from .algorithms import AlgoConfig, Simulation, default_agreement, default_aggregator, evaluate_stationarity
from .config import config_from_mapping
from .env import enumerate_exact_gradient
from .experiment import Curve
from .policy import Policy

THRESHOLD = 150.0
WINDOW = 10
ATTACKS = ("avg_zero", "large_noise", "random_action")
PAIRS = {"decentralized": ("dec_page_pg", "dec_byz_pg"), "centralized": ("fed_page_pg", "byz_pg")}


def desk_config(**algo):
    """CartPole at H = 200, otherwise the CartPole defaults."""
    return config_from_mapping({"profile": "cartpole_desk", "algo": algo})


def run_curve(algorithm: str, K: int, seed: int, attack: str = "none", f: int = 0, T: int = 300,
              budget: int | None = None, threshold: float | None = None, window: int = WINDOW) -> Curve:
    """Smoothed honest-return curve; stops at ``budget`` trajectories or once ``threshold`` is reached."""
    cfg = desk_config(algorithm=algorithm, K=K, T=T)
    adv = AdversaryConfig(attack, f)
    sim = Simulation(cfg.build_env(), cfg.policy, cfg.algo, default_aggregator(cfg.algo, f),
                     default_agreement(cfg.algo, f), adv, seed=seed, keep_history=False)
    rets = []
    while sim.state.t < T:
        rec = sim.step()
        rets.append(rec.mean_honest_return)
        if budget is not None and rec.trajectories >= budget:
            break
        if threshold is not None and np.mean(rets[-window:]) >= threshold:
            break
    return Curve.from_records(sim.records, window)


def trajectories_to_threshold(K: int, seed: int, T: int = 600, threshold: float = THRESHOLD) -> float:
    return run_curve("dec_byz_pg", K, seed, T=T, threshold=threshold).trajectories_to(threshold)


@dataclass
class ResilienceResult:
    seed: int
    budget: float
    reference: float
    returns: dict  # (algorithm, attack) -> smoothed return at the budget


def resilience_trial(seed: int, mode: str = "decentralized", K: int = 13, f: int = 3, T: int = 300,
                     threshold: float = THRESHOLD) -> ResilienceResult:
    naive, robust = PAIRS[mode]
    ref = run_curve(naive, K, seed, T=T, threshold=threshold)
    budget = ref.trajectories_to(threshold)
    out = {}
    if not np.isfinite(budget):
        return ResilienceResult(seed, budget, float("nan"), out)
    reference = ref.at_budget(budget)
    for alg in (naive, robust):
        for attack in ATTACKS:
            c = run_curve(alg, K, seed, attack, f, T=T, budget=int(budget))
            out[(alg, attack)] = c.at_budget(budget)
    return ResilienceResult(seed, budget, reference, out)


def judge_resilience(results: list[ResilienceResult], mode: str = "decentralized", threshold: float = THRESHOLD):
    """Per-seed verdicts for the three resilience claims."""
    naive, robust = PAIRS[mode]
    collapse, on_par, random_ok = [], [], []
    for r in results:
        if not np.isfinite(r.budget):
            for verdicts in (collapse, on_par, random_ok):
                verdicts.append(False)
            continue
        collapse.append(all(r.returns[(naive, a)] < 0.5 * threshold for a in ("avg_zero", "large_noise")))
        on_par.append(all(r.returns[(robust, a)] >= 0.9 * r.reference for a in ATTACKS))
        random_ok.append(all(abs(r.returns[(alg, "random_action")] - r.reference) <= 0.2 * r.reference
                             for alg in (naive, robust)))
    return np.array(collapse), np.array(on_par), np.array(random_ok)


# -- stationarity on the chain oracle -------------------------------------------------


CHAIN_ALGO = dict(algorithm="dec_byz_pg", K=5, T=500, N=50, B=4, p=0.2, eta=0.5, optimizer="plain_ascent")


def chain_config():
    return config_from_mapping({
        "env": {"kind": "chain", "horizon": 3, "gamma": 0.9},
        "policy": {"architecture": "linear", "output_activation": "identity"},
        "algo": CHAIN_ALGO,
    })


def stationarity_trial(seed: int):
    """``(fraction, eps, best_single_norm, dec_norms)`` for one seed."""
    cfg = chain_config()
    env, policy = cfg.build_env(), Policy(cfg.policy)
    dec = Simulation(env, cfg.policy, cfg.algo, cfg.aggregator, cfg.agreement, seed=seed, keep_history=False)
    dec.run()
    budget = int(dec.state.trajectories.max())
    single = Simulation(env, cfg.policy, dataclasses.replace(cfg.algo, algorithm="page_pg", K=1, T=10**9),
                        seed=seed, keep_history=False)
    best = np.linalg.norm(enumerate_exact_gradient(env, policy, single.state.theta[0]))
    while single.state.trajectories[0] < budget:
        single.step()
        best = min(best, np.linalg.norm(enumerate_exact_gradient(env, policy, single.state.theta[0])))
    eps = 3.0 * best
    frac = evaluate_stationarity(env, cfg.policy, dec.state.theta, eps)
    norms = [float(np.linalg.norm(enumerate_exact_gradient(env, policy, th))) for th in dec.state.theta]
    return frac, eps, best, norms
