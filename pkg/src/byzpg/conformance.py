"""Monte-Carlo conformance harnesses for aggregation, agreement and estimators.

Each suite returns a :class:`Report` with one :class:`Check` per property
and the measured constants (``C_ra`` per aggregator, ``C_avg`` per agreement
rule).  The adversarial families are deliberately varied; a pass means no
trial of any family violated the property.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agreement import AgreementConfig, avg_agree_round, diameter
from .env import ChainOracle, default_chain_spec, enumerate_exact_gradient, sample_batch
from .errors import ConfigurationError
from .estimators import batch_estimate, correction_terms, log_importance_weights
from .policy import Policy, PolicySpec
from .robust_agg import AggregatorConfig, robust_aggregate
from .runtime import stream

SUITES = ("aggregation", "agreement", "estimators")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Report:
    suite: str
    checks: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, detail=""):
        self.checks.append(Check(name, bool(passed), detail))

    def lines(self) -> list[str]:
        out = [f"{'PASS' if c.passed else 'FAIL'}  {self.suite}: {c.name}  {c.detail}".rstrip() for c in self.checks]
        out += [f"      {k} = {v:.6g}" for k, v in self.constants.items()]
        return out


# -- aggregation ---------------------------------------------------------------


def _honest_family(rng, n, d, trial):
    """Honest inputs around a random centre; spread and shape vary with the trial index."""
    centre = rng.normal(0, 5, d)
    kind = trial % 3
    if kind == 0:
        return centre + rng.normal(0, 1, (n, d))
    if kind == 1:
        return centre + rng.uniform(-2, 2, (n, d))
    return centre + rng.standard_t(4, (n, d))


def _byzantine_family(rng, honest, f, offset, trial):
    mean = honest.mean(axis=0)
    d = honest.shape[1]
    u = rng.normal(size=d)
    u /= np.linalg.norm(u)
    kind = trial % 3
    if kind == 0:  # one tight cluster
        return np.tile(mean + offset * u, (f, 1))
    if kind == 1:  # cluster along the direction of largest honest spread
        c = honest - mean
        v = np.linalg.svd(c, full_matrices=False)[2][0]
        return np.tile(mean + offset * v, (f, 1))
    return mean + offset * (u + 0.05 * rng.normal(size=(f, d)))


def aggregation_trials(config: AggregatorConfig, K: int, f: int, offset: float, trials: int = 1000,
                       d: int = 8, seed: int = 0, zero_variance: bool = False):
    """Squared aggregation error and the matching ``alpha * avg pairwise`` scale per trial."""
    err = np.empty(trials)
    scale = np.empty(trials)
    for i in range(trials):
        rng = stream(seed, 0, "agg-trial", i)
        honest = _honest_family(rng, K - f, d, i)
        if zero_variance:
            honest = np.tile(honest[0], (K - f, 1))
        byz = _byzantine_family(rng, honest, f, offset, i)
        inputs = np.concatenate([honest, byz])
        perm = rng.permutation(K)
        out = robust_aggregate(inputs[perm], config, stream(seed, 1, "agg-bucket", i))
        mean = honest.mean(axis=0)
        err[i] = np.sum((out - mean) ** 2)
        diff = honest[:, None] - honest[None]
        pair = np.einsum("ijk,ijk->ij", diff, diff)
        n = K - f
        scale[i] = (f / K) * (pair.sum() / (n * (n - 1)) if n > 1 else 0.0)
    return err, scale


def c_ra(err, scale) -> float:
    s = scale.mean()
    return float(err.mean() / s) if s > 0 else (0.0 if err.max() == 0 else float("inf"))


def aggregation_suite(K=12, f=2, trials=1000, d=8, seed=0, offsets=(10.0, 100.0, 1000.0),
                      alpha_max=0.25, stable_factor=2.0) -> Report:
    """Robust aggregators keep ``C_ra`` bounded as the Byzantine offset grows; the mean does not."""
    rep = Report("aggregation")
    alpha = f / K
    robust = {
        "bucketed_rfa": AggregatorConfig("bucketed_rfa", alpha, alpha_max),
        "bucketed_krum": AggregatorConfig("bucketed_krum", alpha, alpha_max),
        "krum": AggregatorConfig("krum", alpha, alpha_max),
        "rfa": AggregatorConfig("rfa", alpha, alpha_max),
    }
    for name, cfg in robust.items():
        cs = [c_ra(*aggregation_trials(cfg, K, f, off, trials, d, seed)) for off in offsets]
        for off, c in zip(offsets, cs):
            rep.constants[f"C_ra[{name}, offset={off:g}]"] = c
        ok = all(np.isfinite(cs)) and max(cs) <= stable_factor * max(cs[0], 1e-12)
        rep.add(f"{name} C_ra finite and stable over offsets x{offsets[-1] / offsets[0]:g}", ok,
                f"C_ra = {', '.join(f'{c:.3g}' for c in cs)}")
    for name in ("bucketed_rfa", "krum"):
        err, _ = aggregation_trials(robust[name], K, f, offsets[-1], trials, d, seed, zero_variance=True)
        rep.add(f"{name} exact with zero honest variance", err.max() <= 1e-18, f"max error^2 = {err.max():.3g}")
    # negative control: the plain mean is dragged linearly by the offset
    mean_cfg = AggregatorConfig("mean", alpha, alpha_max)
    rms = []
    for off in offsets:
        err, scale = aggregation_trials(mean_cfg, K, f, off, trials, d, seed)
        rms.append(np.sqrt(err.mean()))
        rep.constants[f"C_ra[mean, offset={off:g}]"] = c_ra(err, scale)
    growth = rms[-1] / rms[0]
    expected = offsets[-1] / offsets[0]
    rep.add("mean violates the bound (error grows linearly with offset)",
            growth >= 0.5 * expected and rms[-1] >= 0.5 * offsets[-1] * f / K,
            f"rms error grows x{growth:.3g} for offset x{expected:g}")
    return rep


# -- agreement -------------------------------------------------------------------


def _agreement_attack(rng, honest, recipient_value, strategy):
    """Byzantine value delivered to one recipient."""
    centre = honest.mean(axis=0)
    D = diameter(honest)
    away = recipient_value - centre
    nrm = np.linalg.norm(away)
    away = away / nrm if nrm > 0 else rng.normal(size=centre.size) / np.sqrt(centre.size)
    if strategy == 0:  # far outlier
        return centre + 100.0 * max(D, 1.0) * away
    if strategy == 1:  # push each recipient outward, just inside the honest hull scale
        return recipient_value + 0.99 * D * away
    if strategy == 2:  # stay at the recipient
        return recipient_value.copy()
    if strategy == 3:  # random point near the honest cloud
        return centre + D * rng.normal(size=centre.size) / np.sqrt(centre.size)
    # strategy 4: extreme point of the honest set farthest from the centre, mirrored
    far = honest[np.argmax(np.linalg.norm(honest - centre, axis=1))]
    return 2 * recipient_value - far


def _honest_agreement_family(rng, n, d, trial):
    kind = trial % 4
    if kind == 0:
        return rng.normal(0, 1, (n, d))
    if kind == 1:  # two clusters
        x = rng.normal(0, 0.01, (n, d))
        x[: n // 2] += rng.normal(0, 1, d)
        return x
    if kind == 2:
        return rng.uniform(-1, 1, (n, d))
    x = np.zeros((n, d))
    x[:, 0] = rng.uniform(-1, 1, n)
    return x


def agreement_trial(config: AgreementConfig, K: int, f: int, kappa: int, d: int, seed: int, trial: int):
    rng = stream(seed, 0, "agree-trial", trial)
    honest = _honest_agreement_family(rng, K - f, d, trial)
    strategy = (trial // 4) % 5
    start = honest.copy()
    cur = honest
    for _ in range(kappa):
        nxt = np.empty_like(cur)
        for k in range(K - f):
            byz = np.array([_agreement_attack(rng, cur, cur[k], strategy) for _ in range(f)]).reshape(f, d)
            # Byzantine senders take the last indices; the sender order is public
            mailbox = np.concatenate([cur, byz])
            nxt[k] = avg_agree_round(cur[k], mailbox, config)
        cur = nxt
    d0, d1 = diameter(start), diameter(cur)
    drift = np.linalg.norm(cur.mean(axis=0) - start.mean(axis=0))
    return d0, d1, drift


def agreement_suite(kinds=("mda", "gda"), K=7, f=1, trials=1000, d=8, kappas=(1, 2, 4), seed=0,
                    slack=1e-9) -> Report:
    rep = Report("agreement")
    from .algorithms import default_alpha_bar

    for kind in kinds:
        cfg = AgreementConfig(kind, 1, default_alpha_bar(K, f, kind))
        for kappa in kappas:
            worst, c_avg, bad = 0.0, 0.0, 0
            for i in range(trials):
                d0, d1, drift = agreement_trial(cfg, K, f, kappa, d, seed, i)
                bound = d0 / 2**kappa
                if d1 > bound + slack:
                    bad += 1
                if d0 > 0:
                    worst = max(worst, d1 / d0)
                    c_avg = max(c_avg, drift / d0)
            rep.constants[f"C_avg[{kind}, kappa={kappa}]"] = c_avg
            rep.constants[f"worst contraction[{kind}, kappa={kappa}]"] = worst
            rep.add(f"{kind} K={K} f={f} kappa={kappa}: diameter <= initial/2^kappa",
                    bad == 0, f"{trials - bad}/{trials} trials, worst ratio {worst:.4f} vs {2.0**-kappa:.4f}")
            rep.add(f"{kind} kappa={kappa}: drift constant finite", np.isfinite(c_avg), f"C_avg = {c_avg:.4g}")
    return rep


# -- estimators ----------------------------------------------------------------------


def estimator_suite(samples=200_000, seed=0, n_se=3.0, chunk=20_000) -> Report:
    """Chain-oracle unbiasedness of REINFORCE, GPOMDP, importance weighting and the correction."""
    rep = Report("estimators")
    env = ChainOracle(default_chain_spec(horizon=3, gamma=0.9))
    spec = PolicySpec(env.state_dim, env.action_count, architecture="linear", output_activation="identity")
    policy = Policy(spec)
    rng = stream(seed, 0, "oracle-theta")
    theta_a = rng.normal(0, 0.5, spec.n_params)
    step = rng.normal(size=spec.n_params)
    theta_b = theta_a + 0.4 * step / np.linalg.norm(step)
    exact_a = enumerate_exact_gradient(env, policy, theta_a)
    exact_b = enumerate_exact_gradient(env, policy, theta_b)

    def moments(fn, theta_sample):
        s1 = s2 = 0.0
        n = 0
        for c in range(0, samples, chunk):
            m = min(chunk, samples - c)
            batch = sample_batch(env, policy, theta_sample[None], m, [stream(seed, 1, "oracle-mc", c)])
            x = fn(batch)
            s1 = s1 + x.sum(axis=0)
            s2 = s2 + (x * x).sum(axis=0)
            n += m
        mean = s1 / n
        se = np.sqrt(np.maximum(s2 / n - mean**2, 0) / n)
        return mean, se

    def judge(name, mean, se, exact):
        z = np.abs(mean - exact) / np.maximum(se, 1e-300)
        ok = bool(np.all((np.abs(mean - exact) <= n_se * se) | (np.abs(mean - exact) <= 1e-12)))
        rep.add(name, ok, f"max |z| = {z.max():.2f}")

    for kind in ("reinforce", "gpomdp"):
        m, s = moments(lambda b, k=kind: batch_estimate(policy, theta_a[None], b, env.gamma, k,
                                                        per_trajectory=True)[0], theta_a)
        judge(f"{kind} unbiased", m, s, exact_a)

    def iw(b):
        w = np.exp(log_importance_weights(policy, theta_a[None], theta_b[None], b))[0]
        g = batch_estimate(policy, theta_a[None], b, env.gamma, "gpomdp", per_trajectory=True)[0]
        return w[:, None] * g

    m, s = moments(iw, theta_b)
    judge("importance-weighted gpomdp unbiased", m, s, exact_a)

    def corr(b):
        c = correction_terms(policy, b, theta_b[None], theta_a[None], env.gamma, "gpomdp", per_trajectory=True)
        return c.delta[0]

    m, s = moments(corr, theta_b)
    judge("page correction unbiased for grad J(theta_t) - grad J(theta_prev)", m, s, exact_b - exact_a)

    def weights(b):
        return np.exp(log_importance_weights(policy, theta_a[None], theta_b[None], b))[0][:, None]

    m, s = moments(weights, theta_b)
    judge("importance weights have mean 1", m, s, np.ones(1))
    return rep


def run_suite(name: str, **kw) -> Report:
    if name == "aggregation":
        return aggregation_suite(**kw)
    if name == "agreement":
        return agreement_suite(**kw)
    if name == "estimators":
        return estimator_suite(**kw)
    raise ConfigurationError(f"conformance suite: unknown {name!r}; choose from {SUITES}")
