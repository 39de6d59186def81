"""PAGE-PG, its naive federated variants, ByzPG and DecByzPG.

All algorithms share one probabilistic switch: with probability ``p`` (and
always at ``t = 0``) an iteration draws a large batch of ``N`` fresh
trajectories, otherwise a small batch of ``B`` trajectories feeds the
importance-weighted recursive estimate.

Stream layout (see :mod:`byzpg.runtime`): agent ``k`` samples round ``t``
from ``(seed, k, "sample", t)``; the switch and the output round come from
common coins; bucketing permutations from ``(seed, COMMON, "bucketing", t)``.
The centralized server is agent 0, which is also worker 0 and is never
Byzantine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adversary import Adversary, AdversaryConfig
from .agreement import ALPHA_BAR_LIMIT, AgreementConfig, run_agreement, diameter
from .env import enumerate_exact_gradient, sample_batch
from .errors import ConfigurationError, UnsupportedOperationError
from .estimators import ZERO_BASELINE, BaselineConfig, batch_estimate, correction_terms
from .policy import Policy, PolicySpec
from .robust_agg import AggregatorConfig, robust_aggregate
from .runtime import COMMON, CommonCoin, FederationState, run_round, stream

ALGORITHMS = ("page_pg", "fed_page_pg", "dec_page_pg", "byz_pg", "dec_byz_pg")
CENTRALIZED = ("page_pg", "fed_page_pg", "byz_pg")
ALPHA_MAX = {"centralized": 0.5, "decentralized": 0.25}


@dataclass
class AlgoConfig:
    algorithm: str = "dec_byz_pg"
    K: int = 5
    N: int = 50
    B: int = 4
    p: float = 0.2
    eta: float = 5e-3
    T: int = 500
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    estimator: str = "gpomdp"
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    # test-only: every agent samples from agent 0's stream
    shared_sampling_stream: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algo.algorithm: unknown {self.algorithm!r}")
        if self.K < 1:
            raise ConfigurationError("algo.K must be >= 1")
        if self.algorithm == "page_pg" and self.K != 1:
            raise ConfigurationError("algo.K must be 1 for page_pg")
        if not 1 <= self.B <= self.N:
            raise ConfigurationError(f"algo: need 1 <= B <= N, got B={self.B}, N={self.N}")
        if not 0.0 < self.p <= 1.0:
            raise ConfigurationError("algo.p must lie in (0, 1]")
        if self.eta <= 0:
            raise ConfigurationError("algo.eta must be positive")
        if self.T < 1:
            raise ConfigurationError("algo.T must be >= 1")
        if self.optimizer not in ("plain_ascent", "adam"):
            raise ConfigurationError(f"algo.optimizer: unknown {self.optimizer!r}")
        if self.estimator not in ("gpomdp", "reinforce"):
            raise ConfigurationError(f"algo.estimator: unknown {self.estimator!r}")

    @property
    def mode(self) -> str:
        return "centralized" if self.algorithm in CENTRALIZED else "decentralized"

    @property
    def alpha_max(self) -> float:
        return ALPHA_MAX[self.mode]


@dataclass
class IterationRecord:
    t: int
    large: bool
    trajectories: int
    agent_returns: np.ndarray
    honest: np.ndarray
    max_importance_weight: float
    honest_diameter: float

    @property
    def mean_honest_return(self) -> float:
        r = self.agent_returns[self.honest]
        r = r[np.isfinite(r)]
        return float(r.mean()) if r.size else float("nan")


def default_aggregator(algo: AlgoConfig, f: int, kind: str | None = None) -> AggregatorConfig:
    if algo.algorithm in ("fed_page_pg", "dec_page_pg", "page_pg"):
        return AggregatorConfig("mean", alpha=f / algo.K, alpha_max=algo.alpha_max)
    kind = kind or "bucketed_rfa"
    alpha_max = 0.25 if kind in ("krum", "bucketed_krum") else algo.alpha_max
    return AggregatorConfig(kind, alpha=f / algo.K, alpha_max=alpha_max)


def default_alpha_bar(K: int, f: int, kind: str = "mda") -> float:
    """``f/K`` plus a margin small enough that the subset size stays ``K - f``."""
    limit = ALPHA_BAR_LIMIT.get(kind, 0.25)
    alpha = f / K
    return alpha + min(0.5 / K, (limit - alpha) / 2)


def default_agreement(algo: AlgoConfig, f: int, kind: str = "mda", rounds: int = 3) -> AgreementConfig:
    if algo.algorithm == "dec_page_pg":
        return AgreementConfig("none", 0, 0.0)
    if algo.mode == "centralized":
        return AgreementConfig("none", 0, 0.0)
    return AgreementConfig(kind, rounds, default_alpha_bar(algo.K, f, kind))


def _update(state: FederationState, rows: np.ndarray, v: np.ndarray, algo: AlgoConfig) -> np.ndarray:
    """Ascent step for agents ``rows``; Adam moments are agent-local."""
    theta = state.theta[rows]
    if algo.optimizer == "plain_ascent":
        return theta + algo.eta * v
    b1, b2 = algo.adam_beta1, algo.adam_beta2
    state.adam_steps[rows] += 1
    n = state.adam_steps[rows][:, None]
    m = b1 * state.adam_m[rows] + (1 - b1) * v
    s = b2 * state.adam_v[rows] + (1 - b2) * v * v
    state.adam_m[rows], state.adam_v[rows] = m, s
    m_hat = m / (1 - b1**n)
    s_hat = s / (1 - b2**n)
    return theta + algo.eta * m_hat / (np.sqrt(s_hat) + algo.adam_eps)


class Simulation:
    """One seeded run of any of the five algorithms."""

    def __init__(self, env, policy_spec: PolicySpec, algo: AlgoConfig,
                 aggregator: AggregatorConfig | None = None, agreement: AgreementConfig | None = None,
                 adversary: AdversaryConfig | None = None, seed: int = 0, theta0=None,
                 keep_history: bool = True):
        self.env = env
        self.policy = Policy(policy_spec)
        self.algo = algo
        self.seed = int(seed)
        self.adv_cfg = adversary or AdversaryConfig()
        f = self.adv_cfg.byzantine_count
        K = algo.K
        if f > 0 and not f / K < algo.alpha_max:
            raise ConfigurationError(
                f"adversary.byzantine_count={f} with K={K} gives f/K={f / K:.3f}, "
                f"not below alpha_max={algo.alpha_max} for {algo.mode} algorithms"
            )
        if algo.mode == "centralized" and f > K - 1:
            raise ConfigurationError("the centralized server is trusted: need byzantine_count <= K - 1")
        self.aggregator = aggregator or default_aggregator(algo, f)
        if self.aggregator.kind != "mean" and self.aggregator.alpha + 1e-12 < f / K:
            raise ConfigurationError(
                f"aggregator.alpha={self.aggregator.alpha:.4g} is below the Byzantine fraction {f / K:.4g}"
            )
        self.agreement = agreement or default_agreement(algo, f)
        if theta0 is None:
            theta0 = self.policy.init_params(stream(self.seed, COMMON, "init"))
        self.state = FederationState.initial(theta0, K, keep_history)
        self.coin = CommonCoin(self.seed)
        eligible = np.arange(1, K) if algo.mode == "centralized" else None
        self.adversary = Adversary(self.adv_cfg, K, self.seed, eligible)
        self.v_prev = np.zeros(self.policy.n_params)
        self.records: list[IterationRecord] = []

    # -- helpers --------------------------------------------------------

    def _streams(self, agents, t):
        if self.algo.shared_sampling_stream:
            return [stream(self.seed, 0, "sample", t) for _ in agents]
        return [stream(self.seed, int(k), "sample", t) for k in agents]

    def _active(self, byzantine: np.ndarray) -> np.ndarray:
        """Agents whose local computation is needed this round."""
        if self.adv_cfg.selection == "per_round" or self.adv_cfg.needs_own_computation:
            return np.arange(self.algo.K)
        return np.flatnonzero(~byzantine)

    def _bucket_rng(self, t):
        return stream(self.seed, COMMON, "bucketing", t)

    def _sample(self, agents, thetas, M, t, byzantine):
        uniform = byzantine[agents] & (self.adv_cfg.attack == "random_action")
        return sample_batch(self.env, self.policy, thetas, M, self._streams(agents, t), uniform)

    # -- phases -------------------------------------------------------------

    def _phase_coin(self, state, ctx):
        c = self.coin.bernoulli(self.algo.p)
        ctx.data["large"] = bool(c) or ctx.t == 0

    def _record(self, ctx, agents, batch, max_w):
        K = self.algo.K
        returns = np.full(K, np.nan)
        returns[agents] = batch.returns().mean(axis=1)
        ctx.data["returns"] = returns
        ctx.data["max_w"] = max_w

    # centralized ------------------------------------------------------------

    def _c_sample(self, state, ctx):
        algo, t = self.algo, ctx.t
        if ctx.data["large"]:
            agents = self._active(ctx.byzantine)
            thetas = state.theta[agents]
            batch = self._sample(agents, thetas, algo.N, t, ctx.byzantine)
            est = batch_estimate(self.policy, thetas, batch, self.env.gamma, algo.estimator, algo.baseline)
            payloads = np.zeros((algo.K, self.policy.n_params))
            payloads[agents] = est
            ctx.data["payloads"] = payloads
            state.trajectories[agents] += algo.N
            self._record(ctx, agents, batch, 1.0)
        else:
            server = np.array([0])
            theta = state.theta[server]
            batch = self._sample(server, theta, algo.B, t, ctx.byzantine)
            corr = correction_terms(self.policy, batch, theta, state.theta_prev[server], self.env.gamma,
                                    algo.estimator, algo.baseline)
            ctx.data["v"] = corr.current[0] + self.v_prev - corr.previous[0]
            state.trajectories[server] += algo.B
            self._record(ctx, server, batch, corr.max_weight)

    def _c_aggregate(self, state, ctx):
        if ctx.data["large"]:
            boxes = self.adversary.build_mailboxes(ctx.data["payloads"], ctx.byzantine, np.array([0]), ctx.t)
            ctx.data["mailbox"] = boxes
            ctx.data["v"] = robust_aggregate(boxes.for_recipient(0), self.aggregator, self._bucket_rng(ctx.t))

    def _c_update(self, state, ctx):
        v = ctx.data["v"]
        new = _update(state, np.array([0]), v[None], self.algo)[0]
        state.theta_prev = state.theta.copy()
        state.theta[:] = new
        state.realized[:] = v
        self.v_prev = v

    # decentralized ----------------------------------------------------------

    def _d_sample(self, state, ctx):
        algo, t = self.algo, ctx.t
        agents = self._active(ctx.byzantine)
        thetas = state.theta[agents]
        payloads = np.zeros((algo.K, self.policy.n_params))
        if ctx.data["large"]:
            M = algo.N
            batch = self._sample(agents, thetas, M, t, ctx.byzantine)
            payloads[agents] = batch_estimate(self.policy, thetas, batch, self.env.gamma, algo.estimator, algo.baseline)
            max_w = 1.0
        else:
            M = algo.B
            batch = self._sample(agents, thetas, M, t, ctx.byzantine)
            corr = correction_terms(self.policy, batch, thetas, state.theta_prev[agents], self.env.gamma,
                                    algo.estimator, algo.baseline)
            payloads[agents] = corr.current + state.realized[agents] - corr.previous
            max_w = corr.max_weight
        state.trajectories[agents] += M
        ctx.data["agents"] = agents
        ctx.data["payloads"] = payloads
        self._record(ctx, agents, batch, max_w)

    def _d_aggregate(self, state, ctx):
        agents = ctx.data["agents"]
        boxes = self.adversary.build_mailboxes(ctx.data["payloads"], ctx.byzantine, agents, ctx.t)
        ctx.data["mailbox"] = boxes
        if boxes.shared:
            v = robust_aggregate(boxes.rows[0], self.aggregator, self._bucket_rng(ctx.t))
            vs = np.broadcast_to(v, (len(agents), v.size)).copy()
        else:
            vs = np.stack([robust_aggregate(boxes.for_recipient(k), self.aggregator, self._bucket_rng(ctx.t))
                           for k in agents])
        ctx.data["v"] = vs
        ctx.data["theta_tilde"] = _update(state, agents, vs, self.algo)

    def _d_agree(self, state, ctx):
        agents = ctx.data["agents"]
        tilde = state.theta.copy()
        tilde[agents] = ctx.data["theta_tilde"]
        new = run_agreement(tilde, ctx.byzantine, self.adversary, self.agreement, ctx.t, recipients=agents)
        state.theta_prev = state.theta.copy()
        # realized estimate (theta_{t+1} - theta_t) / eta, written as the aggregated
        # estimate plus the agreement displacement so it stays in gradient units under Adam
        state.realized[agents] = ctx.data["v"] + (new[agents] - tilde[agents]) / self.algo.eta
        state.theta[agents] = new[agents]

    def phase_plan(self):
        if self.algo.mode == "centralized":
            return [("coin", self._phase_coin), ("sample", self._c_sample),
                    ("aggregate", self._c_aggregate), ("update", self._c_update)]
        return [("coin", self._phase_coin), ("sample", self._d_sample),
                ("aggregate", self._d_aggregate), ("agree", self._d_agree)]

    # -- driver ---------------------------------------------------------------

    def step(self) -> IterationRecord:
        t = self.state.t
        byz = self.adversary.byzantine_mask(t)
        ctx = run_round(self.state, self.phase_plan(), byz)
        honest = ~byz
        if self.algo.mode == "centralized":
            honest_diam = 0.0
            trajectories = int(self.state.trajectories[0])
        else:
            honest_diam = diameter(self.state.theta[honest])
            trajectories = int(self.state.trajectories[honest].max())
        rec = IterationRecord(t, ctx.data["large"], trajectories, ctx.data["returns"], honest,
                              ctx.data["max_w"], honest_diam)
        self.records.append(rec)
        return rec

    def run(self, T: int | None = None, trajectory_budget: int | None = None, callback=None):
        T = self.algo.T if T is None else T
        while self.state.t < T:
            rec = self.step()
            if callback is not None:
                callback(rec)
            if trajectory_budget is not None and rec.trajectories >= trajectory_budget:
                break
        return self.records

    def honest_agents(self) -> np.ndarray:
        return np.flatnonzero(~self.adversary.byzantine_mask(max(self.state.t - 1, 0)))


# -- single-agent reference --------------------------------------------------


class PagePG:
    """Single-agent PAGE-PG written directly from the update rule.

    Kept separate from :class:`Simulation` so that the federated algorithms
    can be checked against it (they must reduce to it for ``K = 1``).
    """

    def __init__(self, env, policy_spec: PolicySpec, algo: AlgoConfig, seed: int = 0, theta0=None):
        self.env, self.algo, self.seed = env, algo, int(seed)
        self.policy = Policy(policy_spec)
        if theta0 is None:
            theta0 = self.policy.init_params(stream(self.seed, COMMON, "init"))
        self.state = FederationState.initial(theta0, 1)
        self.coin = CommonCoin(self.seed)
        self.v = np.zeros(self.policy.n_params)

    def step(self):
        st, algo, t = self.state, self.algo, self.state.t
        large = bool(self.coin.bernoulli(algo.p)) or t == 0
        rng = [stream(self.seed, 0, "sample", t)]
        theta = st.theta
        if large:
            batch = sample_batch(self.env, self.policy, theta, algo.N, rng)
            v = batch_estimate(self.policy, theta, batch, self.env.gamma, algo.estimator, algo.baseline)[0]
            st.trajectories[0] += algo.N
        else:
            batch = sample_batch(self.env, self.policy, theta, algo.B, rng)
            c = correction_terms(self.policy, batch, theta, st.theta_prev, self.env.gamma,
                                 algo.estimator, algo.baseline)
            v = c.current[0] + self.v - c.previous[0]
            st.trajectories[0] += algo.B
        new = _update(st, np.array([0]), v[None], algo)
        st.theta_prev = st.theta.copy()
        st.theta = new
        self.v = v
        st.t += 1
        st.history.append(st.theta.copy())
        return large

    def run(self, T: int | None = None):
        for _ in range((self.algo.T if T is None else T) - self.state.t):
            self.step()
        return self.state


# -- outputs -----------------------------------------------------------------


def select_output(sim, T: int | None = None):
    """``theta_{T_hat}`` for every honest agent, ``T_hat`` uniform on ``{0..T-1}`` from a common coin.

    Returns ``(T_hat, selected, final)`` with ``(n_honest, d)`` arrays.
    """
    state = sim.state
    if state.history is None:
        raise UnsupportedOperationError("select_output needs checkpoint history (keep_history=True)")
    T = state.t if T is None else T
    if T < 1 or T > state.t:
        raise ConfigurationError(f"T={T} outside the completed iterations 1..{state.t}")
    t_hat = CommonCoin(sim.seed, "output").uniform_round(T)
    honest = sim.honest_agents() if hasattr(sim, "honest_agents") else np.arange(state.K)
    return t_hat, state.history[t_hat][honest], state.history[T][honest]


def evaluate_stationarity(env, policy_spec: PolicySpec, thetas, eps: float) -> float:
    """Fraction of parameter vectors with exact ``||grad J|| <= eps``."""
    if not getattr(env, "enumerable", False):
        raise UnsupportedOperationError("stationarity needs exact gradients; use the chain oracle")
    policy = Policy(policy_spec)
    thetas = np.atleast_2d(thetas)
    norms = np.array([np.linalg.norm(enumerate_exact_gradient(env, policy, th)) for th in thetas])
    return float(np.mean(norms <= eps))
