"""Fixed-horizon episodic environments and trajectory sampling.

Two environments are provided: the classic cart-pole balancing task and a
tiny tabular "chain" MDP whose trajectory space is small enough to enumerate
exactly.  The chain is the ground truth for every unbiasedness check on the
gradient estimators.

Trajectories always have exactly ``horizon`` steps.  After a cart-pole
failure the state is frozen (absorbing), rewards are zero, and the step is
masked out: no action is drawn there, its log-probability is recorded as 0
and it contributes no score term.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError, SimulationError, UnsupportedOperationError
from .policy import Policy, action_log_probs, log_prob_gradient

ENUMERATION_CAP = 10**6


# ---------------------------------------------------------------------------
# cart-pole


@dataclass(frozen=True)
class CartPoleConstants:
    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    force: float = 10.0
    tau: float = 0.02
    angle_limit: float = 12 * 2 * np.pi / 360
    position_limit: float = 2.4


def _cartpole_dynamics(states: np.ndarray, actions: np.ndarray, c: CartPoleConstants) -> np.ndarray:
    x, x_dot, th, th_dot = (states[..., i] for i in range(4))
    total_mass = c.cart_mass + c.pole_mass
    pm_len = c.pole_mass * c.half_length
    force = np.where(actions == 1, c.force, -c.force)
    cos, sin = np.cos(th), np.sin(th)
    temp = (force + pm_len * th_dot**2 * sin) / total_mass
    th_acc = (c.gravity * sin - cos * temp) / (
        c.half_length * (4.0 / 3.0 - c.pole_mass * cos**2 / total_mass)
    )
    x_acc = temp - pm_len * th_acc * cos / total_mass
    # semi-implicit Euler: velocities first, positions from the new velocities
    x_dot = x_dot + c.tau * x_acc
    x = x + c.tau * x_dot
    th_dot = th_dot + c.tau * th_acc
    th = th + c.tau * th_dot
    return np.stack([x, x_dot, th, th_dot], axis=-1)


def cartpole_step(state, action: int, constants: CartPoleConstants = CartPoleConstants()):
    """One cart-pole transition.

    Returns ``(next_state, reward, failed)``.  The reward is 1.0 unless the
    transition ends in a failure state (pole past 12 degrees or cart past
    2.4).  The horizon cap is applied by the sampler, not here.
    """
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (4,) or not np.all(np.isfinite(state)):
        raise SimulationError(f"cart-pole state must be a finite 4-vector, got {state!r}")
    nxt = _cartpole_dynamics(state, np.asarray(action), constants)
    failed = bool(abs(nxt[2]) > constants.angle_limit or abs(nxt[0]) > constants.position_limit)
    return nxt, 0.0 if failed else 1.0, failed


class CartPole:
    """Vectorized cart-pole with initial state uniform in [-0.05, 0.05]^4."""

    action_count = 2
    state_dim = 4
    reward_bound = 1.0
    enumerable = False

    def __init__(self, horizon: int = 500, gamma: float = 0.999, constants: CartPoleConstants | None = None):
        if horizon < 1:
            raise ConfigurationError("env.horizon must be >= 1")
        if not 0.0 < gamma < 1.0:
            raise ConfigurationError("env.gamma must lie in (0, 1)")
        self.horizon = int(horizon)
        self.gamma = float(gamma)
        self.constants = constants or CartPoleConstants()

    def initial_states(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(-0.05, 0.05, size=(n, 4))

    def step(self, states, actions, u):
        nxt = _cartpole_dynamics(states, actions, self.constants)
        c = self.constants
        failed = (np.abs(nxt[..., 2]) > c.angle_limit) | (np.abs(nxt[..., 0]) > c.position_limit)
        return nxt, np.where(failed, 0.0, 1.0), failed


# ---------------------------------------------------------------------------
# chain oracle


@dataclass
class ChainOracleSpec:
    """Tabular MDP small enough for exhaustive trajectory enumeration.

    ``transitions[s, a, s']`` and ``rewards[s, a]``; ``initial[s]`` is the
    start distribution.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    initial: np.ndarray
    horizon: int = 3
    gamma: float = 0.9
    n_states: int = field(init=False)
    n_actions: int = field(init=False)

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.initial = np.asarray(self.initial, dtype=np.float64)
        if self.transitions.ndim != 3 or self.transitions.shape[0] != self.transitions.shape[2]:
            raise ConfigurationError("chain.transitions must have shape (S, A, S)")
        self.n_states, self.n_actions = self.transitions.shape[:2]
        if self.rewards.shape != (self.n_states, self.n_actions):
            raise ConfigurationError("chain.rewards must have shape (S, A)")
        if self.initial.shape != (self.n_states,):
            raise ConfigurationError("chain.initial must have shape (S,)")
        if self.n_states > 5 or self.n_actions > 3 or self.horizon > 5:
            raise ConfigurationError("chain oracle limited to 5 states, 3 actions, horizon 5")
        if self.horizon < 1 or not 0.0 < self.gamma < 1.0:
            raise ConfigurationError("chain: horizon >= 1 and gamma in (0, 1) required")
        if np.any(self.transitions < 0) or np.any(np.abs(self.transitions.sum(axis=2) - 1.0) > 1e-12):
            raise ConfigurationError("chain.transitions rows must be probability vectors")
        if np.any(self.initial < 0) or abs(self.initial.sum() - 1.0) > 1e-12:
            raise ConfigurationError("chain.initial must be a probability vector")
        if np.any(self.rewards < 0):
            raise ConfigurationError("chain.rewards must be non-negative")

    @property
    def trajectory_count(self) -> int:
        return (self.n_states * self.n_actions) ** self.horizon

    @classmethod
    def from_mapping(cls, data: dict) -> "ChainOracleSpec":
        known = {"transitions", "rewards", "initial", "horizon", "gamma"}
        extra = set(data) - known - {"kind", "n_states", "n_actions"}
        if extra:
            raise ConfigurationError(f"chain: unknown fields {sorted(extra)}")
        missing = {"transitions", "rewards", "initial"} - set(data)
        if missing:
            raise ConfigurationError(f"chain: missing fields {sorted(missing)}")
        return cls(**{k: data[k] for k in known if k in data})

    def to_mapping(self) -> dict:
        return {
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
            "initial": self.initial.tolist(),
            "horizon": self.horizon,
            "gamma": self.gamma,
        }


def load_chain_spec(path) -> ChainOracleSpec:
    """Read a chain oracle from a YAML file of explicit tables."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    return ChainOracleSpec.from_mapping(data)


def default_chain_spec(horizon: int = 3, gamma: float = 0.9) -> ChainOracleSpec:
    """Three-state chain: action 1 drifts right, action 0 drifts left.

    The right end pays 1.0 per step; the left end has a 0.3 distractor for
    action 0, so the optimal policy is not trivially uniform.
    """
    P = np.zeros((3, 2, 3))
    for s in range(3):
        left, right = max(s - 1, 0), min(s + 1, 2)
        P[s, 0, left] += 0.8
        P[s, 0, s] += 0.2
        P[s, 1, right] += 0.7
        P[s, 1, s] += 0.3
    R = np.array([[0.3, 0.0], [0.0, 0.1], [1.0, 1.0]])
    return ChainOracleSpec(P, R, np.array([0.5, 0.5, 0.0]), horizon=horizon, gamma=gamma)


class ChainOracle:
    """Environment wrapper around :class:`ChainOracleSpec`; states are one-hot."""

    enumerable = True

    def __init__(self, spec: ChainOracleSpec):
        self.spec = spec
        self.horizon = spec.horizon
        self.gamma = spec.gamma
        self.state_dim = spec.n_states
        self.action_count = spec.n_actions
        self.reward_bound = float(spec.rewards.max()) if spec.rewards.size else 0.0
        self._cum_trans = np.cumsum(spec.transitions, axis=2)
        self._cum_init = np.cumsum(spec.initial)
        self._eye = np.eye(spec.n_states)

    def _draw(self, cum, u):
        idx = (u[..., None] >= cum[..., :-1]).sum(axis=-1)
        return idx

    def initial_states(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random(n)
        return self._eye[self._draw(self._cum_init, u)]

    def step(self, states, actions, u):
        s = states.argmax(axis=-1)
        r = self.spec.rewards[s, actions]
        nxt = self._draw(self._cum_trans[s, actions], u)
        return self._eye[nxt], r, np.zeros(s.shape, dtype=bool)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    behavior_log_probs: np.ndarray
    mask: np.ndarray
    truncated_at: int | None = None

    def __len__(self):
        return len(self.actions)


@dataclass
class TrajectoryBatch:
    """``G`` groups (agents) of ``n`` trajectories with horizon ``H``.

    Arrays are shaped ``(G, n, H, ...)``.  ``mask`` flags live steps.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    behavior_log_probs: np.ndarray
    mask: np.ndarray

    @property
    def shape(self):
        return self.actions.shape

    def returns(self) -> np.ndarray:
        """Undiscounted episode returns, ``(G, n)``."""
        return self.rewards.sum(axis=-1)

    def discounted_returns(self, gamma: float) -> np.ndarray:
        disc = gamma ** np.arange(self.shape[-1])
        return (self.rewards * disc).sum(axis=-1)

    def trajectory(self, g: int, i: int) -> Trajectory:
        mask = self.mask[g, i]
        dead = np.flatnonzero(~mask)
        return Trajectory(
            self.states[g, i], self.actions[g, i], self.rewards[g, i],
            self.behavior_log_probs[g, i], mask, int(dead[0]) if dead.size else None,
        )

    @classmethod
    def from_trajectories(cls, trajs: list[Trajectory]) -> "TrajectoryBatch":
        st = lambda name: np.stack([getattr(t, name) for t in trajs])[None]
        return cls(st("states"), st("actions"), st("rewards"), st("behavior_log_probs"), st("mask"))


def sample_batch(env, policy: Policy, thetas: np.ndarray, n: int, rngs, uniform_actions=None) -> TrajectoryBatch:
    """Roll out ``n`` trajectories for each parameter vector in ``thetas``.

    Group ``g`` consumes only ``rngs[g]`` (initial states, then action
    uniforms, then transition uniforms, in that order), so a group's
    trajectories do not depend on which other groups share the call.
    ``uniform_actions[g]`` replaces the policy by the uniform action
    distribution for that group.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    G, H, A = thetas.shape[0], env.horizon, env.action_count
    if len(rngs) != G:
        raise ConfigurationError("one RNG stream per parameter vector is required")
    uniform = np.zeros(G, dtype=bool) if uniform_actions is None else np.asarray(uniform_actions, dtype=bool)
    init, u_act, u_env = [], [], []
    for rng in rngs:
        init.append(env.initial_states(rng, n))
        u_act.append(rng.random((n, H)))
        u_env.append(rng.random((n, H)))
    cur = np.stack(init)
    u_act, u_env = np.stack(u_act), np.stack(u_env)

    states = np.empty((G, n, H, env.state_dim))
    actions = np.zeros((G, n, H), dtype=np.int64)
    rewards = np.zeros((G, n, H))
    logps = np.zeros((G, n, H))
    mask = np.zeros((G, n, H), dtype=bool)
    alive = np.ones((G, n), dtype=bool)
    log_uniform = -np.log(A)
    for h in range(H):
        if not alive.any():
            states[:, :, h:] = cur[:, :, None, :]
            break
        if not np.all(np.isfinite(cur)):
            raise SimulationError(f"non-finite environment state at step {h}")
        states[:, :, h] = cur
        logp, _ = policy.forward(thetas, cur)
        cdf = np.cumsum(np.exp(logp), axis=-1)
        a_pol = (u_act[:, :, h, None] >= cdf[..., :-1]).sum(axis=-1)
        a_uni = np.minimum((u_act[:, :, h] * A).astype(np.int64), A - 1)
        a = np.where(uniform[:, None], a_uni, a_pol)
        lp = np.where(uniform[:, None], log_uniform, np.take_along_axis(logp, a[..., None], -1)[..., 0])
        nxt, r, failed = env.step(cur, a, u_env[:, :, h])
        actions[:, :, h] = np.where(alive, a, 0)
        logps[:, :, h] = np.where(alive, lp, 0.0)
        rewards[:, :, h] = np.where(alive, r, 0.0)
        mask[:, :, h] = alive
        cur = np.where((alive & ~failed)[..., None], nxt, cur)
        alive = alive & ~failed
    return TrajectoryBatch(states, actions, rewards, logps, mask)


def sample_trajectory(env, policy: Policy, theta: np.ndarray, rng: np.random.Generator) -> Trajectory:
    """Single-trajectory convenience wrapper around :func:`sample_batch`."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (policy.n_params,):
        raise ConfigurationError(f"theta has shape {theta.shape}, policy expects ({policy.n_params},)")
    return sample_batch(env, policy, theta[None], 1, [rng]).trajectory(0, 0)


# ---------------------------------------------------------------------------
# exact enumeration on the chain oracle


def _require_enumerable(env):
    if not getattr(env, "enumerable", False):
        raise UnsupportedOperationError("exact enumeration needs the chain oracle environment")
    spec = env.spec
    if spec.trajectory_count > ENUMERATION_CAP:
        raise ConfigurationError(
            f"chain trajectory space has {spec.trajectory_count} elements, cap is {ENUMERATION_CAP}"
        )
    return spec


@dataclass
class _Enumeration:
    states: np.ndarray       # (M, H) state indices
    actions: np.ndarray      # (M, H)
    log_dyn: np.ndarray      # (M,) log rho + log transitions (-inf allowed)
    returns: np.ndarray      # (M,) discounted return


def enumerate_trajectories(spec: ChainOracleSpec) -> _Enumeration:
    S, A, H = spec.n_states, spec.n_actions, spec.horizon
    pairs = list(itertools.product(range(S), range(A)))
    seqs = np.array(list(itertools.product(range(len(pairs)), repeat=H)), dtype=np.int64)
    pairs = np.array(pairs)
    st, ac = pairs[seqs, 0], pairs[seqs, 1]
    with np.errstate(divide="ignore"):
        log_dyn = np.log(spec.initial[st[:, 0]])
        for h in range(H - 1):
            log_dyn = log_dyn + np.log(spec.transitions[st[:, h], ac[:, h], st[:, h + 1]])
    disc = spec.gamma ** np.arange(H)
    returns = (spec.rewards[st, ac] * disc).sum(axis=1)
    return _Enumeration(st, ac, log_dyn, returns)


def _policy_tables(spec: ChainOracleSpec, policy: Policy, theta):
    eye = np.eye(spec.n_states)
    logpi = np.array([action_log_probs(policy.spec, theta, eye[s]) for s in range(spec.n_states)])
    return logpi


def trajectory_log_probs(env, policy: Policy, theta) -> tuple[_Enumeration, np.ndarray]:
    spec = _require_enumerable(env)
    en = enumerate_trajectories(spec)
    logpi = _policy_tables(spec, policy, theta)
    return en, en.log_dyn + logpi[en.states, en.actions].sum(axis=1)


def exact_return(env, policy: Policy, theta) -> float:
    """``J(theta)`` by summing over every trajectory."""
    en, logp = trajectory_log_probs(env, policy, theta)
    return float(np.sum(np.exp(logp) * en.returns))


def enumerate_exact_gradient(env, policy: Policy, theta) -> np.ndarray:
    """``grad J(theta) = sum_tau p(tau|theta) grad log p(tau|theta) R(tau)``, exactly."""
    spec = _require_enumerable(env)
    en, logp = trajectory_log_probs(env, policy, theta)
    eye = np.eye(spec.n_states)
    scores = np.array([
        [log_prob_gradient(policy.spec, theta, eye[s], a) for a in range(spec.n_actions)]
        for s in range(spec.n_states)
    ])
    weight = np.exp(logp) * en.returns
    traj_score = scores[en.states, en.actions].sum(axis=1)
    return weight @ traj_score


def exact_state_marginals(env, policy: Policy, theta) -> np.ndarray:
    """``P(s_h = s)`` for every step ``h``, shape ``(H, S)``."""
    spec = _require_enumerable(env)
    en, logp = trajectory_log_probs(env, policy, theta)
    p = np.exp(logp)
    out = np.zeros((spec.horizon, spec.n_states))
    for h in range(spec.horizon):
        np.add.at(out[h], en.states[:, h], p)
    return out


def make_env(cfg: dict):
    """Build an environment from an ``env`` config mapping."""
    kind = cfg.get("kind", "cartpole")
    if kind == "cartpole":
        return CartPole(horizon=cfg.get("horizon", 500), gamma=cfg.get("gamma", 0.999))
    if kind == "chain":
        if "path" in cfg:
            spec = load_chain_spec(cfg["path"])
        elif "transitions" in cfg:
            spec = ChainOracleSpec.from_mapping(cfg)
        else:
            spec = default_chain_spec(cfg.get("horizon", 3), cfg.get("gamma", 0.9))
        return ChainOracle(spec)
    raise ConfigurationError(f"env.kind: unknown {kind!r}")
