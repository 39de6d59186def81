"""Score-function gradient estimators and importance-weighted corrections.

Both estimators are linear in the per-step scores, so a batch estimate is a
single backward pass: REINFORCE weights every live step's score by the
(baselined) discounted return, GPOMDP weights step ``t`` by the reward-to-go
``sum_{h >= t} (gamma^h r_h - b_h)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import Trajectory, TrajectoryBatch
from .errors import ConfigurationError
from .policy import Policy

KINDS = ("reinforce", "gpomdp")


@dataclass
class BaselineConfig:
    """Constant baselines: ``constant`` uses ``values[0]`` everywhere,
    ``per_step_constant`` gives one value per step for GPOMDP."""

    mode: str = "zero"
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.mode not in ("zero", "constant", "per_step_constant"):
            raise ConfigurationError(f"baseline.mode: unknown {self.mode!r}")
        self.values = tuple(float(v) for v in np.atleast_1d(self.values))
        if self.mode != "zero" and not self.values:
            raise ConfigurationError("baseline.values required for constant baselines")
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("baseline.values must be finite")

    def scalar(self) -> float:
        return 0.0 if self.mode == "zero" else self.values[0]

    def per_step(self, H: int) -> np.ndarray:
        if self.mode == "zero":
            return np.zeros(H)
        if self.mode == "constant":
            return np.full(H, self.values[0])
        if len(self.values) < H:
            raise ConfigurationError(f"baseline.values has {len(self.values)} entries, horizon is {H}")
        return np.asarray(self.values[:H])


ZERO_BASELINE = BaselineConfig()


@dataclass
class GradEstimate:
    vector: np.ndarray
    batch_size: int = 1
    kind: str = "gpomdp"
    meta: dict = field(default_factory=dict)


def step_weights(batch: TrajectoryBatch, gamma: float, kind: str = "gpomdp",
                 baseline: BaselineConfig = ZERO_BASELINE) -> np.ndarray:
    """Coefficient multiplying each step's score, shape ``(G, n, H)``."""
    H = batch.shape[-1]
    disc_r = batch.rewards * gamma ** np.arange(H)
    if kind == "reinforce":
        w = disc_r.sum(axis=-1, keepdims=True) - baseline.scalar()
        w = np.broadcast_to(w, batch.shape)
    elif kind == "gpomdp":
        terms = disc_r - baseline.per_step(H)
        w = np.flip(np.cumsum(np.flip(terms, -1), axis=-1), -1)
    else:
        raise ConfigurationError(f"estimator kind: unknown {kind!r}")
    return np.where(batch.mask, w, 0.0)


class _Evaluated:
    """A batch pushed through the policy at one parameter setting."""

    def __init__(self, policy: Policy, thetas: np.ndarray, batch: TrajectoryBatch):
        self.policy = policy
        self.batch = batch
        logp, self.cache = policy.forward(thetas, batch.states)
        taken = np.take_along_axis(logp, batch.actions[..., None], -1)[..., 0]
        self.step_logp = np.where(batch.mask, taken, 0.0)

    def traj_logp(self) -> np.ndarray:
        return self.step_logp.sum(axis=-1)

    def backward(self, coeff: np.ndarray, per_trajectory: bool = False) -> np.ndarray:
        """``sum`` over steps of ``coeff * grad log pi(a|s)``; ``coeff`` is ``(G, n, H)``."""
        b = self.batch
        A = self.policy.spec.action_count
        d = np.zeros((*b.shape, A))
        np.put_along_axis(d, b.actions[..., None], coeff[..., None], -1)
        G, n, H = b.shape
        d = d.reshape(G, n * H, A)
        return self.policy.backward(self.cache, d, rows_per_group=H if per_trajectory else None)


def evaluate(policy: Policy, thetas, batch: TrajectoryBatch) -> _Evaluated:
    return _Evaluated(policy, np.atleast_2d(thetas), batch)


def batch_estimate(policy: Policy, thetas, batch: TrajectoryBatch, gamma: float, kind: str = "gpomdp",
                   baseline: BaselineConfig = ZERO_BASELINE, per_trajectory: bool = False) -> np.ndarray:
    """Mean estimator over each group's trajectories, ``(G, d)``.

    With ``per_trajectory=True`` the individual ``g(tau | theta)`` are
    returned instead, shape ``(G, n, d)``.
    """
    ev = evaluate(policy, thetas, batch)
    w = step_weights(batch, gamma, kind, baseline)
    if per_trajectory:
        return ev.backward(w, per_trajectory=True)
    return ev.backward(w / batch.shape[1])


def log_importance_weights(policy: Policy, theta_target, theta_behavior, batch: TrajectoryBatch) -> np.ndarray:
    """``log p(tau|target) - log p(tau|behavior)`` per trajectory; dynamics cancel."""
    a = evaluate(policy, theta_target, batch).traj_logp()
    b = evaluate(policy, theta_behavior, batch).traj_logp()
    return a - b


@dataclass
class Correction:
    """Terms of the small-batch recursive update for each group.

    ``current`` is the mean of ``g(tau | theta_t)``, ``previous`` the mean of
    ``omega * g(tau | theta_{t-1})``; ``delta = current - previous``.
    """

    current: np.ndarray
    previous: np.ndarray
    max_weight: float

    @property
    def delta(self) -> np.ndarray:
        return self.current - self.previous


def correction_terms(policy: Policy, batch: TrajectoryBatch, theta_t, theta_prev, gamma: float,
                     kind: str = "gpomdp", baseline: BaselineConfig = ZERO_BASELINE,
                     per_trajectory: bool = False) -> Correction:
    """Both halves of the importance-weighted correction for a batch drawn at ``theta_t``."""
    cur = evaluate(policy, theta_t, batch)
    prev = evaluate(policy, theta_prev, batch)
    omega = np.exp(prev.traj_logp() - cur.traj_logp())
    w = step_weights(batch, gamma, kind, baseline)
    scale = 1.0 if per_trajectory else 1.0 / batch.shape[1]
    g_cur = cur.backward(w * scale, per_trajectory)
    g_prev = prev.backward(w * (omega[..., None] * scale), per_trajectory)
    return Correction(g_cur, g_prev, float(omega.max()) if omega.size else 1.0)


def page_correction(policy: Policy, batch: TrajectoryBatch, theta_t, theta_prev, gamma: float,
                    kind: str = "gpomdp", baseline: BaselineConfig = ZERO_BASELINE) -> GradEstimate:
    """Mean of ``g(tau|theta_t) - omega(tau|theta_t, theta_prev) g(tau|theta_prev)`` over the batch.

    ``batch`` must hold a single group sampled at ``theta_t``.
    """
    c = correction_terms(policy, batch, np.atleast_2d(theta_t), np.atleast_2d(theta_prev), gamma, kind, baseline)
    return GradEstimate(c.delta[0], batch.shape[1], "page_correction", {"max_weight": c.max_weight})


# -- single-trajectory API --------------------------------------------------


def _as_batch(traj: Trajectory | TrajectoryBatch) -> TrajectoryBatch:
    return traj if isinstance(traj, TrajectoryBatch) else TrajectoryBatch.from_trajectories([traj])


def reinforce(policy: Policy, traj: Trajectory, theta, gamma: float,
              baseline: BaselineConfig = ZERO_BASELINE) -> GradEstimate:
    """``(sum_h score_h) * (sum_h gamma^h r_h - C_b)``."""
    v = batch_estimate(policy, theta, _as_batch(traj), gamma, "reinforce", baseline)[0]
    return GradEstimate(v, 1, "reinforce")


def gpomdp(policy: Policy, traj: Trajectory, theta, gamma: float,
           baseline: BaselineConfig = ZERO_BASELINE) -> GradEstimate:
    """``sum_h (sum_{t<=h} score_t) (gamma^h r_h - C_{b_h})``."""
    v = batch_estimate(policy, theta, _as_batch(traj), gamma, "gpomdp", baseline)[0]
    return GradEstimate(v, 1, "gpomdp")


def importance_weight(policy: Policy, traj: Trajectory, theta_target, theta_behavior) -> float:
    """``p(tau | theta_target) / p(tau | theta_behavior)`` from policy terms only, in log space."""
    return float(np.exp(log_importance_weights(policy, theta_target, theta_behavior, _as_batch(traj))[0, 0]))
