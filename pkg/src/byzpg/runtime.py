"""Seeded streams, the common coin and the synchronous round driver.

Every random draw in a run comes from a stream named by
``(root_seed, agent_id, purpose, round)``.  Streams shared by all honest
agents use ``agent_id = COMMON``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SimulationError

COMMON = -1


def derive_seed(root_seed: int, agent_id: int, purpose: str, round: int = 0) -> int:
    """128-bit seed from a keyed hash of the stream coordinates."""
    key = f"{int(root_seed)}|{int(agent_id)}|{purpose}|{int(round)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=16, person=b"byzpg-stream").digest(), "little")


def stream(root_seed: int, agent_id: int, purpose: str, round: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(root_seed, agent_id, purpose, round)))


class CommonCoin:
    """Pseudorandom source every honest agent can rebuild from the shared seed."""

    def __init__(self, root_seed: int, purpose: str = "coin"):
        self._rng = stream(root_seed, COMMON, purpose)

    def bernoulli(self, p: float) -> int:
        if not 0.0 < p <= 1.0:
            raise ValueError("p must lie in (0, 1]")
        return int(self._rng.random() < p)

    def uniform_round(self, T: int) -> int:
        """Uniform draw from ``{0, ..., T-1}``."""
        if T < 1:
            raise ValueError("T must be >= 1")
        return int(self._rng.integers(T))


@dataclass
class FederationState:
    """Per-agent learning state, rows indexed by agent id."""

    theta: np.ndarray
    theta_prev: np.ndarray
    realized: np.ndarray
    t: int = 0
    adam_m: np.ndarray | None = None
    adam_v: np.ndarray | None = None
    adam_steps: np.ndarray | None = None
    trajectories: np.ndarray | None = None
    history: list = field(default_factory=list)

    @classmethod
    def initial(cls, theta0: np.ndarray, K: int, keep_history: bool = True) -> "FederationState":
        theta = np.tile(np.asarray(theta0, dtype=np.float64), (K, 1))
        st = cls(
            theta=theta, theta_prev=theta.copy(), realized=np.zeros_like(theta),
            adam_m=np.zeros_like(theta), adam_v=np.zeros_like(theta),
            adam_steps=np.zeros(K, dtype=np.int64), trajectories=np.zeros(K, dtype=np.int64),
        )
        if keep_history:
            st.history.append(theta.copy())
        else:
            st.history = None
        return st

    @property
    def K(self) -> int:
        return self.theta.shape[0]

    def snapshot(self) -> tuple:
        """Everything that must agree between two replays of the same run."""
        return (self.t, self.theta.tobytes(), self.theta_prev.tobytes(), self.realized.tobytes(),
                self.trajectories.tobytes())


@dataclass
class RoundContext:
    """Scratch space shared by the phases of one round."""

    t: int
    byzantine: np.ndarray
    data: dict = field(default_factory=dict)

    @property
    def honest(self) -> np.ndarray:
        return ~self.byzantine


Phase = Callable[[FederationState, RoundContext], None]


def check_finite(state: FederationState, phase: str, t: int, agents=None):
    rows = state.theta if agents is None else state.theta[agents]
    bad = ~np.all(np.isfinite(rows), axis=1)
    if bad.any():
        ids = np.flatnonzero(bad) if agents is None else np.asarray(agents)[bad]
        raise SimulationError(f"non-finite parameters after phase {phase!r} in round {t} at agents {ids.tolist()}")


def run_round(state: FederationState, phase_plan: list[tuple[str, Phase]], byzantine: np.ndarray) -> RoundContext:
    """Run the phases of round ``state.t`` in order, then advance ``t``.

    Phases are barriers: each one sees the complete output of the previous
    one.  Honest parameters are checked for finiteness after every phase.
    """
    ctx = RoundContext(state.t, np.asarray(byzantine, dtype=bool))
    honest = np.flatnonzero(ctx.honest)
    for name, phase in phase_plan:
        phase(state, ctx)
        check_finite(state, name, ctx.t, honest)
    state.t += 1
    if state.history is not None:
        state.history.append(state.theta.copy())
    return ctx
