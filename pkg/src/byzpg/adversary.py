"""The omniscient Byzantine adversary.

The adversary sees every honest payload of the current round before anything
is delivered, and then writes the Byzantine rows of each recipient's mailbox.
It keeps no memory between rounds: everything it uses is passed in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .runtime import COMMON, stream

ATTACKS = ("none", "random_action", "large_noise", "avg_zero")


@dataclass
class AdversaryConfig:
    """``attack`` may also be a callable ``(recipient, sender, honest_payloads, rng) -> vector``.

    ``noise_std=None`` picks ``noise_scale * rms(||honest payload||) / sqrt(d)``
    from the current round.
    """

    attack: str | Callable = "none"
    byzantine_count: int = 0
    selection: str = "static"
    noise_std: float | None = None
    noise_scale: float = 10.0

    def __post_init__(self):
        if not callable(self.attack) and self.attack not in ATTACKS:
            raise ConfigurationError(f"adversary.attack: unknown {self.attack!r}")
        if self.selection not in ("static", "per_round"):
            raise ConfigurationError(f"adversary.selection: unknown {self.selection!r}")
        if self.byzantine_count < 0:
            raise ConfigurationError("adversary.byzantine_count must be >= 0")
        if self.noise_std is not None and self.noise_std <= 0:
            raise ConfigurationError("adversary.noise_std must be positive")

    @property
    def needs_own_computation(self) -> bool:
        """Whether Byzantine senders' payloads derive from their own local computation."""
        return self.attack in ("none", "random_action")


@dataclass
class Mailboxes:
    """What each recipient receives: ``rows[r]`` is a ``(K, d)`` array indexed by sender.

    ``shared`` is true when every recipient got the same rows, letting
    callers aggregate once.
    """

    recipients: np.ndarray
    rows: np.ndarray
    shared: bool

    def for_recipient(self, k: int) -> np.ndarray:
        return self.rows[0] if self.shared else self.rows[int(np.flatnonzero(self.recipients == k)[0])]


class Adversary:
    def __init__(self, config: AdversaryConfig, K: int, root_seed: int, eligible=None):
        self.config = config
        self.K = K
        self.root_seed = root_seed
        self.eligible = np.arange(K) if eligible is None else np.asarray(eligible)
        if config.byzantine_count > len(self.eligible):
            raise ConfigurationError(
                f"adversary.byzantine_count={config.byzantine_count} exceeds the {len(self.eligible)} eligible agents"
            )
        self._static = self._draw(0) if config.selection == "static" else None

    def _draw(self, t: int) -> np.ndarray:
        rng = stream(self.root_seed, COMMON, "byzantine-set", t)
        chosen = rng.choice(self.eligible, size=self.config.byzantine_count, replace=False)
        return np.sort(chosen)

    def select_byzantine_set(self, t: int) -> np.ndarray:
        if self.config.byzantine_count == 0:
            return np.zeros(0, dtype=np.int64)
        return self._static if self._static is not None else self._draw(t)

    def byzantine_mask(self, t: int) -> np.ndarray:
        mask = np.zeros(self.K, dtype=bool)
        mask[self.select_byzantine_set(t)] = True
        return mask

    # -- payload construction -------------------------------------------

    def _noise_std(self, honest_rows: np.ndarray) -> float:
        if self.config.noise_std is not None:
            return self.config.noise_std
        d = honest_rows.shape[1]
        rms = np.sqrt(np.mean(np.sum(honest_rows**2, axis=1))) if len(honest_rows) else 0.0
        return self.config.noise_scale * max(rms, 1e-12) / np.sqrt(d)

    def attack_rows(self, payloads: np.ndarray, byzantine: np.ndarray, recipients: np.ndarray,
                    t: int, phase: str = "gradient") -> tuple[np.ndarray, bool]:
        """Byzantine rows per recipient: ``(len(recipients), n_byz, d)``, plus a shared flag.

        ``payloads[s]`` is what sender ``s`` would send if it were honest; for
        Byzantine senders it is their own (possibly corrupted-environment)
        computation, used by ``none`` and ``random_action``.
        """
        attack = self.config.attack
        byz = np.flatnonzero(byzantine)
        honest_rows = payloads[~byzantine]
        R, d = len(recipients), payloads.shape[1]
        if len(byz) == 0:
            return np.zeros((1, 0, d)), True
        if callable(attack):
            out = np.empty((R, len(byz), d))
            for j, s in enumerate(byz):
                rng = stream(self.root_seed, int(s), f"{phase}-custom", t)
                for i, r in enumerate(recipients):
                    out[i, j] = attack(int(r), int(s), honest_rows, rng)
            return out, False
        if attack in ("none", "random_action"):
            return payloads[byz][None], True
        if attack == "avg_zero":
            b = -honest_rows.sum(axis=0) / len(byz)
            return np.broadcast_to(b, (1, len(byz), d)).copy(), True
        std = self._noise_std(honest_rows)
        out = np.empty((R, len(byz), d))
        for j, s in enumerate(byz):
            rng = stream(self.root_seed, int(s), f"{phase}-noise", t)
            out[:, j] = rng.normal(0.0, std, size=(R, d))
        return out, False

    def attack_gradient(self, payloads: np.ndarray, byzantine: np.ndarray, recipient: int, sender: int,
                        t: int, phase: str = "gradient") -> np.ndarray:
        """The vector Byzantine ``sender`` delivers to ``recipient``."""
        if not byzantine[sender]:
            raise ConfigurationError(f"agent {sender} is not Byzantine in round {t}")
        recipients = np.arange(self.K)
        rows, shared = self.attack_rows(payloads, byzantine, recipients, t, phase)
        j = int(np.flatnonzero(np.flatnonzero(byzantine) == sender)[0])
        return rows[0 if shared else recipient, j].copy()

    def build_mailboxes(self, payloads: np.ndarray, byzantine: np.ndarray, recipients,
                        t: int, phase: str = "gradient") -> Mailboxes:
        """Honest rows copied verbatim to every recipient; Byzantine rows from the attack."""
        payloads = np.asarray(payloads, dtype=np.float64)
        byzantine = np.asarray(byzantine, dtype=bool)
        recipients = np.asarray(recipients)
        rows_byz, shared = self.attack_rows(payloads, byzantine, recipients, t, phase)
        n = 1 if shared else len(recipients)
        rows = np.broadcast_to(payloads, (n, *payloads.shape)).copy()
        rows[:, byzantine] = rows_byz
        return Mailboxes(recipients, rows, shared)
