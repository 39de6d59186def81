"""Iterated averaging agreement: minimum-diameter (MDA) and greedy (GDA) subset averaging."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .robust_agg import ceil_count

KINDS = ("mda", "gda", "none")
ALPHA_BAR_LIMIT = {"mda": 0.25, "gda": 0.2}
DEFAULT_SUBSET_CAP = 10**6


@dataclass
class AgreementConfig:
    kind: str = "mda"
    rounds: int = 3
    alpha_bar: float = 0.0
    subset_cap: int = DEFAULT_SUBSET_CAP

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"agreement.kind: unknown {self.kind!r}")
        if self.rounds < 0:
            raise ConfigurationError("agreement.rounds must be >= 0")
        if self.alpha_bar < 0:
            raise ConfigurationError("agreement.alpha_bar must be >= 0")
        limit = ALPHA_BAR_LIMIT.get(self.kind)
        if limit is not None and not self.alpha_bar < limit:
            raise ConfigurationError(f"agreement.alpha_bar={self.alpha_bar:.4g} must be below {limit} for {self.kind}")

    def subset_size(self, K: int) -> int:
        return min(K, max(1, ceil_count((1.0 - self.alpha_bar) * K)))


def diameter(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 2:
        return 0.0
    diff = x[:, None, :] - x[None, :, :]
    return float(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).max()))


_COMBOS: dict = {}


def _combinations(K: int, m: int) -> np.ndarray:
    key = (K, m)
    if key not in _COMBOS:
        _COMBOS[key] = np.array(list(itertools.combinations(range(K), m)), dtype=np.int64).reshape(-1, m)
    return _COMBOS[key]


def mda_select(received: np.ndarray, m: int, cap: int = DEFAULT_SUBSET_CAP) -> np.ndarray:
    """Indices of the size-``m`` subset with the smallest diameter.

    Subsets are scanned in lexicographic order, so ties resolve to the
    lexicographically smallest index set.
    """
    x = np.asarray(received, dtype=np.float64)
    K = len(x)
    if not 1 <= m <= K:
        raise ConfigurationError(f"subset size {m} outside [1, {K}]")
    n = math.comb(K, m)
    if n > cap:
        raise ConfigurationError(
            f"minimum-diameter search over C({K},{m}) = {n} subsets exceeds the cap {cap}; use agreement.kind = 'gda'"
        )
    diff = x[:, None, :] - x[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    combos = _combinations(K, m)
    diam = d2[combos[:, :, None], combos[:, None, :]].max(axis=(1, 2))
    return combos[int(np.argmin(diam))].copy()


def gda_select(received: np.ndarray, self_value: np.ndarray, m: int) -> np.ndarray:
    """Indices of the ``m`` received vectors nearest to ``self_value``, nearest first."""
    x = np.asarray(received, dtype=np.float64)
    if not 1 <= m <= len(x):
        raise ConfigurationError(f"subset size {m} outside [1, {len(x)}]")
    diff = x - np.asarray(self_value, dtype=np.float64)
    d2 = np.einsum("ij,ij->i", diff, diff)
    return np.argsort(d2, kind="stable")[:m]


def avg_agree_round(local: np.ndarray, mailbox: np.ndarray, config: AgreementConfig) -> np.ndarray:
    """One select-and-average step for one agent."""
    K = len(mailbox)
    m = config.subset_size(K)
    if config.kind == "none":
        return np.asarray(local, dtype=np.float64).copy()
    if config.kind == "mda":
        idx = mda_select(mailbox, m, config.subset_cap)
    else:
        idx = gda_select(mailbox, local, m)
    if len(idx) == 1:
        return np.asarray(mailbox[idx[0]], dtype=np.float64).copy()
    return mailbox[np.sort(idx)].mean(axis=0)


def run_agreement(values: np.ndarray, byzantine: np.ndarray, adversary, config: AgreementConfig,
                  t: int = 0, recipients=None) -> np.ndarray:
    """``config.rounds`` broadcast/select/average rounds.

    ``values`` is ``(K, d)``; rows of Byzantine agents are what they would
    send if honest (the adversary decides what is actually delivered).
    Returns the updated ``(K, d)`` array; rows of agents outside
    ``recipients`` are left unchanged.
    """
    cur = np.asarray(values, dtype=np.float64).copy()
    byzantine = np.asarray(byzantine, dtype=bool)
    recipients = np.flatnonzero(~byzantine) if recipients is None else np.asarray(recipients)
    if config.kind == "none" or config.rounds == 0 or len(cur) == 1:
        return cur
    for r in range(config.rounds):
        boxes = adversary.build_mailboxes(cur, byzantine, recipients, t, phase=f"agree{r}")
        nxt = cur.copy()
        if boxes.shared and config.kind == "mda":
            shared = avg_agree_round(cur[recipients[0]], boxes.rows[0], config)
            nxt[recipients] = shared
        else:
            for k in recipients:
                nxt[k] = avg_agree_round(cur[k], boxes.for_recipient(k), config)
        cur = nxt
    return cur
