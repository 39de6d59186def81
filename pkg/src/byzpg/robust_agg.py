"""Robust aggregation of K vectors: Krum, RFA (geometric median) and bucketing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

KINDS = ("krum", "rfa", "bucketed_krum", "bucketed_rfa", "mean")


def ceil_count(x: float) -> int:
    """``ceil`` that ignores float noise such as ``(1 - 1/6) * 12 = 10.000000000000002``."""
    return int(math.ceil(x - 1e-9))


@dataclass
class AggregatorConfig:
    kind: str = "bucketed_rfa"
    alpha: float = 0.0
    alpha_max: float = 0.25
    weiszfeld_iters: int = 64
    weiszfeld_smoothing: float = 1e-8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"aggregator.kind: unknown {self.kind!r}")
        if self.alpha < 0:
            raise ConfigurationError("aggregator.alpha must be >= 0")
        if self.kind != "mean" and not self.alpha < self.alpha_max:
            raise ConfigurationError(
                f"aggregator.alpha={self.alpha:.4g} must be below alpha_max={self.alpha_max:.4g}"
            )
        if self.weiszfeld_iters < 0 or self.weiszfeld_smoothing <= 0:
            raise ConfigurationError("aggregator: weiszfeld_iters >= 0 and smoothing > 0 required")

    @property
    def bucket_size(self) -> int | None:
        """``floor(alpha_max / alpha)``; ``None`` (one bucket) when ``alpha == 0``."""
        if self.alpha == 0:
            return None
        return max(1, int(math.floor(self.alpha_max / self.alpha + 1e-9)))


def _pairwise_sq(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def krum_scores(inputs: np.ndarray, alpha: float) -> np.ndarray:
    """Sum of squared distances to the ``ceil((1-alpha)K)`` nearest inputs (self included)."""
    x = np.asarray(inputs, dtype=np.float64)
    K = len(x)
    m = min(K, max(1, ceil_count((1 - alpha) * K)))
    d2 = np.sort(_pairwise_sq(x), axis=1)
    return d2[:, :m].sum(axis=1)


def krum(inputs: np.ndarray, alpha: float) -> np.ndarray:
    """Input with the smallest Krum score; ties go to the lowest index."""
    x = np.asarray(inputs, dtype=np.float64)
    if len(x) == 1:
        return x[0].copy()
    return x[int(np.argmin(krum_scores(x, alpha)))].copy()


def rfa(inputs: np.ndarray, iters: int = 64, smoothing: float = 1e-8) -> np.ndarray:
    """Smoothed Weiszfeld iterations for the geometric median, started at the mean."""
    x = np.asarray(inputs, dtype=np.float64)
    if len(x) == 1:
        return x[0].copy()
    z = x.mean(axis=0)
    for _ in range(iters):
        dist = np.linalg.norm(x - z, axis=1)
        w = 1.0 / np.maximum(smoothing, dist)
        z = (w @ x) / w.sum()
    return _snap_to_vertex(x, z)


def _snap_to_vertex(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Return the input nearest ``z`` if it satisfies the vertex optimality condition.

    An input point ``x_j`` with multiplicity ``m`` minimizes the sum of
    distances iff the unit vectors from it to the other points sum to a
    vector of norm at most ``m``.  Smoothing otherwise leaves an O(smoothing)
    bias when a majority of inputs coincide.
    """
    j = int(np.argmin(np.linalg.norm(x - z, axis=1)))
    diff = x - x[j]
    dist = np.linalg.norm(diff, axis=1)
    same = dist == 0
    if same.all():
        return x[j].copy()
    pull = (diff[~same] / dist[~same, None]).sum(axis=0)
    if np.linalg.norm(pull) <= same.sum():
        return x[j].copy()
    return z


def bucketize(inputs: np.ndarray, bucket_size: int, rng: np.random.Generator) -> np.ndarray:
    """Randomly permute, split into contiguous groups of ``bucket_size`` and average each."""
    if bucket_size < 1:
        raise ConfigurationError("bucket size must be >= 1")
    x = np.asarray(inputs, dtype=np.float64)
    perm = rng.permutation(len(x))
    xs = x[perm]
    return np.stack([xs[i:i + bucket_size].mean(axis=0) for i in range(0, len(xs), bucket_size)])


def robust_aggregate(inputs: np.ndarray, config: AggregatorConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Aggregate ``inputs`` (``(K, d)``) according to ``config``.

    The bucketed kinds need ``rng``; decentralized callers pass a stream that
    is shared by all honest agents so that they form identical buckets.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ConfigurationError("robust_aggregate expects a non-empty (K, d) array")
    if len(x) == 1:
        return x[0].copy()
    kind = config.kind
    if kind == "mean":
        return x.mean(axis=0)
    if kind == "krum":
        return krum(x, config.alpha)
    if kind == "rfa":
        return rfa(x, config.weiszfeld_iters, config.weiszfeld_smoothing)
    if rng is None:
        raise ConfigurationError(f"aggregator {kind!r} needs an RNG stream for bucketing")
    s = config.bucket_size or len(x)
    buckets = bucketize(x, s, rng)
    if kind == "bucketed_krum":
        # a Byzantine input spoils at most one bucket, so the bad-bucket fraction is <= alpha * s
        return krum(buckets, min(config.alpha * s, 1.0 - 1e-12))
    return rfa(buckets, config.weiszfeld_iters, config.weiszfeld_smoothing)
