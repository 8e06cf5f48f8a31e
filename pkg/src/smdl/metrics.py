"""Distance metrics for redundancy scoring, scale estimation, and normalization.

All four metrics return non-negative distances with distance(u, u) = 0:

    euclidean    ||u - v||_2
    cosine       1 - u.v / (||u|| ||v||)
    correlation  1 - cosine similarity of the mean-centered vectors
    gaussian     1 - exp(-||u - v||^2 / (2 sigma^2))

The raw Gaussian kernel is a similarity (large when close); it is flipped to
1 - kernel here so that larger always means farther, matching the other three.

Degenerate inputs (zero-norm vectors for cosine, constant vectors for
correlation) return the metric's midpoint 1.0 and bump a per-metric counter
instead of raising, because such points do occur in live feature streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, DataError, METRIC_KINDS, ObjectiveWeights, Rng

SCALE_FLOOR = 1e-12

_degenerate_counts = {"cosine": 0, "correlation": 0}


def degenerate_count(kind: str) -> int:
    return _degenerate_counts[kind]


def reset_degenerate_counts() -> None:
    for key in _degenerate_counts:
        _degenerate_counts[key] = 0


@dataclass(frozen=True)
class Metric:
    """A metric kind with its sigma already resolved (gaussian only)."""

    kind: str
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ConfigError(f"unknown metric {self.kind!r}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")


def distance(metric: Metric, u, v) -> float:
    """Distance between two vectors under the given metric."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DataError(f"vector length mismatch: {u.shape} vs {v.shape}")
    if metric.kind == "euclidean":
        return float(np.linalg.norm(u - v))
    if metric.kind == "gaussian":
        sq = float(np.dot(u - v, u - v))
        return 1.0 - float(np.exp(-sq / (2.0 * metric.sigma**2)))
    if metric.kind == "correlation":
        u = u - u.mean()
        v = v - v.mean()
        kind = "correlation"
    else:
        kind = "cosine"
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        _degenerate_counts[kind] += 1
        return 1.0
    return float(np.clip(1.0 - np.dot(u, v) / (nu * nv), 0.0, 2.0))


def distance_to_point(metric: Metric, points: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Distances from every row of `points` to the single vector v (vectorized)."""
    points = np.asarray(points, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if metric.kind == "euclidean":
        diff = points - v
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if metric.kind == "gaussian":
        diff = points - v
        sq = np.einsum("ij,ij->i", diff, diff)
        return 1.0 - np.exp(-sq / (2.0 * metric.sigma**2))
    if metric.kind == "correlation":
        points = points - points.mean(axis=1, keepdims=True)
        v = v - v.mean()
        kind = "correlation"
    else:
        kind = "cosine"
    norms = np.sqrt(np.einsum("ij,ij->i", points, points))
    nv = float(np.linalg.norm(v))
    out = np.full(points.shape[0], 1.0)
    if nv == 0.0:
        _degenerate_counts[kind] += points.shape[0]
        return out
    ok = norms > 0.0
    bad = int((~ok).sum())
    if bad:
        _degenerate_counts[kind] += bad
    out[ok] = np.clip(1.0 - (points[ok] @ v) / (norms[ok] * nv), 0.0, 2.0)
    return out


def pair_distances(metric: Metric, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-paired distances: out[k] = distance(a[k], b[k])."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if metric.kind == "euclidean":
        diff = a - b
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if metric.kind == "gaussian":
        diff = a - b
        sq = np.einsum("ij,ij->i", diff, diff)
        return 1.0 - np.exp(-sq / (2.0 * metric.sigma**2))
    if metric.kind == "correlation":
        a = a - a.mean(axis=1, keepdims=True)
        b = b - b.mean(axis=1, keepdims=True)
        kind = "correlation"
    else:
        kind = "cosine"
    na = np.sqrt(np.einsum("ij,ij->i", a, a))
    nb = np.sqrt(np.einsum("ij,ij->i", b, b))
    out = np.full(a.shape[0], 1.0)
    ok = (na > 0.0) & (nb > 0.0)
    bad = int((~ok).sum())
    if bad:
        _degenerate_counts[kind] += bad
    dots = np.einsum("ij,ij->i", a[ok], b[ok])
    out[ok] = np.clip(1.0 - dots / (na[ok] * nb[ok]), 0.0, 2.0)
    return out


def _sample_pair_indices(n: int, pairs: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, j) with i != j: exhaustive when small, sampled otherwise."""
    total = n * (n - 1) // 2
    if total <= pairs:
        i, j = np.triu_indices(n, k=1)
        return i, j
    gen = rng.gen
    i = gen.integers(0, n, size=pairs)
    j = (i + 1 + gen.integers(0, n - 1, size=pairs)) % n
    return i, j


def resolve_sigma(features: np.ndarray, rng: Rng, pairs: int = 1024) -> float:
    """Median pairwise euclidean distance (the usual bandwidth heuristic).

    Falls back to 1.0 when every sampled pair coincides.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if n < 2:
        raise DataError(f"sigma heuristic needs at least 2 points, got {n}")
    i, j = _sample_pair_indices(n, pairs, rng)
    dists = pair_distances(Metric("euclidean"), features[i], features[j])
    med = float(np.median(dists))
    return med if med > 0.0 else 1.0


def estimate_scale(features: np.ndarray, metric: Metric, rng: Rng, pairs: int = 1024) -> float:
    """Max metric distance over sampled pairs; maps redundancy gains into [0, 1].

    Never below SCALE_FLOOR so callers can divide by it.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if n < 2:
        raise DataError(f"scale estimation needs at least 2 points, got {n}")
    i, j = _sample_pair_indices(n, pairs, rng)
    dists = pair_distances(metric, features[i], features[j])
    return max(float(dists.max()), SCALE_FLOOR)


def resolve_metric(weights: ObjectiveWeights, features: np.ndarray, rng: Rng) -> Metric:
    """Turn the configured metric into a concrete one, resolving sigma if needed."""
    if weights.metric != "gaussian":
        return Metric(weights.metric)
    if isinstance(weights.gaussian_sigma, str):
        return Metric("gaussian", resolve_sigma(features, rng))
    return Metric("gaussian", float(weights.gaussian_sigma))


def minmax_normalize(scores) -> np.ndarray:
    """Affine map onto [0, 1]; a constant vector maps to all zeros."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise DataError("cannot normalize an empty vector")
    lo = float(scores.min())
    hi = float(scores.max())
    if hi == lo:
        return np.zeros_like(scores)
    return (scores - lo) / (hi - lo)
