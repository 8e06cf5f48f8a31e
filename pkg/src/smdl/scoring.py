"""Per-point selection scores and the refresh-rate cache that reuses them.

The three modular scores are entropy of the model's predicted distribution
(uncertainty), affinely-mapped cosine similarity to the dataset mean
(mean-closeness), and the square-root feature sum from a frozen model
(feature-match). Each is min-max normalized over the full dataset at refresh
time so they contribute on comparable [0, 1] scales.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import Dataset, ObjectiveWeights, Rng, SelectionConfig
from .metrics import Metric, estimate_scale, minmax_normalize, resolve_metric


def uncertainty(probs_row) -> float:
    """Entropy -sum(p ln p) of one probability row, with 0 ln 0 := 0."""
    p = np.asarray(probs_row, dtype=np.float64)
    mask = p > 0
    return float(-(p[mask] * np.log(p[mask])).sum())


def uncertainty_all(probs: np.ndarray) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


def mean_closeness(x, mu) -> float:
    """Cosine similarity to the mean, mapped from [-1, 1] into [0, 1].

    The affine map keeps the score non-negative, which the monotonicity of the
    combined objective relies on. Zero-norm inputs get the neutral value 0.5.
    """
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    nx = float(np.linalg.norm(x))
    nm = float(np.linalg.norm(mu))
    if nx == 0.0 or nm == 0.0:
        return 0.5
    cos = float(np.clip(np.dot(x, mu) / (nx * nm), -1.0, 1.0))
    return (1.0 + cos) / 2.0


def mean_closeness_all(features: np.ndarray, mu: np.ndarray) -> np.ndarray:
    feats = np.asarray(features, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    nm = float(np.linalg.norm(mu))
    out = np.full(feats.shape[0], 0.5)
    if nm == 0.0:
        return out
    norms = np.sqrt(np.einsum("ij,ij->i", feats, feats))
    ok = norms > 0.0
    cos = np.clip((feats[ok] @ mu) / (norms[ok] * nm), -1.0, 1.0)
    out[ok] = (1.0 + cos) / 2.0
    return out


def feature_match_modular(fixed_row) -> float:
    """Sum of square roots of one point's non-negative fixed features."""
    row = np.asarray(fixed_row, dtype=np.float64)
    return float(np.sqrt(row).sum())


def feature_match_modular_all(fixed: np.ndarray) -> np.ndarray:
    return np.sqrt(np.asarray(fixed, dtype=np.float64)).sum(axis=1)


def feature_match_set_gain(accumulator: np.ndarray, fixed_row: np.ndarray) -> float:
    """Set-mode gain: sum_u [sqrt(acc_u + row_u) - sqrt(acc_u)].

    The accumulator holds per-dimension sums over the already-selected set and
    is NOT modified here; the caller commits it on selection. Concavity of the
    square root makes this gain shrink as the accumulator grows, which is what
    certifies the set-mode objective as submodular.
    """
    acc = np.asarray(accumulator, dtype=np.float64)
    row = np.asarray(fixed_row, dtype=np.float64)
    return float((np.sqrt(acc + row) - np.sqrt(acc)).sum())


def feature_match_set_gain_many(accumulator: np.ndarray, rows: np.ndarray) -> np.ndarray:
    acc = np.asarray(accumulator, dtype=np.float64)
    base = np.sqrt(acc).sum()
    return np.sqrt(acc[None, :] + np.asarray(rows, dtype=np.float64)).sum(axis=1) - base


@dataclass(frozen=True)
class ScoreCache:
    """Normalized per-point scores plus the shared quantities gains consume.

    `age` counts selection iterations since the last recomputation; the cache
    must only be consumed while age < refresh_rate. `model_stamp` records the
    iteration whose model produced the cached probs/features.
    """

    u_scores: np.ndarray
    mc_scores: np.ndarray
    fm_scores: np.ndarray
    mean: np.ndarray
    redundancy_scale: float
    metric: Metric
    model_stamp: int
    age: int = 0
    refresh_count: int = 1


def cache_is_stale(cache: Optional[ScoreCache], refresh_rate: int) -> bool:
    """True when the next `refresh` call will recompute rather than reuse."""
    return cache is None or cache.age + 1 >= refresh_rate


def refresh(
    cache: Optional[ScoreCache],
    dataset: Dataset,
    iteration: int,
    cfg: SelectionConfig,
    weights: ObjectiveWeights,
) -> ScoreCache:
    """Return a usable cache for this iteration, recomputing only when due.

    Within a refresh window the cache is returned as-is with its age bumped;
    once the window is exhausted all score vectors, the dataset mean, and the
    redundancy scale are rebuilt from the dataset's current probs/features
    (which the caller must have recomputed from the current model by then).
    """
    if not cache_is_stale(cache, cfg.refresh_rate):
        return replace(cache, age=cache.age + 1)
    rng = Rng(cfg.seed).fork("scores")
    if dataset.n >= 2:
        metric = resolve_metric(weights, dataset.features, rng.fork("sigma"))
        scale = estimate_scale(dataset.features, metric, rng.fork("scale"))
    else:
        sigma = weights.gaussian_sigma if not isinstance(weights.gaussian_sigma, str) else 1.0
        metric = Metric(weights.metric, float(sigma))
        scale = 1.0
    u = minmax_normalize(uncertainty_all(dataset.probs))
    mu = dataset.features.mean(axis=0)
    mc = minmax_normalize(mean_closeness_all(dataset.features, mu))
    if dataset.fixed_features is not None:
        fm = minmax_normalize(feature_match_modular_all(dataset.fixed_features))
    else:
        fm = np.zeros(dataset.n)
    return ScoreCache(
        u_scores=u,
        mc_scores=mc,
        fm_scores=fm,
        mean=mu,
        redundancy_scale=scale,
        metric=metric,
        model_stamp=iteration,
        age=0,
        refresh_count=1 if cache is None else cache.refresh_count + 1,
    )
