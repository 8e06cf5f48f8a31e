"""The combined selection objective: marginal gains, incremental state, and
the two value readings (chain and set).

A candidate's marginal gain given the selected set S is

    lambda1 * U(a) + lambda2 * red(a, S) + lambda3 * MC(a) + lambda4 * FM(a, S)

where red(a, S) is the candidate's minimum distance to S divided by the
redundancy scale and clamped to [0, 1], and red(a, {}) := r_max so the very
first pick is decided by the modular terms plus a constant diversity credit.
FM(a, S) is the cached modular score, or the square-root set gain in set
mode. All terms are non-negative, so every gain is non-negative and the
accumulated chain value never decreases.

The chain value (sum of committed gains in insertion order) is the engine's
canonical objective: it is exactly what the greedy maximizers optimize. The
set value re-reads the redundancy term order-free as
sum_i min_{j != i} dist(i, j); it exists because exhaustive oracles need a
set function. The two readings agree for singletons and, with lambda2 = 0 in
set mode, everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Dataset, ObjectiveWeights
from .metrics import distance_to_point
from .scoring import ScoreCache, feature_match_set_gain_many


@dataclass
class SelectionState:
    """Incremental state for one greedy run over a fixed candidate pool.

    min_dist[k] is the exact raw-metric minimum distance from pool[k] to the
    selected set, maintained with one vectorized distance pass per commit.
    Single-owner: mutate from one thread only.
    """

    pool: np.ndarray
    capacity: int
    dataset: Dataset
    weights: ObjectiveWeights
    cache: ScoreCache
    selected: list[int] = field(default_factory=list)
    chain_value: float = 0.0
    step_gains: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.pool = np.asarray(self.pool, dtype=np.int64)
        self._pos = np.full(self.dataset.n, -1, dtype=np.int64)
        self._pos[self.pool] = np.arange(len(self.pool))
        self.available = np.ones(len(self.pool), dtype=bool)
        self.min_dist = np.full(len(self.pool), np.inf)
        if self.weights.fm_mode == "set" and self.dataset.fixed_features is not None:
            self.fm_acc = np.zeros(self.dataset.num_fixed)
        else:
            self.fm_acc = None
        # cache the pool's feature rows (and a scratch buffer) so each commit's
        # pool-distance pass avoids fancy-indexing the dataset again; the exact
        # (p - v)^2 form is kept so coincident points give a distance of 0.0
        kind = self.cache.metric.kind
        feats = self.dataset.features[self.pool]
        if kind == "correlation":
            feats = feats - feats.mean(axis=1, keepdims=True)
        self._feat = feats
        self._buf = np.empty_like(feats)
        if kind in ("cosine", "correlation"):
            self._norms = np.sqrt(np.einsum("ij,ij->i", feats, feats))

    def _pool_distances(self, a: int) -> np.ndarray:
        """Distances from every pool member to point a under the cache metric."""
        kind = self.cache.metric.kind
        v = self._feat[self.position(a)]
        if kind in ("euclidean", "gaussian"):
            np.subtract(self._feat, v, out=self._buf)
            sq = np.einsum("ij,ij->i", self._buf, self._buf)
            if kind == "euclidean":
                return np.sqrt(sq)
            return 1.0 - np.exp(-sq / (2.0 * self.cache.metric.sigma**2))
        nv = self._norms[self.position(a)]
        out = np.full(len(self.pool), 1.0)
        if nv == 0.0:
            return out
        ok = self._norms > 0.0
        out[ok] = np.clip(1.0 - (self._feat[ok] @ v) / (self._norms[ok] * nv), 0.0, 2.0)
        return out

    def position(self, index: int) -> int:
        pos = int(self._pos[index])
        if pos < 0:
            raise ValueError(f"index {index} is not in the candidate pool")
        return pos

    def remaining(self) -> np.ndarray:
        return self.pool[self.available]


def gains(state: SelectionState, candidates: np.ndarray) -> np.ndarray:
    """Marginal gains for a batch of candidate indices (no validity checks)."""
    cand = np.asarray(candidates, dtype=np.int64)
    w = state.weights
    cache = state.cache
    out = np.zeros(len(cand))
    if w.lambda1:
        out += w.lambda1 * cache.u_scores[cand]
    if w.lambda3:
        out += w.lambda3 * cache.mc_scores[cand]
    if w.lambda2:
        if state.selected:
            # min_dist is non-negative by construction; only the upper clamp matters
            red = np.minimum(state.min_dist[state._pos[cand]] / cache.redundancy_scale, 1.0)
        else:
            red = np.full(len(cand), w.r_max)
        out += w.lambda2 * red
    if w.lambda4:
        if state.fm_acc is not None:
            out += w.lambda4 * feature_match_set_gain_many(
                state.fm_acc, state.dataset.fixed_features[cand]
            )
        else:
            out += w.lambda4 * cache.fm_scores[cand]
    return out


def marginal_gain(state: SelectionState, a: int) -> float:
    """Gain of adding candidate a to the current selection; state unchanged."""
    pos = state.position(a)
    if not state.available[pos]:
        raise ValueError(f"index {a} is already selected")
    return float(gains(state, np.asarray([a]))[0])


def commit(state: SelectionState, a: int, gain: Optional[float] = None) -> float:
    """Append a to the selection and update the incremental structures.

    `gain` may pass in an already-computed marginal gain to avoid recomputing
    it; it must be the value `marginal_gain(state, a)` would return.
    """
    if len(state.selected) >= state.capacity:
        raise ValueError(f"selection capacity {state.capacity} exceeded")
    if gain is None:
        gain = marginal_gain(state, a)
    else:
        pos = state.position(a)
        if not state.available[pos]:
            raise ValueError(f"index {a} is already selected")
    pos = state.position(a)
    state.selected.append(int(a))
    state.available[pos] = False
    np.minimum(state.min_dist, state._pool_distances(a), out=state.min_dist)
    if state.fm_acc is not None:
        state.fm_acc = state.fm_acc + state.dataset.fixed_features[a]
    state.chain_value += gain
    state.step_gains.append(float(gain))
    return float(gain)


class StateFactory:
    """Builds fresh SelectionStates sharing one (dataset, weights, cache) trio."""

    def __init__(self, dataset: Dataset, weights: ObjectiveWeights, cache: ScoreCache):
        self.dataset = dataset
        self.weights = weights
        self.cache = cache

    def __call__(self, pool: np.ndarray, capacity: int) -> SelectionState:
        return SelectionState(
            pool=pool,
            capacity=capacity,
            dataset=self.dataset,
            weights=self.weights,
            cache=self.cache,
        )


def chain_value(
    sequence: Sequence[int],
    dataset: Dataset,
    weights: ObjectiveWeights,
    cache: ScoreCache,
) -> float:
    """Fold marginal gains over `sequence` from the empty selection.

    Order matters whenever lambda2 > 0; the empty sequence evaluates to 0.
    """
    seq = [int(i) for i in sequence]
    if len(set(seq)) != len(seq):
        raise ValueError(f"duplicate index in sequence {seq}")
    if not seq:
        return 0.0
    state = SelectionState(
        pool=np.asarray(seq, dtype=np.int64),
        capacity=len(seq),
        dataset=dataset,
        weights=weights,
        cache=cache,
    )
    for a in seq:
        commit(state, a)
    return state.chain_value


def set_value(
    subset: Sequence[int],
    dataset: Dataset,
    weights: ObjectiveWeights,
    cache: ScoreCache,
) -> float:
    """Order-free objective reading for a subset (diagnostic / oracle use).

    Modular terms sum over members; in set mode the feature-match total is
    sum_u sqrt(sum over members). The redundancy term is each member's minimum
    distance to the rest, normalized and clamped; a singleton gets r_max, the
    same convention as the first chain pick.
    """
    subset = [int(i) for i in subset]
    if len(set(subset)) != len(subset):
        raise ValueError(f"duplicate index in subset {subset}")
    if not subset:
        return 0.0
    idx = np.asarray(subset, dtype=np.int64)
    w = weights
    total = 0.0
    if w.lambda1:
        total += w.lambda1 * float(cache.u_scores[idx].sum())
    if w.lambda3:
        total += w.lambda3 * float(cache.mc_scores[idx].sum())
    if w.lambda4 and dataset.fixed_features is not None:
        if w.fm_mode == "set":
            total += w.lambda4 * float(
                np.sqrt(dataset.fixed_features[idx].sum(axis=0)).sum()
            )
        else:
            total += w.lambda4 * float(cache.fm_scores[idx].sum())
    if w.lambda2:
        if len(idx) == 1:
            total += w.lambda2 * w.r_max
        else:
            feats = dataset.features[idx]
            red = 0.0
            for k in range(len(idx)):
                dists = distance_to_point(cache.metric, feats, feats[k])
                dists[k] = np.inf
                red += float(np.clip(dists.min() / cache.redundancy_scale, 0.0, 1.0))
            total += w.lambda2 * red
    return total
