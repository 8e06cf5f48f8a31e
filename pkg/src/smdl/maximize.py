"""Maximizers for the selection objective.

Included: exhaustive oracles over ordered chains and unordered subsets (for
small instances only), naive greedy, lazy greedy with a stale-upper-bound
heap, the sampled stochastic greedy that evaluates only a random subset of
candidates per round, and the two-stage partitioned batch selection built on
top of it. Every maximizer breaks gain ties toward the lowest index so runs
are reproducible and variants are comparable index-for-index.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import objective
from .core import (
    CheckedConfig,
    ConfigError,
    Dataset,
    ObjectiveWeights,
    Rng,
    SelectionConfig,
    partition_indices,
    sample_size,
    validate_config,
)
from .objective import SelectionState, StateFactory, commit, gains
from . import scoring

MAX_CHAIN_TUPLES = 5040
MAX_SET_SUBSETS = 20000

MAXIMIZER_KINDS = (
    "brute_force_chain",
    "brute_force_set",
    "greedy",
    "lazy_greedy",
    "ltlg",
    "partitioned",
)


@dataclass
class SelectionResult:
    """Outcome of one maximizer run."""

    indices: list[int]
    chain_value: float
    set_value: float
    gain_evaluations: int
    wall_time: float
    step_gains: list[float] = field(default_factory=list)


def _argmax_lowest(candidates: np.ndarray, values: np.ndarray) -> tuple[int, float]:
    """Index with the maximum value; exact ties go to the lowest index."""
    top = values.max()
    winners = candidates[values == top]
    return int(winners.min()), float(top)


def _finish(
    state: SelectionState, evaluations: int, started: float, with_set_value: bool = True
) -> SelectionResult:
    sv = (
        objective.set_value(state.selected, state.dataset, state.weights, state.cache)
        if with_set_value
        else float("nan")
    )
    return SelectionResult(
        indices=list(state.selected),
        chain_value=state.chain_value,
        set_value=sv,
        gain_evaluations=evaluations,
        wall_time=time.perf_counter() - started,
        step_gains=list(state.step_gains),
    )


def greedy(pool: np.ndarray, b: int, factory: StateFactory) -> SelectionResult:
    """Scan the full remaining pool every round and commit the best candidate."""
    started = time.perf_counter()
    pool = np.asarray(pool, dtype=np.int64)
    if len(pool) == 0:
        raise ConfigError("cannot select from an empty pool")
    b = min(b, len(pool))
    state = factory(pool, b)
    evals = 0
    for _ in range(b):
        cand = state.remaining()
        g = gains(state, cand)
        evals += len(cand)
        best, best_gain = _argmax_lowest(cand, g)
        commit(state, best, gain=best_gain)
    return _finish(state, evals, started)


def lazy_greedy(pool: np.ndarray, b: int, factory: StateFactory) -> SelectionResult:
    """Greedy with stale upper bounds kept in a max-heap.

    Because gains only shrink as the selection grows, a popped entry whose
    bound was computed at the current selection size is already the argmax.
    Matches naive greedy index-for-index whenever gains are diminishing, and
    never evaluates more gains than the naive scan.
    """
    started = time.perf_counter()
    pool = np.asarray(pool, dtype=np.int64)
    if len(pool) == 0:
        raise ConfigError("cannot select from an empty pool")
    b = min(b, len(pool))
    state = factory(pool, b)
    initial = gains(state, pool)
    evals = len(pool)
    # heap entries: (-bound, index, selection size the bound was computed at)
    heap = [(-float(g), int(i), 0) for g, i in zip(initial, pool)]
    heapq.heapify(heap)
    while len(state.selected) < b and heap:
        neg_bound, idx, stamp = heapq.heappop(heap)
        if stamp == len(state.selected):
            commit(state, idx, gain=-neg_bound)
        else:
            g = float(gains(state, np.asarray([idx]))[0])
            evals += 1
            heapq.heappush(heap, (-g, idx, len(state.selected)))
    return _finish(state, evals, started)


def ltlg(
    pool: np.ndarray,
    b: int,
    s: int,
    rng: Rng,
    factory: StateFactory,
    with_set_value: bool = True,
) -> SelectionResult:
    """Stochastic greedy: each round evaluates gains on a uniform sample
    (without replacement) of min(s, remaining) candidates and commits the best."""
    started = time.perf_counter()
    pool = np.asarray(pool, dtype=np.int64)
    if len(pool) == 0:
        raise ConfigError("cannot select from an empty pool")
    if s < 1:
        raise ConfigError(f"sample size must be >= 1, got {s}")
    b = min(b, len(pool))
    state = factory(pool, b)
    gen = rng.gen
    evals = 0
    for _ in range(b):
        remaining = state.remaining()
        k = min(s, len(remaining))
        picks = gen.choice(len(remaining), size=k, replace=False)
        cand = remaining[picks]
        g = gains(state, cand)
        evals += k
        best, best_gain = _argmax_lowest(cand, g)
        commit(state, best, gain=best_gain)
    return _finish(state, evals, started, with_set_value)


def get_mini_batch(
    dataset: Dataset,
    b: int,
    m: int,
    epsilon: float,
    rng: Rng,
    factory: StateFactory,
    threads: int = 1,
    pool: np.ndarray | None = None,
) -> SelectionResult:
    """Two-stage partitioned batch selection.

    The ground set is split into m balanced random parts; sampled greedy picks
    up to b items independently from each (partition-level parallelism over
    `threads`, each with its own forked stream so the result is identical
    however the work is scheduled); the union of the picks then goes through
    one final sampled-greedy pass that keeps b. The sample size s is derived
    once from (n, b, epsilon) and reused in both stages, clamped per round to
    what remains.
    """
    started = time.perf_counter()
    if pool is None:
        pool = np.arange(dataset.n, dtype=np.int64)
    else:
        pool = np.asarray(pool, dtype=np.int64)
    n = len(pool)
    if b > n:
        raise ConfigError(f"batch size {b} exceeds pool size {n}")
    if m > n:
        raise ConfigError(f"partitions {m} exceeds pool size {n}")
    s = sample_size(n, b, epsilon)
    parts = partition_indices(pool, m, rng.fork("partition"))

    def run_part(i: int) -> SelectionResult:
        part = parts[i]
        # intermediate results only feed indices into the merge; skip diagnostics
        return ltlg(part, min(b, len(part)), s, rng.fork("part", i), factory, with_set_value=False)

    if threads > 1 and m > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            part_results = list(ex.map(run_part, range(m)))
    else:
        part_results = [run_part(i) for i in range(m)]

    merged = np.sort(np.concatenate([np.asarray(r.indices, dtype=np.int64) for r in part_results]))
    final = ltlg(merged, min(b, len(merged)), s, rng.fork("merge"), factory)
    evals = sum(r.gain_evaluations for r in part_results) + final.gain_evaluations
    return SelectionResult(
        indices=final.indices,
        chain_value=final.chain_value,
        set_value=final.set_value,
        gain_evaluations=evals,
        wall_time=time.perf_counter() - started,
        step_gains=final.step_gains,
    )


def brute_force(
    pool: np.ndarray, b: int, factory: StateFactory, mode: str = "set"
) -> SelectionResult:
    """Exhaustive oracle. mode='chain' maximizes the order-dependent chain
    value over all ordered b-tuples; mode='set' maximizes the order-free set
    value over all b-subsets. Guard rails refuse instances beyond
    5040 tuples / 20000 subsets. Ties keep the first candidate in
    lexicographic enumeration order of the sorted pool.
    """
    started = time.perf_counter()
    pool = sorted(int(i) for i in np.asarray(pool, dtype=np.int64))
    if not pool:
        raise ConfigError("cannot select from an empty pool")
    b = min(b, len(pool))
    ds, w, cache = factory.dataset, factory.weights, factory.cache
    evals = 0
    best_value = -math.inf
    best: tuple[int, ...] = ()
    if mode == "chain":
        count = math.perm(len(pool), b)
        if count > MAX_CHAIN_TUPLES:
            raise ConfigError(
                f"instance too large for the chain oracle: {count} ordered tuples "
                f"(limit {MAX_CHAIN_TUPLES})"
            )
        for seq in itertools.permutations(pool, b):
            value = objective.chain_value(seq, ds, w, cache)
            evals += b
            if value > best_value:
                best_value, best = value, seq
    elif mode == "set":
        count = math.comb(len(pool), b)
        if count > MAX_SET_SUBSETS:
            raise ConfigError(
                f"instance too large for the set oracle: {count} subsets "
                f"(limit {MAX_SET_SUBSETS})"
            )
        for sub in itertools.combinations(pool, b):
            value = objective.set_value(sub, ds, w, cache)
            evals += 1
            if value > best_value:
                best_value, best = value, sub
    else:
        raise ConfigError(f"unknown oracle mode {mode!r}; expected 'chain' or 'set'")
    indices = list(best)
    return SelectionResult(
        indices=indices,
        chain_value=objective.chain_value(indices, ds, w, cache),
        set_value=objective.set_value(indices, ds, w, cache),
        gain_evaluations=evals,
        wall_time=time.perf_counter() - started,
    )


def run_selection(
    dataset: Dataset,
    weights: ObjectiveWeights,
    sel: SelectionConfig,
    threads: int = 1,
) -> tuple[SelectionResult, scoring.ScoreCache, CheckedConfig]:
    """Validate the config, build a fresh score cache, and run one partitioned
    batch selection. Single entry point shared by the CLI and the bindings so
    both produce identical indices for identical (data, config, seed)."""
    checked = validate_config(weights, sel, dataset)
    cache = scoring.refresh(None, dataset, 0, sel, checked.weights)
    factory = StateFactory(dataset, checked.weights, cache)
    rng = Rng(sel.seed)
    result = get_mini_batch(
        dataset, sel.batch_size, sel.partitions, sel.epsilon, rng, factory, threads=threads
    )
    return result, cache, checked
