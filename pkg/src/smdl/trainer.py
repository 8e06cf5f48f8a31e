"""Reference classifier plus the training loop that consumes selected batches.

The model is multinomial logistic regression with an optional single rectified
hidden layer: the smallest architecture that produces both softmax
probabilities and a penultimate embedding, which is everything batch selection
needs. Three samplers are interchangeable: uniform, loss-ranked, and the
submodular selector.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import ConfigError, DataError, Dataset, ObjectiveWeights, Rng, SelectionConfig
from .core import validate_config
from .maximize import get_mini_batch
from .objective import StateFactory
from . import scoring

SAMPLER_KINDS = ("uniform", "loss_based", "smdl")


@dataclass
class ModelParams:
    """Weights, biases, and momentum buffers. w_hidden is None for the pure
    softmax-regression variant (hidden_units == 0)."""

    w_out: np.ndarray
    b_out: np.ndarray
    w_hidden: Optional[np.ndarray] = None
    b_hidden: Optional[np.ndarray] = None
    velocity: dict = field(default_factory=dict)

    @property
    def hidden_units(self) -> int:
        return 0 if self.w_hidden is None else self.w_hidden.shape[0]

    def named_params(self) -> dict[str, np.ndarray]:
        out = {"w_out": self.w_out, "b_out": self.b_out}
        if self.w_hidden is not None:
            out["w_hidden"] = self.w_hidden
            out["b_hidden"] = self.b_hidden
        return out


@dataclass(frozen=True)
class TrainerConfig:
    epochs: int = 20
    batch_size: int = 50
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0001
    sampler: str = "smdl"
    refresh_rate: int = 5
    seed: int = 0
    loss_based_exponent: float = 100.0
    hidden_units: int = 32
    epoch_without_replacement: bool = False
    threads: int = 1

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.sampler not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler {self.sampler!r}; expected one of {SAMPLER_KINDS}")
        if self.refresh_rate < 1:
            raise ConfigError(f"refresh_rate must be >= 1, got {self.refresh_rate}")
        if self.loss_based_exponent < 1:
            raise ConfigError(
                f"loss_based_exponent must be >= 1, got {self.loss_based_exponent}"
            )
        if self.hidden_units < 0:
            raise ConfigError(f"hidden_units must be >= 0, got {self.hidden_units}")


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_loss: float
    test_accuracy: float
    batches_selected: int
    selection_time: float
    step_time: float


@dataclass
class TrainResult:
    reports: list[EpochReport]
    model: ModelParams
    refresh_count: int


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


def init_model(rng: Rng, dim: int, num_classes: int, hidden_units: int) -> ModelParams:
    gen = rng.gen
    if hidden_units > 0:
        w_hidden = gen.standard_normal((hidden_units, dim)) * math.sqrt(2.0 / dim)
        b_hidden = np.zeros(hidden_units)
        w_out = gen.standard_normal((num_classes, hidden_units)) * math.sqrt(1.0 / hidden_units)
    else:
        w_hidden = None
        b_hidden = None
        w_out = gen.standard_normal((num_classes, dim)) * math.sqrt(1.0 / dim)
    b_out = np.zeros(num_classes)
    model = ModelParams(w_out=w_out, b_out=b_out, w_hidden=w_hidden, b_hidden=b_hidden)
    model.velocity = {name: np.zeros_like(p) for name, p in model.named_params().items()}
    return model


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_full(model: ModelParams, X: np.ndarray):
    """Returns (probs, embedding, hidden preactivation or None)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not np.isfinite(X).all():
        raise DataError("non-finite model input")
    if model.w_hidden is not None:
        z1 = X @ model.w_hidden.T + model.b_hidden
        emb = np.maximum(z1, 0.0)
        logits = emb @ model.w_out.T + model.b_out
        return _softmax(logits), emb, z1
    logits = X @ model.w_out.T + model.b_out
    return _softmax(logits), X, None


def forward(model: ModelParams, x: np.ndarray):
    """Single-point forward pass: (probability vector, penultimate embedding)."""
    probs, emb, _ = _forward_full(model, np.asarray(x, dtype=np.float64)[None, :])
    return probs[0], emb[0]


def forward_batch(model: ModelParams, X: np.ndarray):
    """Batched forward pass: (probs n x C, embedding n x h')."""
    probs, emb, _ = _forward_full(model, X)
    return probs, emb


def cross_entropy_loss(model: ModelParams, X: np.ndarray, y: np.ndarray) -> float:
    probs, _, _ = _forward_full(model, X)
    per_point = -np.log(probs[np.arange(len(y)), y])
    return float(per_point.mean())


def cross_entropy_grads(model: ModelParams, X: np.ndarray, y: np.ndarray) -> dict:
    """Analytic gradients of the mean cross-entropy over (X, y)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    probs, emb, z1 = _forward_full(model, X)
    n = len(y)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = {"w_out": delta.T @ emb, "b_out": delta.sum(axis=0)}
    if model.w_hidden is not None:
        d_emb = delta @ model.w_out
        d_z1 = d_emb * (z1 > 0)
        grads["w_hidden"] = d_z1.T @ X
        grads["b_hidden"] = d_z1.sum(axis=0)
    return grads


def evaluate(model: ModelParams, dataset: Dataset) -> tuple[float, float]:
    """Mean cross-entropy and accuracy over a full dataset."""
    probs, _, _ = _forward_full(model, dataset.features)
    per_point = -np.log(probs[np.arange(dataset.n), dataset.labels])
    acc = float((probs.argmax(axis=1) == dataset.labels).mean())
    return float(per_point.mean()), acc


def sgd_step(
    model: ModelParams, batch: np.ndarray, dataset: Dataset, cfg: TrainerConfig
) -> tuple[float, np.ndarray]:
    """One momentum-SGD update on a batch; the model is updated in place.

    Gradient g gets weight decay added (g + wd * w), the velocity update is
    v <- momentum * v + g, and the step is w <- w - lr * v. Returns the mean
    batch loss and the per-point losses, both measured before the update.
    """
    batch = np.asarray(batch, dtype=np.int64)
    if len(batch) == 0:
        raise ConfigError("empty batch")
    X = dataset.features[batch]
    y = dataset.labels[batch]
    probs, _, _ = _forward_full(model, X)
    per_point = -np.log(probs[np.arange(len(y)), y])
    grads = cross_entropy_grads(model, X, y)
    for name, param in model.named_params().items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise RuntimeError(
                f"non-finite gradient in {name}: |g|_max="
                f"{np.abs(g[np.isfinite(g)]).max() if np.isfinite(g).any() else 'nan'}"
            )
        g = g + cfg.weight_decay * param
        v = model.velocity[name]
        v *= cfg.momentum
        v += g
        param -= cfg.learning_rate * v
    return float(per_point.mean()), per_point


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def loss_rank_weights(n: int, exponent: float) -> np.ndarray:
    """Unnormalized weight for rank r (0 = highest loss): exponent^(-r/n)."""
    ranks = np.arange(n)
    return np.exp(-math.log(exponent) * ranks / n)


def loss_based_sample(losses: np.ndarray, b: int, rng: Rng, exponent: float) -> np.ndarray:
    """Draw b points without replacement, weighted by descending-loss rank.

    exponent -> 1 degenerates to uniform sampling; a huge exponent
    concentrates all mass on the top-b losses. Rank ties break randomly.
    """
    losses = np.asarray(losses, dtype=np.float64)
    n = len(losses)
    gen = rng.gen
    tiebreak = gen.random(n)
    order = np.lexsort((tiebreak, -losses))
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(n)
    w = loss_rank_weights(n, exponent)[ranks]
    return gen.choice(n, size=min(b, n), replace=False, p=w / w.sum())


def snapshot_fixed_features(dataset: Dataset, cfg: TrainerConfig, rng: Rng) -> np.ndarray:
    """Non-negative fixed features from a frozen snapshot model.

    Trains a fresh model for one epoch on a random half of the data, then
    emits its rectified hidden activations for every point. With no hidden
    layer the fallback is the element-wise absolute value of the raw features.
    """
    if cfg.hidden_units == 0:
        return np.abs(dataset.features)
    gen = rng.gen
    half = gen.permutation(dataset.n)[: max(1, dataset.n // 2)]
    model = init_model(rng.fork("init"), dataset.dim, dataset.num_classes, cfg.hidden_units)
    b = min(cfg.batch_size, len(half))
    for _ in range(max(1, len(half) // b)):
        batch = half[gen.choice(len(half), size=b, replace=False)]
        sgd_step(model, batch, dataset, cfg)
    _, emb = forward_batch(model, dataset.features)
    return emb


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def train(
    train_ds: Dataset,
    test_ds: Dataset,
    cfg: TrainerConfig,
    sel: SelectionConfig,
    weights: ObjectiveWeights,
) -> TrainResult:
    """Run cfg.epochs x floor(n / b) iterations with the configured sampler.

    The TrainerConfig is authoritative where it overlaps the SelectionConfig
    (batch size, refresh rate, seed); `sel` contributes the partition count
    and sampling tolerance. With the submodular sampler, each iteration passes
    probabilities and embeddings of the *current* model into selection through
    the refresh contract: model outputs are recomputed only when the score
    cache has exhausted its refresh window. Fully deterministic per seed.
    """
    cfg.validate()
    sel_eff = replace(sel, batch_size=cfg.batch_size, refresh_rate=cfg.refresh_rate, seed=cfg.seed)
    rng = Rng(cfg.seed)
    n = train_ds.n
    if cfg.batch_size > n:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds training set size {n}")
    model = init_model(rng.fork("init"), train_ds.dim, train_ds.num_classes, cfg.hidden_units)

    weights_eff = weights
    fixed: Optional[np.ndarray] = None
    if cfg.sampler == "smdl":
        if weights.lambda4 > 0:
            fixed = snapshot_fixed_features(train_ds, cfg, rng.fork("snapshot"))
        probe = Dataset(
            train_ds.features, train_ds.probs, train_ds.labels, fixed_features=fixed
        )
        weights_eff = validate_config(weights, sel_eff, probe).weights

    losses_reg = np.full(n, math.log(train_ds.num_classes))
    consumed = np.zeros(n, dtype=bool)
    cache = None
    sel_ds: Optional[Dataset] = None
    iters_per_epoch = n // cfg.batch_size
    iteration = 0
    reports: list[EpochReport] = []

    for epoch in range(1, cfg.epochs + 1):
        consumed[:] = False
        sel_time = 0.0
        step_time = 0.0
        for _ in range(iters_per_epoch):
            pool = np.flatnonzero(~consumed) if cfg.epoch_without_replacement else None
            t0 = time.perf_counter()
            if cfg.sampler == "uniform":
                gen = rng.fork("it", iteration, "uniform").gen
                if pool is None:
                    batch = gen.choice(n, size=cfg.batch_size, replace=False)
                else:
                    batch = pool[gen.choice(len(pool), size=cfg.batch_size, replace=False)]
            elif cfg.sampler == "loss_based":
                sub_rng = rng.fork("it", iteration, "loss")
                if pool is None:
                    batch = loss_based_sample(
                        losses_reg, cfg.batch_size, sub_rng, cfg.loss_based_exponent
                    )
                else:
                    picks = loss_based_sample(
                        losses_reg[pool], cfg.batch_size, sub_rng, cfg.loss_based_exponent
                    )
                    batch = pool[picks]
            else:
                if scoring.cache_is_stale(cache, cfg.refresh_rate):
                    probs, emb = forward_batch(model, train_ds.features)
                    sel_ds = Dataset(emb, probs, train_ds.labels, fixed_features=fixed)
                cache = scoring.refresh(cache, sel_ds, iteration, sel_eff, weights_eff)
                factory = StateFactory(sel_ds, weights_eff, cache)
                m_eff = sel_eff.partitions if pool is None else min(sel_eff.partitions, len(pool))
                result = get_mini_batch(
                    sel_ds,
                    cfg.batch_size,
                    m_eff,
                    sel_eff.epsilon,
                    rng.fork("it", iteration, "batch"),
                    factory,
                    threads=cfg.threads,
                    pool=pool,
                )
                batch = np.asarray(result.indices, dtype=np.int64)
            sel_time += time.perf_counter() - t0

            t0 = time.perf_counter()
            _, per_point = sgd_step(model, batch, train_ds, cfg)
            step_time += time.perf_counter() - t0
            losses_reg[batch] = per_point
            if pool is not None:
                consumed[batch] = True
            iteration += 1

        train_loss, train_acc = evaluate(model, train_ds)
        test_loss, test_acc = evaluate(model, test_ds)
        reports.append(
            EpochReport(
                epoch=epoch,
                train_loss=train_loss,
                train_accuracy=train_acc,
                test_loss=test_loss,
                test_accuracy=test_acc,
                batches_selected=iters_per_epoch,
                selection_time=sel_time,
                step_time=step_time,
            )
        )

    refresh_count = cache.refresh_count if cache is not None else 0
    return TrainResult(reports=reports, model=model, refresh_count=refresh_count)
