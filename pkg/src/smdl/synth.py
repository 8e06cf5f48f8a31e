"""Synthetic data: Gaussian class blobs for toy training runs and random
selection instances for oracle checks and property suites."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, Dataset, ObjectiveWeights, Rng, SelectionConfig
from .objective import StateFactory
from . import scoring


@dataclass(frozen=True)
class BlobSpec:
    """Gaussian blob parameters. The default noise keeps the classes
    overlapping (Bayes error a few percent) while a linear model trained with
    the default optimizer settings stays comfortably below 100% accuracy."""

    classes: int = 4
    dim: int = 16
    n_train: int = 2000
    n_test: int = 1000
    noise: float = 0.3
    scale: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if self.dim < 1:
            raise ConfigError(f"need at least 1 dimension, got {self.dim}")
        if self.dim < self.classes:
            raise ConfigError(
                f"dim {self.dim} too small to place {self.classes} simplex means"
            )
        if self.n_train < self.classes or self.n_test < self.classes:
            raise ConfigError("need at least one point per class in each split")
        if self.noise <= 0 or self.scale <= 0:
            raise ConfigError("noise and scale must be positive")


def _balanced_labels(n: int, classes: int, gen: np.random.Generator) -> np.ndarray:
    # Class counts differ by at most 1.
    labels = np.arange(n) % classes
    return labels[gen.permutation(n)]


def _blob_split(spec: BlobSpec, n: int, rng: Rng) -> Dataset:
    gen = rng.gen
    means = np.zeros((spec.classes, spec.dim))
    means[np.arange(spec.classes), np.arange(spec.classes)] = spec.scale
    labels = _balanced_labels(n, spec.classes, gen)
    features = means[labels] + spec.noise * gen.standard_normal((n, spec.dim))
    probs = np.full((n, spec.classes), 1.0 / spec.classes)
    return Dataset(features=features, probs=probs, labels=labels)


def make_blobs(spec: BlobSpec) -> tuple[Dataset, Dataset]:
    """Train/test class blobs: per-class means on a scaled simplex, shared
    isotropic noise, balanced labels, uniform placeholder probabilities."""
    spec.validate()
    rng = Rng(spec.seed)
    train = _blob_split(spec, spec.n_train, rng.fork("train"))
    test = _blob_split(spec, spec.n_test, rng.fork("test"))
    return train, test


def random_instance(
    seed: int,
    n: int,
    dim: int = 3,
    classes: int = 3,
    fixed_dims: int = 4,
    clusters: int = 0,
) -> Dataset:
    """Small random dataset for oracle tests: normal features, Dirichlet
    probability rows, non-negative fixed features. With clusters > 0 the
    points bunch around that many centers, which makes redundancy matter."""
    gen = Rng(seed).fork("instance").gen
    if clusters > 0:
        centers = 4.0 * gen.standard_normal((clusters, dim))
        assign = gen.integers(0, clusters, size=n)
        features = centers[assign] + 0.15 * gen.standard_normal((n, dim))
    else:
        features = gen.standard_normal((n, dim))
    probs = gen.dirichlet(np.ones(classes), size=n)
    labels = gen.integers(0, classes, size=n)
    fixed = np.abs(gen.standard_normal((n, fixed_dims)))
    return Dataset(features=features, probs=probs, labels=labels, fixed_features=fixed)


def make_factory(
    dataset: Dataset, weights: ObjectiveWeights, seed: int = 0
) -> StateFactory:
    """Build a fresh score cache for `dataset` and wrap it in a state factory."""
    cfg = SelectionConfig(batch_size=min(2, dataset.n), partitions=1, seed=seed)
    cache = scoring.refresh(None, dataset, 0, cfg, weights)
    return StateFactory(dataset, weights, cache)
