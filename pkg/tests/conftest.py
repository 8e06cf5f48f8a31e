import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from smdl import synth
from smdl.core import Dataset, ObjectiveWeights, Rng, SelectionConfig
from smdl.objective import StateFactory
from smdl import scoring


def build_cache(dataset, weights, seed=0):
    cfg = SelectionConfig(batch_size=min(2, dataset.n), partitions=1, seed=seed)
    return scoring.refresh(None, dataset, 0, cfg, weights)


def build_factory(dataset, weights, seed=0):
    return StateFactory(dataset, weights, build_cache(dataset, weights, seed))


def random_weights(gen, fm_mode=None, metric=None, lambda2=None):
    lams = gen.uniform(0.1, 1.0, size=4)
    if lambda2 is not None:
        lams[1] = lambda2
    return ObjectiveWeights(
        lambda1=float(lams[0]),
        lambda2=float(lams[1]),
        lambda3=float(lams[2]),
        lambda4=float(lams[3]),
        metric=metric or ["euclidean", "cosine", "correlation", "gaussian"][gen.integers(4)],
        gaussian_sigma=1.5,
        fm_mode=fm_mode or ("set" if gen.random() < 0.5 else "modular"),
    )


@pytest.fixture
def tiny_dataset():
    return synth.random_instance(11, 10)
