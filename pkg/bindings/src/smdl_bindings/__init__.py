"""Batch selection for external training loops over contiguous numeric arrays.

Thin in-process wrapper around the selection engine: hand it per-call feature,
probability, and optional fixed-feature arrays plus config overrides, get back
the selected row indices. Runs the same entry point as the engine's CLI
`select` command, so identical (data, config, seed) triples produce identical
indices. Arrays are copied at the boundary, never aliased.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from smdl import __version__ as _engine_version
from smdl.core import ConfigError, DataError, Dataset, ObjectiveWeights, SelectionConfig
from smdl.maximize import run_selection

__version__ = _engine_version

_WEIGHT_KEYS = (
    "lambda1", "lambda2", "lambda3", "lambda4",
    "metric", "gaussian_sigma", "fm_mode", "r_max",
)
_SELECTION_KEYS = ("batch_size", "partitions", "epsilon", "refresh_rate", "seed")
_OTHER_KEYS = ("threads",)


def _split_config(config: dict) -> tuple[ObjectiveWeights, SelectionConfig, int]:
    unknown = set(config) - set(_WEIGHT_KEYS) - set(_SELECTION_KEYS) - set(_OTHER_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    weights = ObjectiveWeights(**{k: config[k] for k in _WEIGHT_KEYS if k in config})
    sel = SelectionConfig(**{k: config[k] for k in _SELECTION_KEYS if k in config})
    return weights, sel, int(config.get("threads", 1))


def _copy_matrix(arr, name: str) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, order="C", copy=True)
    if out.ndim != 2:
        raise DataError(f"{name} must be a 2-D row-major array, got {out.ndim}-D")
    return out


class Selector:
    """Reusable handle holding the selection configuration.

    Use as a context manager or call close() explicitly; a closed handle
    refuses further selections.
    """

    def __init__(self, **config):
        self._weights, self._selection, self._threads = _split_config(config)
        self._closed = False

    def select(
        self,
        features,
        probs,
        fixed_features=None,
        **overrides,
    ) -> list[int]:
        """Select one mini-batch from row-aligned arrays; returns row indices."""
        if self._closed:
            raise ValueError("selector is closed")
        if overrides:
            merged = {**self._config_dict(), **overrides}
            weights, sel, threads = _split_config(merged)
        else:
            weights, sel, threads = self._weights, self._selection, self._threads
        feats = _copy_matrix(features, "features")
        pr = _copy_matrix(probs, "probs")
        fixed = _copy_matrix(fixed_features, "fixed_features") if fixed_features is not None else None
        if pr.shape[0] != feats.shape[0]:
            raise DataError(
                f"row count mismatch: features has {feats.shape[0]} rows, "
                f"probs has {pr.shape[0]}"
            )
        # labels are not consumed by selection; a zero placeholder keeps the
        # dataset contract satisfied
        dataset = Dataset(
            features=feats,
            probs=pr,
            labels=np.zeros(feats.shape[0], dtype=np.int64),
            fixed_features=fixed,
        )
        result, _, _ = run_selection(dataset, weights, sel, threads=threads)
        return list(result.indices)

    def _config_dict(self) -> dict:
        cfg = {k: getattr(self._weights, k) for k in _WEIGHT_KEYS}
        cfg.update({k: getattr(self._selection, k) for k in _SELECTION_KEYS})
        cfg["threads"] = self._threads
        return cfg

    def close(self) -> None:
        self._closed = True

    def __enter__(self) -> "Selector":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def select_batch(features, probs, fixed_features=None, **config) -> list[int]:
    """One-shot selection over row-aligned arrays with config overrides."""
    with Selector(**config) as selector:
        return selector.select(features, probs, fixed_features)


__all__ = ["Selector", "select_batch", "__version__"]
