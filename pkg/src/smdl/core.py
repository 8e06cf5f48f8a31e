"""Domain types, dataset I/O and validation, config checks, and seeded RNG forking."""

from __future__ import annotations

import hashlib
import math
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

PROB_ROW_TOL = 1e-6
BINARY_MAGIC = b"SMDL"
BINARY_VERSION = 1

METRIC_KINDS = ("euclidean", "cosine", "correlation", "gaussian")
FM_MODES = ("modular", "set")


class DataError(ValueError):
    """Malformed or inconsistent dataset content."""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


# ---------------------------------------------------------------------------
# RNG plumbing
# ---------------------------------------------------------------------------


def _label_key(label) -> tuple[int, int]:
    # Tag the label type so fork(1) and fork("1") stay distinct streams.
    if isinstance(label, bool):
        raise ConfigError("bool fork labels are ambiguous; use int or str")
    if isinstance(label, (int, np.integer)):
        return (0, int(label) & 0xFFFFFFFFFFFFFFFF)
    if isinstance(label, str):
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        return (1, int.from_bytes(digest[:8], "little"))
    raise ConfigError(f"unsupported fork label type: {type(label).__name__}")


@dataclass
class Rng:
    """Deterministic random stream with fork-by-label sub-streams.

    The same (seed, fork-label path) always yields the same draws, no matter
    which sibling streams were consumed first or on which thread.
    """

    seed: int
    _path: tuple[int, ...] = ()
    _gen: Optional[np.random.Generator] = field(default=None, repr=False, compare=False)

    def fork(self, *labels) -> "Rng":
        path = self._path
        for label in labels:
            path = path + _label_key(label)
        return Rng(self.seed, path)

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            seq = np.random.SeedSequence(self.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=self._path)
            self._gen = np.random.Generator(np.random.PCG64(seq))
        return self._gen


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Ground set for selection: per-point embeddings, model probabilities,
    labels, and optional non-negative fixed features for the feature-match score.

    Immutable after construction; arrays are marked read-only so a dataset can
    be shared across partition workers without copies.
    """

    features: np.ndarray
    probs: np.ndarray
    labels: np.ndarray
    fixed_features: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "features", _as_readonly_matrix(self.features, "features"))
        object.__setattr__(self, "probs", _as_readonly_matrix(self.probs, "probs"))
        object.__setattr__(self, "labels", _as_readonly_labels(self.labels))
        if self.fixed_features is not None:
            object.__setattr__(
                self, "fixed_features", _as_readonly_matrix(self.fixed_features, "fixed_features")
            )
        self.validate()

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]

    @property
    def num_fixed(self) -> int:
        return 0 if self.fixed_features is None else self.fixed_features.shape[1]

    def validate(self) -> None:
        n = self.features.shape[0]
        if n == 0:
            raise DataError("dataset is empty")
        if self.probs.shape[0] != n:
            raise DataError(
                f"row count mismatch: features has {n} rows, probs has {self.probs.shape[0]}"
            )
        if self.labels.shape[0] != n:
            raise DataError(
                f"row count mismatch: features has {n} rows, labels has {self.labels.shape[0]}"
            )
        if not np.isfinite(self.features).all():
            raise DataError("non-finite feature value")
        if (self.probs < 0).any():
            i = int(np.argwhere(self.probs < 0)[0][0])
            raise DataError(f"negative probability in row {i}")
        sums = self.probs.sum(axis=1)
        bad = np.abs(sums - 1.0) > PROB_ROW_TOL
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DataError(
                f"probs row {i} sum {sums[i]:.6g} exceeds tolerance {PROB_ROW_TOL:g}"
            )
        c = self.probs.shape[1]
        if (self.labels < 0).any() or (self.labels >= c).any():
            raise DataError(f"label out of range [0, {c})")
        if self.fixed_features is not None:
            if self.fixed_features.shape[0] != n:
                raise DataError(
                    f"row count mismatch: features has {n} rows, "
                    f"fixed_features has {self.fixed_features.shape[0]}"
                )
            if (self.fixed_features < 0).any():
                raise DataError("negative fixed feature")

    def with_model_outputs(self, features: np.ndarray, probs: np.ndarray) -> "Dataset":
        """New dataset with refreshed embeddings/probabilities, same labels and fixed features."""
        return Dataset(features, probs, self.labels, self.fixed_features)


def _as_readonly_matrix(arr, name: str) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, order="C", copy=True)
    if out.ndim != 2:
        raise DataError(f"{name} must be a 2-D matrix, got {out.ndim}-D")
    out.setflags(write=False)
    return out


def _as_readonly_labels(arr) -> np.ndarray:
    raw = np.asarray(arr)
    if raw.ndim != 1:
        raise DataError(f"labels must be a 1-D vector, got {raw.ndim}-D")
    if raw.dtype.kind == "f":
        if not np.all(raw == np.round(raw)):
            raise DataError("labels must be integers")
    out = raw.astype(np.int64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ObjectiveWeights:
    """Trade-off coefficients for the four selection scores, plus metric switches.

    lambda1 weighs prediction uncertainty, lambda2 distance-to-selected
    redundancy, lambda3 closeness to the dataset mean, lambda4 the
    feature-match score. r_max is the redundancy credit given to the very
    first pick, where no selected point exists to measure distance against.
    """

    lambda1: float = 0.2
    lambda2: float = 0.1
    lambda3: float = 0.5
    lambda4: float = 0.2
    metric: str = "euclidean"
    gaussian_sigma: Union[float, str] = "median-heuristic"
    fm_mode: str = "modular"
    r_max: float = 1.0

    def validate(self) -> None:
        lams = (self.lambda1, self.lambda2, self.lambda3, self.lambda4)
        if any(l < 0 for l in lams):
            raise ConfigError(f"negative trade-off weight in {lams}")
        if all(l == 0 for l in lams):
            raise ConfigError("all trade-off weights are zero; at least one must be positive")
        if self.metric not in METRIC_KINDS:
            raise ConfigError(f"unknown metric {self.metric!r}; expected one of {METRIC_KINDS}")
        if self.fm_mode not in FM_MODES:
            raise ConfigError(f"unknown fm_mode {self.fm_mode!r}; expected one of {FM_MODES}")
        if isinstance(self.gaussian_sigma, str):
            if self.gaussian_sigma != "median-heuristic":
                raise ConfigError(
                    f"gaussian_sigma must be a positive number or 'median-heuristic', "
                    f"got {self.gaussian_sigma!r}"
                )
        elif self.gaussian_sigma <= 0:
            raise ConfigError(f"gaussian_sigma must be positive, got {self.gaussian_sigma}")
        if self.r_max <= 0:
            raise ConfigError(f"r_max must be positive, got {self.r_max}")


@dataclass(frozen=True)
class SelectionConfig:
    """Batch-selection knobs: batch size, partition count, sampling tolerance,
    score refresh rate, and the run seed."""

    batch_size: int = 50
    partitions: int = 10
    epsilon: float = 0.1
    refresh_rate: int = 5
    seed: int = 0

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.partitions < 1:
            raise ConfigError(f"partitions must be >= 1, got {self.partitions}")
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.refresh_rate < 1:
            raise ConfigError(f"refresh_rate must be >= 1, got {self.refresh_rate}")


@dataclass(frozen=True)
class CheckedConfig:
    """Validated (weights, selection) pair with derived quantities."""

    weights: ObjectiveWeights
    selection: SelectionConfig
    sample_size: int
    partition_size: int


def sample_size(n: int, batch_size: int, epsilon: float) -> int:
    """Per-round candidate sample size for stochastic greedy: ceil((n/b) * ln(1/eps))."""
    return max(1, math.ceil((n / batch_size) * math.log(1.0 / epsilon)))


def validate_config(
    weights: ObjectiveWeights, sel: SelectionConfig, dataset: Dataset
) -> CheckedConfig:
    """Check all invariants against a concrete dataset and derive the sample size.

    If the dataset lacks fixed features, the feature-match weight is forced to
    zero (with a warning) so selection remains usable before a frozen snapshot
    model exists.
    """
    sel.validate()
    if dataset.fixed_features is None and weights.lambda4 > 0:
        warnings.warn(
            "dataset has no fixed features; disabling the feature-match score (lambda4 := 0)",
            stacklevel=2,
        )
        weights = replace(weights, lambda4=0.0)
    weights.validate()
    n = dataset.n
    if sel.batch_size > n:
        raise ConfigError(f"batch_size {sel.batch_size} exceeds dataset size {n}")
    if sel.partitions > n:
        raise ConfigError(f"partitions {sel.partitions} exceeds dataset size {n}")
    part_size = math.ceil(n / sel.partitions)
    s = sample_size(n, sel.batch_size, sel.epsilon)
    s = max(1, min(s, part_size))
    return CheckedConfig(weights=weights, selection=sel, sample_size=s, partition_size=part_size)


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------


def partition_indices(indices: np.ndarray, m: int, rng: Rng) -> list[np.ndarray]:
    """Split `indices` into m balanced disjoint parts (sizes differ by at most 1)."""
    indices = np.asarray(indices, dtype=np.int64)
    n = len(indices)
    if m > n:
        raise ConfigError(f"cannot partition {n} items into {m} non-empty parts")
    perm = indices[rng.gen.permutation(n)]
    base, rem = divmod(n, m)
    parts = []
    start = 0
    for i in range(m):
        size = base + (1 if i < rem else 0)
        parts.append(np.sort(perm[start : start + size]))
        start += size
    return parts


def partition(dataset: Dataset, m: int, rng: Rng) -> list[np.ndarray]:
    """Partition the ground set {0..n-1} into m balanced random parts."""
    return partition_indices(np.arange(dataset.n, dtype=np.int64), m, rng)


# ---------------------------------------------------------------------------
# File formats: CSV (optional header, '#' comments skipped) and a binary
# container (magic "SMDL", u32 version, u64 rows, u64 cols, little-endian
# float32 row-major). Labels are one integer per line.
# ---------------------------------------------------------------------------


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BINARY_MAGIC:
        return _read_matrix_binary(path)
    return _read_matrix_csv(path)


def _read_matrix_binary(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(24)
        if len(header) < 24:
            raise DataError(f"{path}: truncated binary header")
        magic, version, rows, cols = struct.unpack("<4sIQQ", header)
        if magic != BINARY_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if version != BINARY_VERSION:
            raise DataError(f"{path}: unsupported binary version {version}")
        payload = fh.read()
    expected = rows * cols * 4
    if len(payload) != expected:
        raise DataError(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return data.reshape(rows, cols)


def _read_matrix_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            try:
                row = [float(c) for c in cells]
            except ValueError:
                if not rows and width is None:
                    width = len(cells)  # header row; fixes the expected width
                    continue
                raise DataError(f"{path}:{lineno}: malformed CSV row {line!r}")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(
                    f"{path}:{lineno}: row has {len(row)} columns, expected {width}"
                )
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def write_matrix_csv(path, matrix: np.ndarray, header: Optional[Sequence[str]] = None) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in matrix:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def write_matrix_binary(path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIQQ", BINARY_MAGIC, BINARY_VERSION, rows, cols))
        fh.write(matrix.tobytes(order="C"))


def read_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed label {line!r}")
    if not labels:
        raise DataError(f"{path}: no labels")
    return np.asarray(labels, dtype=np.int64)


def write_labels(path, labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for lab in np.asarray(labels, dtype=np.int64):
            fh.write(f"{int(lab)}\n")


def load_dataset(
    features_path,
    probs_path,
    labels_path,
    fixed_features_path=None,
) -> Dataset:
    """Load and validate a dataset from matrix/label files.

    Without a fixed-features file the feature-match score is unavailable;
    `validate_config` then forces lambda4 to zero with a warning.
    """
    features = read_matrix(features_path)
    probs = read_matrix(probs_path)
    labels = read_labels(labels_path)
    fixed = read_matrix(fixed_features_path) if fixed_features_path is not None else None
    return Dataset(features=features, probs=probs, labels=labels, fixed_features=fixed)


def save_dataset(
    out_dir,
    prefix: str,
    features: np.ndarray,
    probs: np.ndarray,
    labels: np.ndarray,
    fmt: str = "csv",
) -> dict[str, Path]:
    """Write one split's files into out_dir; returns the paths keyed by role."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt not in ("csv", "bin"):
        raise ConfigError(f"unknown dataset format {fmt!r}; expected 'csv' or 'bin'")
    ext = "csv" if fmt == "csv" else "bin"
    paths = {
        "features": out_dir / f"{prefix}_features.{ext}",
        "probs": out_dir / f"{prefix}_probs.{ext}",
        "labels": out_dir / f"{prefix}_labels.txt",
    }
    if fmt == "csv":
        write_matrix_csv(paths["features"], features)
        write_matrix_csv(paths["probs"], probs)
    else:
        write_matrix_binary(paths["features"], features)
        write_matrix_binary(paths["probs"], probs)
    write_labels(paths["labels"], labels)
    return paths
