"""Deterministic synthetic datasets with controllable class imbalance.

Two generators (axis-separated Gaussian blobs and concentric shells), a
long-tail profile for the unlabeled class counts, and a small binary
container format for moving datasets between commands. The labeled split
is always class-balanced; only the unlabeled pool is skewed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError

MAGIC = b"JMDS"
FORMAT_VERSION = 1


@dataclass
class TrainView:
    """What the training loop is allowed to see: no unlabeled ground truth."""

    labeled_features: np.ndarray    # (n, d)
    labeled_labels: np.ndarray      # (n,)
    unlabeled_features: np.ndarray  # (u, d)
    class_count: int


@dataclass
class Dataset:
    features: np.ndarray  # (n+u, d) float64, labeled rows first
    labels: np.ndarray    # (n+u,) int64 ground truth (unlabeled part is metrics-only)
    labeled_count: int
    class_count: int
    imbalance_factor: float

    def __post_init__(self):
        total = self.features.shape[0]
        if self.labels.shape != (total,):
            raise ConfigError(f"labels shape {self.labels.shape} vs {total} rows")
        if np.any(self.labels < 0) or np.any(self.labels >= self.class_count):
            raise ConfigError("labels outside [0, class_count)")

    @property
    def unlabeled_count(self) -> int:
        return self.features.shape[0] - self.labeled_count

    def train_view(self) -> TrainView:
        n = self.labeled_count
        return TrainView(
            labeled_features=self.features[:n],
            labeled_labels=self.labels[:n].copy(),
            unlabeled_features=self.features[n:],
            class_count=self.class_count,
        )


def long_tail_counts(unlabeled_total: int, class_count: int, gamma: float) -> np.ndarray:
    """Per-class unlabeled counts n_c = round(N_max * gamma^(-c/(C-1))).

    N_max is chosen so the counts sum to roughly ``unlabeled_total``; the
    rounding slack is at most ``class_count`` and asserted by callers. The
    head-to-tail ratio of the pre-rounding profile is exactly ``gamma``.
    """
    if gamma < 1.0:
        raise ConfigError(f"imbalance factor must be >= 1, got {gamma}")
    if class_count < 2:
        raise ConfigError(f"need at least 2 classes, got {class_count}")
    c = np.arange(class_count)
    profile = gamma ** (-c / (class_count - 1))
    n_max = unlabeled_total / profile.sum()
    counts = np.rint(n_max * profile).astype(np.int64)
    if np.any(counts <= 0):
        raise ConfigError(
            f"unlabeled_total={unlabeled_total} rounds to an empty class under gamma={gamma}"
        )
    assert abs(int(counts.sum()) - unlabeled_total) <= class_count
    return counts


def _assemble(
    rng: np.random.Generator,
    sample_class: "callable",
    class_count: int,
    labels_per_class: int,
    unlabeled_total: int,
    gamma: float,
) -> Dataset:
    if labels_per_class < 1:
        raise ConfigError(f"labels_per_class must be >= 1, got {labels_per_class}")
    if unlabeled_total == 0:  # labeled-only split (e.g. held-out test data)
        counts = np.zeros(class_count, dtype=np.int64)
    else:
        counts = long_tail_counts(unlabeled_total, class_count, gamma)

    lab_feats = [sample_class(rng, c, labels_per_class) for c in range(class_count)]
    lab_labels = np.repeat(np.arange(class_count), labels_per_class)
    unl_feats = [sample_class(rng, c, int(counts[c])) for c in range(class_count)]
    unl_labels = np.repeat(np.arange(class_count), counts)

    features = np.concatenate(lab_feats + unl_feats, axis=0)
    labels = np.concatenate([lab_labels, unl_labels]).astype(np.int64)
    return Dataset(
        features=np.ascontiguousarray(features, dtype=np.float64),
        labels=labels,
        labeled_count=class_count * labels_per_class,
        class_count=class_count,
        imbalance_factor=float(gamma),
    )


def gen_gaussian_mixture(
    class_count: int,
    d: int,
    labels_per_class: int,
    unlabeled_total: int,
    separation: float,
    gamma: float = 1.0,
    seed: int = 0,
) -> Dataset:
    """Unit-covariance Gaussian blobs, class c centered at separation * e_c."""
    if d < class_count:
        raise ConfigError(f"need d >= class_count to place centers, got d={d} C={class_count}")
    if separation <= 0:
        raise ConfigError(f"separation must be positive, got {separation}")
    rng = np.random.default_rng(seed)

    def sample_class(r, c, count):
        pts = r.standard_normal((count, d))
        pts[:, c] += separation
        return pts

    return _assemble(rng, sample_class, class_count, labels_per_class, unlabeled_total, gamma)


def gen_rings(
    class_count: int,
    d: int,
    labels_per_class: int,
    unlabeled_total: int,
    gamma: float = 1.0,
    seed: int = 0,
    radius_base: float = 1.0,
    radius_step: float = 2.0,
    noise: float = 0.1,
) -> Dataset:
    """Concentric shells: class c sits at radius radius_base + c*radius_step.

    Points are uniform directions on the sphere scaled to the class radius
    plus isotropic Gaussian noise, so with noise=0 the nearest-shell rule
    classifies perfectly.
    """
    if d < 2:
        raise ConfigError(f"rings need d >= 2, got {d}")
    if radius_base <= 0 or radius_step <= 0 or noise < 0:
        raise ConfigError("radius_base/radius_step must be positive, noise non-negative")
    rng = np.random.default_rng(seed)

    def sample_class(r, c, count):
        v = r.standard_normal((count, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        radius = radius_base + c * radius_step
        return radius * v + noise * r.standard_normal((count, d))

    return _assemble(rng, sample_class, class_count, labels_per_class, unlabeled_total, gamma)


# ---------------------------------------------------------------------------
# binary container: "JMDS" | version u32 | n u64 | u u64 | d u64 | C u64
#                  | features f64 row-major | labels u32 | labeled flags u8
# All integers little-endian; round-trips are bit-exact.

_HEADER = struct.Struct("<4sIQQQQ")


def save_raw(dataset: Dataset, path) -> None:
    n = dataset.labeled_count
    u = dataset.unlabeled_count
    d = dataset.features.shape[1]
    flags = np.zeros(n + u, dtype=np.uint8)
    flags[:n] = 1
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n, u, d, dataset.class_count))
        fh.write(np.ascontiguousarray(dataset.features, dtype="<f8").tobytes())
        fh.write(dataset.labels.astype("<u4").tobytes())
        fh.write(flags.tobytes())


def _estimate_gamma(labels: np.ndarray, labeled_count: int, class_count: int) -> float:
    """Empirical head/tail ratio of the unlabeled pool (1.0 when degenerate)."""
    unl = labels[labeled_count:]
    if unl.size == 0:
        return 1.0
    counts = np.bincount(unl, minlength=class_count)
    counts = counts[counts > 0]
    return float(counts.max() / counts.min()) if counts.size else 1.0


def load_raw(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic at offset 0: {blob[:4]!r}")
    if len(blob) < _HEADER.size:
        raise FormatError(f"truncated header: {len(blob)} bytes < {_HEADER.size}")
    _, version, n, u, d, class_count = _HEADER.unpack_from(blob, 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")

    total = n + u
    feat_off = _HEADER.size
    lab_off = feat_off + total * d * 8
    flag_off = lab_off + total * 4
    expected = flag_off + total
    if len(blob) != expected:
        raise FormatError(
            f"payload truncated: header promises {expected} bytes, file has {len(blob)}"
        )

    features = np.frombuffer(blob, dtype="<f8", count=total * d, offset=feat_off)
    features = features.reshape(total, d).astype(np.float64)
    labels = np.frombuffer(blob, dtype="<u4", count=total, offset=lab_off).astype(np.int64)
    bad = np.nonzero(labels >= class_count)[0]
    if bad.size:
        i = int(bad[0])
        raise FormatError(
            f"label {labels[i]} out of range [0, {class_count}) at offset {lab_off + 4 * i}"
        )
    flags = np.frombuffer(blob, dtype=np.uint8, count=total, offset=flag_off)
    if not np.array_equal(flags[:n], np.ones(n, dtype=np.uint8)) or np.any(flags[n:]):
        i = int(np.nonzero(flags != (np.arange(total) < n))[0][0])
        raise FormatError(f"labeled flags must mark exactly the first {n} rows; "
                          f"mismatch at offset {flag_off + i}")

    return Dataset(
        features=np.ascontiguousarray(features),
        labels=labels,
        labeled_count=int(n),
        class_count=int(class_count),
        imbalance_factor=_estimate_gamma(labels, int(n), int(class_count)),
    )
