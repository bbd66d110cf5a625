"""Datasets: synthetic incident generation, CSV round-trip, scaling, splits.

A dataset is a feature matrix plus a tri-state label vector (0 = no
incident, 1 = incident, -1 = unlabeled) and a per-row synthetic flag.
The synthetic generator models an upstream/downstream detector pair
(occupancy, speed, flow per station plus short-horizon differences);
incidents push upstream occupancy up and downstream speed/flow down by
``delta`` noise standard deviations, so ``delta`` directly controls how
separable the two classes are.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParseError

UNLABELED = -1

# default separation: a logistic probe lands near 90% accuracy
DEFAULT_DELTA = 1.4

# per-feature noise scale and demand coupling for the 8 core features:
# occ_up, speed_up, flow_up, occ_down, speed_down, flow_down,
# d_occ_up, d_speed_down
_BASE = np.array([0.14, 63.0, 1400.0, 0.13, 64.0, 1350.0, 0.0, 0.0])
_COUPLING = np.array([0.04, -6.0, 320.0, 0.035, -5.5, 300.0, 0.0, 0.0])
_NOISE = np.array([0.03, 5.0, 120.0, 0.03, 5.0, 120.0, 0.02, 3.0])
# incident shift in units of delta * noise std per feature
_SHIFT = np.array([1.0, 0.0, 0.0, 0.0, -1.0, -1.0, 0.5, -0.5])


@dataclass
class Sample:
    features: np.ndarray
    label: int
    synthetic: bool = False


@dataclass
class NormStats:
    """Per-feature standardization stats fitted on real rows."""
    mean: np.ndarray
    std: np.ndarray
    kept: np.ndarray           # column indices into the pre-fit feature matrix
    dropped: list[int] = field(default_factory=list)

    def apply(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[1] <= self.kept.max():
            raise DataError(
                f"features have {features.shape[1]} columns, stats reference "
                f"column {int(self.kept.max())}")
        return (features[:, self.kept] - self.mean) / self.std


class Dataset:
    """Immutable-by-convention bundle of features, labels, and provenance."""

    def __init__(self, features, labels, synthetic=None,
                 norm_stats: NormStats | None = None, class_count: int = 2):
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DataError("features and labels disagree on row count")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain NaN/Inf")
        valid = set(range(class_count)) | {UNLABELED}
        if not set(np.unique(self.labels)).issubset(valid):
            raise DataError(f"labels outside {sorted(valid)}")
        if synthetic is None:
            synthetic = np.zeros(self.n, dtype=bool)
        self.synthetic = np.asarray(synthetic, dtype=bool).reshape(-1)
        if self.synthetic.shape[0] != self.n:
            raise DataError("synthetic flags disagree on row count")
        self.norm_stats = norm_stats
        self.class_count = class_count

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.features[indices], self.labels[indices],
                       self.synthetic[indices], self.norm_stats, self.class_count)

    def class_counts(self) -> dict[int, int]:
        return {int(c): int((self.labels == c).sum()) for c in range(self.class_count)}

    def samples(self) -> list[Sample]:
        return [Sample(self.features[i], int(self.labels[i]), bool(self.synthetic[i]))
                for i in range(self.n)]

    def __eq__(self, other):
        return (isinstance(other, Dataset)
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.synthetic, other.synthetic))


def concat(datasets: list[Dataset]) -> Dataset:
    first = datasets[0]
    return Dataset(np.vstack([ds.features for ds in datasets]),
                   np.concatenate([ds.labels for ds in datasets]),
                   np.concatenate([ds.synthetic for ds in datasets]),
                   first.norm_stats, first.class_count)


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------

def generate_synthetic(n_normal: int, n_incident: int, d: int = 8,
                       seed: int = 0, delta: float = DEFAULT_DELTA) -> Dataset:
    """Two-class detector-window dataset with separation ``delta``.

    The first 8 features carry the upstream/downstream signature; any extra
    columns are pure standard-normal noise. Deterministic per seed.
    """
    if n_normal < 1 or n_incident < 1:
        raise DataError("need at least one row per class")
    if d < 6:
        raise DataError(f"need d >= 6 features, got {d}")
    rng = np.random.default_rng(seed)
    n = n_normal + n_incident
    labels = np.concatenate([np.zeros(n_normal, dtype=np.int64),
                             np.ones(n_incident, dtype=np.int64)])
    core = min(d, 8)
    demand = rng.normal(size=(n, 1))
    noise = rng.normal(size=(n, core))
    features = np.empty((n, d))
    features[:, :core] = (_BASE[:core] + demand * _COUPLING[:core]
                          + noise * _NOISE[:core])
    features[:, :core] += (labels[:, None] * delta) * (_SHIFT[:core] * _NOISE[:core])
    if d > 8:
        features[:, 8:] = rng.normal(size=(n, d - 8))
    order = rng.permutation(n)
    return Dataset(features[order], labels[order])


# ---------------------------------------------------------------------------
# CSV round-trip
# ---------------------------------------------------------------------------

def save_csv(dataset: Dataset, path) -> None:
    """Header f0..f{d-1},label[,synthetic]; 17-significant-digit values.

    The synthetic column is written only when the dataset contains at least
    one synthetic row, so pre-augmentation files keep the plain schema.
    """
    with_flag = bool(dataset.synthetic.any())
    header = [f"f{i}" for i in range(dataset.d)] + ["label"]
    if with_flag:
        header.append("synthetic")
    lines = [",".join(header)]
    for i in range(dataset.n):
        cells = [format(v, ".17g") for v in dataset.features[i]]
        cells.append(str(int(dataset.labels[i])))
        if with_flag:
            cells.append(str(int(dataset.synthetic[i])))
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(path, class_count: int = 2) -> Dataset:
    """Inverse of :func:`save_csv`; exact round-trip."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("line 1: empty file")
    header = lines[0].split(",")
    with_flag = header[-1] == "synthetic"
    feat_cols = header[:-2] if with_flag else header[:-1]
    label_col = header[-2] if with_flag else header[-1]
    d = len(feat_cols)
    if label_col != "label" or feat_cols != [f"f{i}" for i in range(d)]:
        raise ParseError(f"line 1: malformed header {lines[0]!r}")
    width = d + 1 + int(with_flag)
    features, labels, synthetic = [], [], []
    valid_labels = set(range(class_count)) | {UNLABELED}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != width:
            raise ParseError(f"line {lineno}: expected {width} cells, got {len(cells)}")
        try:
            row = [float(c) for c in cells[:d]]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric cell ({exc})") from None
        try:
            label = int(cells[d])
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer label {cells[d]!r}") from None
        if label not in valid_labels:
            raise ParseError(f"line {lineno}: unknown label value {label}")
        if with_flag:
            if cells[d + 1] not in ("0", "1"):
                raise ParseError(f"line {lineno}: synthetic flag must be 0/1")
            synthetic.append(cells[d + 1] == "1")
        features.append(row)
        labels.append(label)
    if not features:
        raise ParseError("line 2: no data rows")
    return Dataset(np.array(features), np.array(labels),
                   np.array(synthetic, dtype=bool) if with_flag else None,
                   class_count=class_count)


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

def standardize(dataset: Dataset) -> tuple[Dataset, NormStats]:
    """Zero-mean unit-std per feature, fitted on real rows, applied to all.

    Constant features (zero std over real rows) are dropped with a warning
    and listed in the returned stats.
    """
    if dataset.n < 2:
        raise DataError("standardize needs at least 2 rows")
    real = dataset.features[~dataset.synthetic]
    if real.shape[0] < 2:
        raise DataError("standardize needs at least 2 real rows")
    mean = real.mean(axis=0)
    std = real.std(axis=0)
    kept = np.flatnonzero(std > 0)
    dropped = [int(i) for i in np.flatnonzero(std == 0)]
    if dropped:
        warnings.warn(f"dropping constant features {dropped}", stacklevel=2)
    if kept.size == 0:
        raise DataError("all features constant; nothing to standardize")
    stats = NormStats(mean=mean[kept], std=std[kept], kept=kept, dropped=dropped)
    out = Dataset(stats.apply(dataset.features), dataset.labels,
                  dataset.synthetic, stats, dataset.class_count)
    return out, stats


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

@dataclass
class SplitSpec:
    labeled_per_class: int
    unlabeled_per_class: int
    test_per_class: int
    seed: int = 0

    def __post_init__(self):
        if min(self.labeled_per_class, self.unlabeled_per_class,
               self.test_per_class) < 1:
            raise DataError("all split counts must be >= 1")


@dataclass
class SplitResult:
    labeled: Dataset
    unlabeled: Dataset      # labels stripped to UNLABELED
    test: Dataset           # real rows only
    unlabeled_truth: np.ndarray  # sealed: evaluation diagnostics only


def split(dataset: Dataset, spec: SplitSpec) -> SplitResult:
    """Stratified disjoint labeled/unlabeled/test split.

    Test rows are drawn from real rows only; labeled rows prefer real rows
    and fall back to synthetic ones; the unlabeled pool takes what remains.
    """
    rng = np.random.default_rng(spec.seed)
    idx_l, idx_u, idx_t = [], [], []
    shortfalls = []
    for c in range(dataset.class_count):
        real = np.flatnonzero((dataset.labels == c) & ~dataset.synthetic)
        synth = np.flatnonzero((dataset.labels == c) & dataset.synthetic)
        rng.shuffle(real)
        rng.shuffle(synth)
        need = spec.test_per_class + spec.labeled_per_class + spec.unlabeled_per_class
        if len(real) < spec.test_per_class:
            shortfalls.append(f"class {c}: test needs {spec.test_per_class} real rows, "
                              f"have {len(real)}")
            continue
        if len(real) + len(synth) < need:
            shortfalls.append(f"class {c}: need {need} rows total, "
                              f"have {len(real) + len(synth)}")
            continue
        idx_t.append(real[:spec.test_per_class])
        pool = np.concatenate([real[spec.test_per_class:], synth])
        idx_l.append(pool[:spec.labeled_per_class])
        remainder = pool[spec.labeled_per_class:]
        rng.shuffle(remainder)
        idx_u.append(remainder[:spec.unlabeled_per_class])
    if shortfalls:
        raise DataError("infeasible split: " + "; ".join(shortfalls))

    labeled = dataset.subset(np.concatenate(idx_l))
    test = dataset.subset(np.concatenate(idx_t))
    u_idx = np.concatenate(idx_u)
    truth = dataset.labels[u_idx].copy()
    unlabeled = Dataset(dataset.features[u_idx],
                        np.full(len(u_idx), UNLABELED, dtype=np.int64),
                        dataset.synthetic[u_idx], dataset.norm_stats,
                        dataset.class_count)
    assert not test.synthetic.any(), "synthetic rows must never reach the test split"
    return SplitResult(labeled=labeled, unlabeled=unlabeled, test=test,
                       unlabeled_truth=truth)
