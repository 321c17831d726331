"""Window aggregation, labeling, min-max scaling, and the 5/95 split.

Frames are grouped into non-overlapping blocks of n consecutive frames
(stride = n, trailing remainder dropped) and flattened frame-major into one
feature vector per window. A window is attack-free only when every frame in
it is normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .canlog import AttackKind, Flag
from .errors import ConfigError, DataError, ShapeError


@dataclass(frozen=True)
class FeatureLayout:
    """Which per-frame fields enter the feature vector, in order."""

    name: str
    fields: tuple

    @property
    def width(self):
        return len(self.fields)


HCRL_LAYOUT = FeatureLayout(
    "hcrl", ("timestamp", "can_id", "dlc") + tuple(f"data{i}" for i in range(8))
)
# Timestamps are omitted here: the low-dimensional profile keys only on
# identifier and payload content.
CIC_LAYOUT = FeatureLayout("ciciov", ("can_id",) + tuple(f"data{i}" for i in range(8)))


@dataclass(frozen=True)
class ClassTable:
    """Window class indices; index 0 is always attack-free."""

    names: tuple
    kinds: tuple  # parallel to names, kinds[0] is AttackKind.NONE

    def __post_init__(self):
        if self.kinds[0] is not AttackKind.NONE:
            raise ConfigError("class 0 must be the attack-free class")
        if len(self.names) != len(self.kinds):
            raise ConfigError("class names and kinds must align")

    @property
    def count(self):
        return len(self.names)

    def index_of(self, kind):
        try:
            return self.kinds.index(kind)
        except ValueError:
            raise DataError(f"attack kind {kind.value!r} not in class table") from None


HCRL_CLASSES = ClassTable(
    ("attack_free", "dos", "fuzzing", "gear_spoof", "rpm_spoof"),
    (
        AttackKind.NONE,
        AttackKind.DOS,
        AttackKind.FUZZING,
        AttackKind.GEAR_SPOOF,
        AttackKind.RPM_SPOOF,
    ),
)

CIC_CLASSES = ClassTable(
    ("attack_free", "dos", "rpm_spoof", "speed_spoof", "steering_spoof", "gas_spoof"),
    (
        AttackKind.NONE,
        AttackKind.DOS,
        AttackKind.RPM_SPOOF,
        AttackKind.SPEED_SPOOF,
        AttackKind.STEERING_SPOOF,
        AttackKind.GAS_SPOOF,
    ),
)

SYNTH_CLASSES = ClassTable(
    ("attack_free", "dos", "fuzzing", "rpm_spoof"),
    (AttackKind.NONE, AttackKind.DOS, AttackKind.FUZZING, AttackKind.RPM_SPOOF),
)


@dataclass(frozen=True, eq=False)
class WindowSample:
    features: np.ndarray  # length n * layout.width, frame-major
    label: int
    span: tuple  # (first frame index, last frame index)


def frame_features(frame, layout):
    out = []
    for name in layout.fields:
        if name == "timestamp":
            out.append(frame.timestamp)
        elif name == "can_id":
            out.append(float(frame.can_id))
        elif name == "dlc":
            out.append(float(frame.dlc))
        else:
            out.append(float(frame.payload[int(name[4:])]))
    return out


def frames_matrix(frames, layout):
    """(len(frames), layout.width) float64 matrix of per-frame features."""
    mat = np.empty((len(frames), layout.width), dtype=np.float64)
    for i, frame in enumerate(frames):
        mat[i, :] = frame_features(frame, layout)
    return mat


def label_window(frames, classes):
    """0 when all frames are normal, else the majority injected kind
    (ties broken by the earliest injected frame)."""
    counts = {}
    first_seen = {}
    for pos, frame in enumerate(frames):
        if frame.flag is Flag.INJECTED:
            counts[frame.attack_kind] = counts.get(frame.attack_kind, 0) + 1
            first_seen.setdefault(frame.attack_kind, pos)
    if not counts:
        return 0
    best = max(counts, key=lambda k: (counts[k], -first_seen[k]))
    return classes.index_of(best)


def aggregate_windows(frames, n, layout, classes):
    """Non-overlapping windows of n frames; remainder < n is discarded."""
    if n < 1:
        raise ConfigError(f"window length must be >= 1, got {n}")
    count = len(frames) // n
    if count == 0:
        return []
    mat = frames_matrix(frames[: count * n], layout)
    flat = mat.reshape(count, n * layout.width)
    windows = []
    for w in range(count):
        label = label_window(frames[w * n : (w + 1) * n], classes)
        windows.append(WindowSample(flat[w].copy(), label, (w * n, (w + 1) * n - 1)))
    return windows


def windows_matrix(windows):
    """Stack windows into (X, y)."""
    if not windows:
        raise DataError("no windows")
    X = np.stack([w.features for w in windows]).astype(np.float64)
    y = np.array([w.label for w in windows], dtype=np.int64)
    return X, y


# ---------------------------------------------------------------------------
# Min-max scaling


@dataclass(frozen=True)
class ScalerParams:
    x_min: np.ndarray
    x_max: np.ndarray
    fitted_on: str = "train"


def fit_scaler(X, fitted_on="train"):
    if X.ndim != 2 or X.shape[0] < 1:
        raise DataError("scaler needs at least one training row")
    return ScalerParams(X.min(axis=0).copy(), X.max(axis=0).copy(), fitted_on)


def apply_scaler(params, X):
    """x' = (x - x_min) / (x_max - x_min), clamped to [0, 1].

    Constant features (x_max == x_min) map to 0. Accepts a single vector or
    a matrix.
    """
    single = X.ndim == 1
    Xm = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if Xm.shape[1] != params.x_min.shape[0]:
        raise ShapeError(
            f"feature length {Xm.shape[1]} != scaler length {params.x_min.shape[0]}"
        )
    span = params.x_max - params.x_min
    degenerate = span == 0
    safe = np.where(degenerate, 1.0, span)
    out = (Xm - params.x_min) / safe
    out[:, degenerate] = 0.0
    np.clip(out, 0.0, 1.0, out=out)
    return out[0] if single else out


def inverse_scaler(params, Xs):
    single = Xs.ndim == 1
    Xm = np.atleast_2d(np.asarray(Xs, dtype=np.float64))
    if Xm.shape[1] != params.x_min.shape[0]:
        raise ShapeError(
            f"feature length {Xm.shape[1]} != scaler length {params.x_min.shape[0]}"
        )
    out = Xm * (params.x_max - params.x_min) + params.x_min
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Splits and subsets


def split_train_test(windows, train_fraction=0.05, seed=0):
    """Stratified split: each non-empty class contributes
    max(1, floor(fraction * count)) windows to train, rest to test.
    Original window order is preserved inside each part."""
    if not windows:
        raise DataError("cannot split an empty window set")
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    by_class = {}
    for idx, w in enumerate(windows):
        by_class.setdefault(w.label, []).append(idx)
    train_idx = []
    for label in sorted(by_class):
        idxs = np.array(by_class[label])
        take = max(1, int(np.floor(train_fraction * len(idxs))))
        chosen = rng.permutation(len(idxs))[:take]
        train_idx.extend(idxs[chosen].tolist())
    train_set = set(train_idx)
    train = [windows[i] for i in sorted(train_set)]
    test = [windows[i] for i in range(len(windows)) if i not in train_set]
    return train, test


def balanced_subset(windows, per_class=None, total=None, seed=0):
    """Equal per-class sample: take `per_class` windows of every class
    present (or split `total` evenly). Short classes contribute everything
    they have, with a warning. Returns (subset, warnings)."""
    if (per_class is None) == (total is None):
        raise ConfigError("specify exactly one of per_class / total")
    by_class = {}
    for idx, w in enumerate(windows):
        by_class.setdefault(w.label, []).append(idx)
    if total is not None:
        per_class = total // max(1, len(by_class))
    warnings = []
    if per_class <= 0:
        return [], warnings
    rng = np.random.default_rng(seed)
    chosen = []
    for label in sorted(by_class):
        idxs = np.array(by_class[label])
        if len(idxs) < per_class:
            warnings.append(
                f"class {label}: only {len(idxs)} windows available, requested {per_class}"
            )
            take = len(idxs)
        else:
            take = per_class
        picked = rng.permutation(len(idxs))[:take]
        chosen.extend(idxs[picked].tolist())
    return [windows[i] for i in sorted(chosen)], warnings
