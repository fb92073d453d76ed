"""Classifier head: L2-regularized multinomial logistic regression.

The objective is

    J(W, b) = sum_i NLL(softmax(W^T x_i + b), y_i) + (1 / (2C)) * ||W||_F^2

with biases unregularized, so larger C means weaker regularization. The
minimizer runs L-BFGS-B from a zero start until the gradient max-norm drops
below the configured tolerance or the iteration cap is reached; fits are
deterministic for a fixed data order and configuration.
"""

import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from fissura.backend import BackendDescriptor
from fissura.errors import (CorruptionError, DataError, DegenerateLabelsError,
                            DimensionError, FormatError, StratificationError)
from fissura.evaluator import ConfusionMatrix, Metrics, confusion, metrics
from fissura.store import StoreReader, read_store, split_index

MODEL_MAGIC = b"KLM1"
MODEL_VERSION = 1

DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0)


@dataclass(frozen=True)
class TrainConfig:
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    folds: int = 3
    max_iterations: int = 512
    gradient_tolerance: float = 1e-6
    split_ratio: float = 0.75
    shuffle_seed: int = 0

    def __post_init__(self):
        grid = tuple(float(c) for c in self.c_grid)
        if not grid or any(c <= 0 for c in grid):
            raise ValueError("c_grid must be non-empty and positive")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("c_grid must be strictly increasing")
        object.__setattr__(self, "c_grid", grid)
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")


@dataclass(eq=False)
class LogRegModel:
    """Trained head plus the acquisition metadata needed to reapply it."""

    weights: np.ndarray          # (D, K) float64
    biases: np.ndarray           # (K,) float64
    label_names: tuple[str, ...]
    regularization_c: float
    backend: BackendDescriptor
    tile_size: int
    scale_factor: float
    objective_trace: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        d, k = self.weights.shape
        if k < 2 or len(self.label_names) != k:
            raise DataError(f"model needs >= 2 classes, got {k}")
        if self.backend.output_dim != d:
            raise DimensionError(
                f"weights expect dim {d}, backend emits {self.backend.output_dim}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise DataError("model parameters must be finite")


def objective_grad(weights: np.ndarray, biases: np.ndarray, features: np.ndarray,
                   labels: np.ndarray, c: float):
    """Value and gradients of J at (weights, biases).

    Returns (J, dJ/dW, dJ/db). Exposed so an independent finite-difference
    check can probe the same function the optimizer sees.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(biases, dtype=np.float64)
    z = x @ w + b
    z -= z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    nll = float(np.sum(log_norm - z[np.arange(len(y)), y]))
    value = nll + float(np.sum(w * w)) / (2.0 * c)
    g = np.exp(z - log_norm[:, np.newaxis])
    g[np.arange(len(y)), y] -= 1.0
    grad_w = x.T @ g + w / c
    grad_b = g.sum(axis=0)
    return value, grad_w, grad_b


def _validate_training_data(features, labels, n_classes):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"features must be 2-D, got shape {x.shape}")
    finite_rows = np.isfinite(x).all(axis=1)
    if not finite_rows.all():
        raise DataError(
            f"non-finite feature value in row {int(np.flatnonzero(~finite_rows)[0])}")
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise DataError(f"{x.shape[0]} rows vs {y.shape[0]} labels")
    if len(np.unique(y)) < 2:
        raise DegenerateLabelsError("training data contains fewer than 2 classes")
    if y.min() < 0 or y.max() >= n_classes:
        raise DataError(f"label index out of range for {n_classes} classes")
    if x.shape[0] < n_classes:
        raise DataError(f"need at least {n_classes} rows, got {x.shape[0]}")
    return x, y


def fit(features, labels, c: float, config: TrainConfig | None = None, *,
        label_names=None, backend: BackendDescriptor | None = None,
        tile_size: int = 224, scale_factor: float = 1.0) -> LogRegModel:
    """Minimize J over (W, b) for one regularization strength."""
    config = config or TrainConfig()
    if c <= 0:
        raise ValueError(f"C must be positive, got {c}")
    names = tuple(label_names) if label_names is not None else None
    n_classes = len(names) if names else int(np.max(labels)) + 1
    n_classes = max(n_classes, 2)
    x, y = _validate_training_data(features, labels, n_classes)
    d = x.shape[1]
    k = n_classes
    if names is None:
        names = tuple(str(i) for i in range(k))

    def unpack(theta):
        return theta[:d * k].reshape(d, k), theta[d * k:]

    def fun(theta):
        w, b = unpack(theta)
        value, gw, gb = objective_grad(w, b, x, y, c)
        return value, np.concatenate([gw.ravel(), gb])

    trace: list[float] = []

    def record(theta):
        w, b = unpack(theta)
        value, _, _ = objective_grad(w, b, x, y, c)
        if trace and value > trace[-1] + 1e-9 * (1.0 + abs(trace[-1])):
            raise AssertionError(
                f"objective increased from {trace[-1]} to {value}")
        trace.append(value)

    theta0 = np.zeros(d * k + k)
    record(theta0)
    result = minimize(fun, theta0, jac=True, method="L-BFGS-B",
                      callback=record,
                      options={"maxiter": config.max_iterations,
                               "gtol": config.gradient_tolerance,
                               "ftol": 1e-14, "maxcor": 20})
    w, b = unpack(result.x)
    descriptor = backend or BackendDescriptor(name="unspecified", output_dim=d)
    return LogRegModel(weights=w.copy(), biases=b.copy(), label_names=names,
                       regularization_c=float(c), backend=descriptor,
                       tile_size=tile_size, scale_factor=scale_factor,
                       objective_trace=trace)


def predict_proba(model: LogRegModel, features) -> np.ndarray:
    """Softmax class probabilities, one row per feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    d = model.weights.shape[0]
    if x.shape[1] != d:
        raise DimensionError(f"expected feature dim {d}, got {x.shape[1]}")
    z = x @ model.weights + model.biases
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict(model: LogRegModel, features) -> np.ndarray:
    return predict_proba(model, features).argmax(axis=1)


@dataclass(frozen=True)
class TrainReport:
    per_c_cv_accuracy: dict[float, float]
    chosen_c: float
    holdout_confusion: ConfusionMatrix
    holdout_metrics: Metrics
    wall_seconds: float


def stratified_folds(labels: np.ndarray, folds: int) -> np.ndarray:
    """Fold index per row: members of each class dealt round-robin.

    Raises if any class has fewer members than folds, which would leave a
    fold without that class.
    """
    y = np.asarray(labels, dtype=np.int64)
    fold_of = np.empty(y.shape[0], dtype=np.int64)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if idx.size < folds:
            raise StratificationError(
                f"class {cls} has {idx.size} rows, fewer than {folds} folds")
        fold_of[idx] = np.arange(idx.size) % folds
    return fold_of


def grid_search(store, config: TrainConfig | None = None, *,
                backend: BackendDescriptor | None = None,
                tile_size: int = 224,
                scale_factor: float = 1.0) -> tuple[LogRegModel, TrainReport]:
    """Cross-validated search over the C grid, refit, and holdout evaluation.

    Rows are shuffled with the configured seed, split 0.75/0.25 (by default)
    into training and holdout slices, and each C is scored by stratified
    k-fold accuracy on the training slice. The best C (ties break to the
    smallest, i.e. the strongest regularization) is refit on the whole
    training slice and evaluated on the holdout.
    """
    t0 = time.perf_counter()
    config = config or TrainConfig()
    reader = store if isinstance(store, StoreReader) else read_store(store)
    names = reader.header.label_names
    k = len(names)
    n = reader.header.row_count
    if n < config.folds * k:
        raise StratificationError(
            f"store has {n} rows, need at least folds*classes = {config.folds * k}")
    features, labels = reader.read_all()
    x = features.astype(np.float64)
    y = labels.astype(np.int64)
    perm = np.random.default_rng(config.shuffle_seed).permutation(n)
    x, y = x[perm], y[perm]
    i = split_index(n, config.split_ratio)
    x_train, y_train = x[:i], y[:i]
    x_hold, y_hold = x[i:], y[i:]

    fold_of = stratified_folds(y_train, config.folds)
    cv_scores: dict[float, float] = {}
    for c in config.c_grid:
        accs = []
        for f in range(config.folds):
            train_rows = fold_of != f
            m = fit(x_train[train_rows], y_train[train_rows], c, config,
                    label_names=names, backend=backend,
                    tile_size=tile_size, scale_factor=scale_factor)
            pred = predict(m, x_train[~train_rows])
            accs.append(float(np.mean(pred == y_train[~train_rows])))
        cv_scores[c] = float(np.mean(accs))

    chosen_c = config.c_grid[0]
    for c in config.c_grid:
        if cv_scores[c] > cv_scores[chosen_c]:
            chosen_c = c
    assert all(cv_scores[chosen_c] >= v for v in cv_scores.values())

    model = fit(x_train, y_train, chosen_c, config, label_names=names,
                backend=backend, tile_size=tile_size, scale_factor=scale_factor)
    pred = predict(model, x_hold)
    cm = confusion(y_hold.tolist(), pred.tolist(), names)
    report = TrainReport(per_c_cv_accuracy=cv_scores, chosen_c=chosen_c,
                         holdout_confusion=cm, holdout_metrics=metrics(cm),
                         wall_seconds=time.perf_counter() - t0)
    return model, report


def format_train_report(report: TrainReport) -> str:
    from fissura.evaluator import format_report

    lines = ["cross-validation accuracy by C:"]
    for c, acc in report.per_c_cv_accuracy.items():
        marker = "  <- chosen" if c == report.chosen_c else ""
        lines.append(f"  C={c:g}: {acc:.4f}{marker}")
    lines.append("holdout evaluation:")
    lines.append(format_report(report.holdout_confusion, report.holdout_metrics))
    lines.append(f"wall time: {report.wall_seconds:.1f}s")
    return "\n".join(lines)


def _pack_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def save_model(model: LogRegModel, path) -> None:
    """Serialize to the KLM1 binary format (little-endian throughout)."""
    d, k = model.weights.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    parts = [
        MODEL_MAGIC,
        struct.pack("<IIII", MODEL_VERSION, d, k, len(model.label_names)),
        b"".join(_pack_name(n) for n in model.label_names),
        struct.pack("<IddH", model.tile_size, model.scale_factor,
                    model.regularization_c, len(model.backend.name.encode("utf-8"))),
        model.backend.name.encode("utf-8"),
        struct.pack("<I", model.backend.output_dim),
        np.ascontiguousarray(model.biases, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.weights, dtype="<f8").tobytes(),
    ]
    path.write_bytes(b"".join(parts))


def _read_exact(fh, n: int, path) -> bytes:
    raw = fh.read(n)
    if len(raw) < n:
        raise CorruptionError(f"{path}: truncated model file")
    return raw


def load_model(path) -> LogRegModel:
    """Read a KLM1 file back into a model; predictions round-trip bit-exactly."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, path)
        if magic != MODEL_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        version, d, k, n_labels = struct.unpack("<IIII", _read_exact(fh, 16, path))
        if version != MODEL_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        names = []
        for _ in range(n_labels):
            (ln,) = struct.unpack("<H", _read_exact(fh, 2, path))
            names.append(_read_exact(fh, ln, path).decode("utf-8"))
        tile_size, scale_factor, c, name_len = struct.unpack(
            "<IddH", _read_exact(fh, 22, path))
        backend_name = _read_exact(fh, name_len, path).decode("utf-8")
        (backend_dim,) = struct.unpack("<I", _read_exact(fh, 4, path))
        biases = np.frombuffer(_read_exact(fh, 8 * k, path), dtype="<f8").copy()
        weights = np.frombuffer(_read_exact(fh, 8 * d * k, path),
                                dtype="<f8").reshape(d, k).copy()
        if fh.read(1):
            raise CorruptionError(f"{path}: trailing bytes after model data")
    descriptor = BackendDescriptor(name=backend_name, output_dim=backend_dim,
                                   input_size=tile_size)
    return LogRegModel(weights=weights, biases=biases, label_names=tuple(names),
                       regularization_c=c, backend=descriptor,
                       tile_size=tile_size, scale_factor=scale_factor)
