"""Confusion matrices, accuracy/precision/recall, and batch evaluation."""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fissura.errors import DataError, LabelError
from fissura.imaging import PreprocessConfig, load_image, preprocess, resize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    """K x K integer counts; rows are actual classes, columns predicted."""

    label_names: tuple[str, ...]
    counts: np.ndarray = field(repr=False)  # (K, K) int64

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def trace(self) -> int:
        return int(np.trace(self.counts))

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix)
                and self.label_names == other.label_names
                and np.array_equal(self.counts, other.counts))


@dataclass(frozen=True)
class Metrics:
    """Accuracy plus per-class precision/recall; None marks an undefined
    (zero-denominator) metric rather than reporting a silent 0."""

    accuracy: float
    per_class: dict[str, dict[str, float | None]]
    precision: float | None = None  # positive class, binary use
    recall: float | None = None


def _to_indices(values, label_names) -> np.ndarray:
    index = {name: i for i, name in enumerate(label_names)}
    out = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        if isinstance(v, str):
            if v not in index:
                raise LabelError(f"unknown label {v!r}")
            out[i] = index[v]
        else:
            out[i] = int(v)
            if not 0 <= out[i] < len(label_names):
                raise LabelError(f"label index {v} out of range")
    return out


def confusion(actual, predicted, label_names) -> ConfusionMatrix:
    """Count matrix from paired labels (names or indices)."""
    names = tuple(label_names)
    if len(actual) != len(predicted):
        raise DataError(
            f"{len(actual)} actual labels vs {len(predicted)} predictions")
    a = _to_indices(actual, names)
    p = _to_indices(predicted, names)
    k = len(names)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (a, p), 1)
    return ConfusionMatrix(names, counts)


def metrics(cm: ConfusionMatrix, positive_class: str | None = None) -> Metrics:
    """Accuracy = (TP+TN)/total; recall = TP/(TP+FN); precision = TP/(TP+FP).

    Per-class values use the one-vs-rest reading of the matrix; the
    positive-class convenience fields are filled when positive_class is given.
    """
    total = cm.total
    if total <= 0:
        raise DataError("confusion matrix has no samples")
    counts = cm.counts
    per_class: dict[str, dict[str, float | None]] = {}
    for k, name in enumerate(cm.label_names):
        tp = int(counts[k, k])
        row = int(counts[k, :].sum())   # tp + fn
        col = int(counts[:, k].sum())   # tp + fp
        per_class[name] = {
            "recall": tp / row if row > 0 else None,
            "precision": tp / col if col > 0 else None,
        }
    accuracy = cm.trace / total
    precision = recall = None
    if positive_class is not None:
        if positive_class not in cm.label_names:
            raise LabelError(f"unknown positive class {positive_class!r}")
        precision = per_class[positive_class]["precision"]
        recall = per_class[positive_class]["recall"]
    return Metrics(accuracy=accuracy, per_class=per_class,
                   precision=precision, recall=recall)


@dataclass(frozen=True)
class EvalReport:
    confusion: ConfusionMatrix
    metrics: Metrics
    skipped: int           # unreadable files
    below_threshold: int   # crops rejected by the confidence threshold


def evaluate_directory(model, backend, root, threshold: float = 0.5,
                       batch_size: int = 128) -> EvalReport:
    """Classify every crop under root/<label>/ and tally a confusion matrix.

    Subdirectory names must be model labels. Crops are resized to the
    backend input size, preprocessed, and classified by argmax; a crop whose
    best probability falls below the threshold is counted separately and
    left out of the matrix (with the default 0.5 and two classes, nothing
    is ever left out).
    """
    from fissura.backend import extract_features
    from fissura.trainer import predict_proba

    root = Path(root)
    names = tuple(model.label_names)
    dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not dirs:
        raise DataError(f"no label subdirectories under {root}")
    for d in dirs:
        if d.name not in names:
            raise LabelError(f"directory {d.name!r} is not a model label")
    pp = PreprocessConfig(target_tile_size=backend.descriptor.input_size,
                          channel_means=backend.descriptor.channel_means,
                          channel_order=backend.descriptor.channel_order)
    actual: list[int] = []
    predicted: list[int] = []
    skipped = 0
    below = 0
    label_index = {name: i for i, name in enumerate(names)}
    for d in dirs:
        files = sorted(p for p in d.iterdir()
                       if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
        for lo in range(0, len(files), batch_size):
            tiles = []
            for path in files[lo:lo + batch_size]:
                try:
                    img = load_image(path)
                except Exception as exc:
                    logger.warning("skipping unreadable crop %s: %s", path, exc)
                    skipped += 1
                    continue
                if img.shape[0] != pp.target_tile_size or img.shape[1] != pp.target_tile_size:
                    if img.shape[0] != img.shape[1]:
                        logger.warning("skipping non-square crop %s", path)
                        skipped += 1
                        continue
                    img = resize(img, pp.target_tile_size)
                tiles.append(preprocess(img, pp))
            if not tiles:
                continue
            probs = predict_proba(model, extract_features(backend, tiles))
            best = probs.max(axis=1)
            args = probs.argmax(axis=1)
            for b, a in zip(best, args):
                if b < threshold:
                    below += 1
                else:
                    actual.append(label_index[d.name])
                    predicted.append(int(a))
    cm = confusion(actual, predicted, names)
    return EvalReport(cm, metrics(cm), skipped, below)


def format_report(cm: ConfusionMatrix, m: Metrics) -> str:
    """Plain-text confusion matrix and metric table."""
    names = cm.label_names
    width = max(12, max(len(n) for n in names) + 2)
    lines = []
    header = " " * width + "".join(f"{'pred ' + n:>{width}}" for n in names)
    lines.append(header)
    for i, n in enumerate(names):
        row = f"{'actual ' + n:<{width}}" + "".join(
            f"{int(cm.counts[i, j]):>{width}}" for j in range(len(names)))
        lines.append(row)
    lines.append(f"total samples: {cm.total}")
    lines.append(f"accuracy: {m.accuracy:.4f}")
    for n in names:
        pc = m.per_class[n]
        prec = "n/a" if pc["precision"] is None else f"{pc['precision']:.4f}"
        rec = "n/a" if pc["recall"] is None else f"{pc['recall']:.4f}"
        lines.append(f"{n}: precision {prec}  recall {rec}")
    return "\n".join(lines)


def write_report_csv(path, cm: ConfusionMatrix, m: Metrics) -> None:
    """Machine-readable report: label header, count rows, metric rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["actual\\predicted", *cm.label_names])
        for i, n in enumerate(cm.label_names):
            w.writerow([n, *[int(c) for c in cm.counts[i]]])
        w.writerow(["accuracy", f"{m.accuracy:.6f}"])
        for n in cm.label_names:
            pc = m.per_class[n]
            w.writerow([f"precision_{n}",
                        "n/a" if pc["precision"] is None else f"{pc['precision']:.6f}"])
            w.writerow([f"recall_{n}",
                        "n/a" if pc["recall"] is None else f"{pc['recall']:.6f}"])
