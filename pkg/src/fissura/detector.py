"""Sliding-window detection: per-class masks, boxes, overlays, multi-stage.

Images can be in-memory arrays or memory-mapped ``.npy`` rasters; detection
reads one window at a time and keeps only one batch of resized tiles
resident, so gigapixel inputs stay within a fixed memory budget.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fissura import imaging
from fissura.backend import extract_features
from fissura.errors import (BoundsError, ConfigurationError, DescriptorError,
                            DimensionError)
from fissura.imaging import PreprocessConfig, generate_windows
from fissura.mask import BBox, Bitmask, mask_to_bboxes
from fissura.trainer import LogRegModel, predict_proba

DEFAULT_CONFIDENCE_THRESHOLD = 0.95


@dataclass(frozen=True)
class DetectionConfig:
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    step_fraction: float = imaging.DEFAULT_STEP_FRACTION
    batch_size: int = 128

    def __post_init__(self):
        if not 0.0 < self.confidence_threshold < 1.0:
            raise ConfigurationError(
                f"confidence threshold must be in (0, 1), got {self.confidence_threshold}")
        if not 0.0 < self.step_fraction <= 1.0:
            raise ConfigurationError(
                f"step fraction must be in (0, 1], got {self.step_fraction}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch size must be >= 1, got {self.batch_size}")


class ArrayImageSource:
    """Adapter over an in-memory RGB uint8 array."""

    def __init__(self, image: np.ndarray):
        imaging.ensure_image(image)
        self._image = image
        self.height, self.width = image.shape[:2]

    def read_region(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        return self._image[y:y + h, x:x + w]


class MemmapImageSource:
    """Streaming adapter over an uncompressed ``.npy`` raster on disk.

    Only the pages a crop touches become resident, so peak memory stays
    bounded by the tile batch, not the image.
    """

    def __init__(self, path):
        self._map = np.load(path, mmap_mode="r")
        if self._map.ndim != 3 or self._map.shape[2] != 3 or self._map.dtype != np.uint8:
            raise DimensionError(
                f"{path}: expected an HxWx3 uint8 array, got "
                f"{self._map.shape} {self._map.dtype}")
        self.height, self.width = self._map.shape[:2]

    def read_region(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        return np.array(self._map[y:y + h, x:x + w])


def open_image_source(image):
    """Wrap an array, an image file, or a .npy raster as a window source."""
    if isinstance(image, np.ndarray):
        return ArrayImageSource(image)
    if hasattr(image, "read_region"):
        return image
    path = Path(image)
    if path.suffix.lower() == ".npy":
        return MemmapImageSource(path)
    return ArrayImageSource(imaging.load_image(path))


@dataclass(frozen=True)
class ClassDetection:
    mask: Bitmask
    boxes: list[BBox]


@dataclass(frozen=True)
class DetectionResult:
    """Masks and boxes per class plus the full per-window audit trail."""

    label_names: tuple[str, ...]
    width: int
    height: int
    window_size: int
    confidence_threshold: float
    per_class: dict[str, ClassDetection]
    positions: np.ndarray = field(repr=False)      # (N, 2) int64, (x, y)
    probabilities: np.ndarray = field(repr=False)  # (N, K) float32

    def accepted_windows(self):
        """(x, y, label, probability) for every window above threshold."""
        if len(self.positions) == 0:
            return
        best = self.probabilities.max(axis=1)
        arg = self.probabilities.argmax(axis=1)
        for i in np.flatnonzero(best >= self.confidence_threshold):
            yield (int(self.positions[i, 0]), int(self.positions[i, 1]),
                   self.label_names[arg[i]], float(best[i]))


def physical_window(model: LogRegModel) -> int:
    """Window side in image pixels: the model tile scaled down by the
    acquisition scale factor (scale 2 means a 112 px window upscaled to 224)."""
    return imaging.round_half_up(model.tile_size / model.scale_factor)


def _check_compatibility(model: LogRegModel, backend) -> None:
    desc = backend.descriptor
    if desc.name != model.backend.name or desc.output_dim != model.backend.output_dim:
        raise DescriptorError(
            f"model was trained with backend {model.backend.name!r} "
            f"(dim {model.backend.output_dim}), got {desc.name!r} "
            f"(dim {desc.output_dim})")
    if desc.input_size != model.tile_size:
        raise DescriptorError(
            f"backend input {desc.input_size}px does not match model tile "
            f"{model.tile_size}px")


def _classify_positions(source, positions: np.ndarray, model: LogRegModel,
                        backend, config: DetectionConfig, window: int):
    """Run crop -> resize -> preprocess -> features -> probabilities over
    the given window positions, in batches. Returns (N, K) float32."""
    pp = PreprocessConfig(target_tile_size=model.tile_size,
                          channel_means=backend.descriptor.channel_means,
                          channel_order=backend.descriptor.channel_order)
    k = len(model.label_names)
    n = positions.shape[0]
    probabilities = np.empty((n, k), dtype=np.float32)
    batch = np.empty((config.batch_size, model.tile_size, model.tile_size, 3),
                     dtype=np.float32)
    for lo in range(0, n, config.batch_size):
        hi = min(lo + config.batch_size, n)
        for j in range(lo, hi):
            x, y = int(positions[j, 0]), int(positions[j, 1])
            crop = source.read_region(x, y, window, window)
            if window != model.tile_size:
                crop = imaging.resize(np.ascontiguousarray(crop), model.tile_size)
            batch[j - lo] = imaging.preprocess(crop, pp)
        feats = extract_features(backend, batch[:hi - lo])
        probabilities[lo:hi] = predict_proba(model, feats).astype(np.float32)
    return probabilities


def _build_result(model, config, width, height, window, positions,
                  probabilities) -> DetectionResult:
    names = tuple(model.label_names)
    masks = {name: Bitmask(width, height) for name in names}
    if len(positions):
        best = probabilities.max(axis=1)
        arg = probabilities.argmax(axis=1)
        for i in np.flatnonzero(best >= config.confidence_threshold):
            x, y = int(positions[i, 0]), int(positions[i, 1])
            masks[names[arg[i]]].fill_rect(x, y, window, window)
    per_class = {name: ClassDetection(mask, mask_to_bboxes(mask))
                 for name, mask in masks.items()}
    return DetectionResult(label_names=names, width=width, height=height,
                           window_size=window,
                           confidence_threshold=config.confidence_threshold,
                           per_class=per_class, positions=positions,
                           probabilities=probabilities)


def detect(image, model: LogRegModel, backend,
           config: DetectionConfig | None = None) -> DetectionResult:
    """Classify every sliding window and stamp accepted ones into per-class
    masks.

    A window joins the argmax class's mask when its best probability reaches
    the confidence threshold; each accepted window fills its whole rectangle.
    """
    config = config or DetectionConfig()
    _check_compatibility(model, backend)
    k = len(model.label_names)
    if config.confidence_threshold < 1.0 / k:
        raise ConfigurationError(
            f"threshold {config.confidence_threshold} is below 1/{k}; every "
            "window would always be accepted")
    source = open_image_source(image)
    window = physical_window(model)
    if window > source.width or window > source.height:
        raise DimensionError(
            f"physical window {window}px exceeds image "
            f"{source.width}x{source.height}px")
    grid = generate_windows(source.width, source.height, window,
                            config.step_fraction)
    probabilities = _classify_positions(source, grid.positions, model, backend,
                                        config, window)
    return _build_result(model, config, source.width, source.height, window,
                         grid.positions, probabilities)


def multi_stage(image, stage1: DetectionResult,
                stage_models: dict[str, LogRegModel], backend,
                config: DetectionConfig | None = None) -> dict[str, DetectionResult]:
    """Second-stage detection gated by first-stage masks.

    For each stage-1 label with a model, only windows whose center pixel
    lies inside that label's stage-1 mask are evaluated; results are keyed
    by the stage-1 label.
    """
    config = config or DetectionConfig()
    source = open_image_source(image)
    out: dict[str, DetectionResult] = {}
    for label, model in stage_models.items():
        if label not in stage1.per_class:
            raise ConfigurationError(
                f"stage model {label!r} does not match any stage-1 label "
                f"{sorted(stage1.per_class)}")
        _check_compatibility(model, backend)
        gate = stage1.per_class[label].mask
        window = physical_window(model)
        if window > source.width or window > source.height:
            raise DimensionError(
                f"physical window {window}px exceeds image "
                f"{source.width}x{source.height}px")
        grid = generate_windows(source.width, source.height, window,
                                config.step_fraction)
        centers = grid.positions + window // 2
        keep = gate.get_points(centers[:, 0], centers[:, 1])
        positions = grid.positions[keep]
        probabilities = _classify_positions(source, positions, model, backend,
                                            config, window)
        out[label] = _build_result(model, config, source.width, source.height,
                                   window, positions, probabilities)
    return out


def render_overlay(image: np.ndarray, boxes, color=(255, 0, 0),
                   stroke_width: int = 2) -> np.ndarray:
    """Copy of the image with box outlines drawn; interiors stay untouched.

    Boxes are drawn in list order, so later strokes overwrite earlier ones.
    """
    imaging.ensure_image(image)
    h, w = image.shape[:2]
    out = image.copy()
    col = np.asarray(color, dtype=np.uint8)
    for box in boxes:
        if box.x < 0 or box.y < 0 or box.x + box.w > w or box.y + box.h > h:
            raise BoundsError(f"box {box} outside image {w}x{h}")
        s = min(stroke_width, box.w, box.h)
        x0, y0, x1, y1 = box.x, box.y, box.x + box.w, box.y + box.h
        out[y0:y0 + s, x0:x1] = col
        out[y1 - s:y1, x0:x1] = col
        out[y0:y1, x0:x0 + s] = col
        out[y0:y1, x1 - s:x1] = col
    return out


def write_detection_outputs(result: DetectionResult, image, out_dir,
                            color=(255, 0, 0)) -> list[Path]:
    """Write <label>_mask.png, <label>_out.png, and predictions.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    base = None
    if image is not None:
        source = open_image_source(image)
        base = source.read_region(0, 0, source.width, source.height)
    for label, det in result.per_class.items():
        mask_path = out_dir / f"{label}_mask.png"
        from PIL import Image

        Image.fromarray(det.mask.to_image(), mode="L").save(mask_path, format="PNG")
        written.append(mask_path)
        if base is not None:
            overlay_path = out_dir / f"{label}_out.png"
            imaging.save_image(overlay_path, render_overlay(base, det.boxes, color))
            written.append(overlay_path)
    csv_path = out_dir / "predictions.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "label", "probability"])
        for x, y, label, p in result.accepted_windows():
            w.writerow([x, y, label, f"{p:.6f}"])
    written.append(csv_path)
    return written
