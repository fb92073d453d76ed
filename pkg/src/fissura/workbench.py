"""Project directory layout and annotation-driven dataset building.

A project root contains::

    database/images/   pending input photos
    database/DONE/     photos already annotated
    datapoints/<label>/  labeled training crops (one directory per class)
    features/          extracted feature stores
    models/            trained classifier files
    output/            detection masks and overlays

The label directories define the class set; crop files are named
``<label>_s<scale>_<imageStem>_<seq>.png`` so the acquisition scale factor
travels with the data.
"""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fissura import imaging
from fissura.errors import AnnotationError, DimensionError, LayoutError
from fissura.imaging import round_half_up

logger = logging.getLogger(__name__)

REQUIRED_DIRS = ("database/images", "database/DONE", "datapoints", "features",
                 "models", "output")


@dataclass(frozen=True)
class ProjectLayout:
    root: Path

    @property
    def images_dir(self) -> Path:
        return self.root / "database" / "images"

    @property
    def done_dir(self) -> Path:
        return self.root / "database" / "DONE"

    @property
    def datapoints_dir(self) -> Path:
        return self.root / "datapoints"

    @property
    def features_dir(self) -> Path:
        return self.root / "features"

    @property
    def models_dir(self) -> Path:
        return self.root / "models"

    @property
    def output_dir(self) -> Path:
        return self.root / "output"

    def labels(self) -> list[str]:
        return sorted(d.name for d in self.datapoints_dir.iterdir() if d.is_dir())

    def label_dir(self, label: str) -> Path:
        return self.datapoints_dir / label

    def pending_images(self) -> list[Path]:
        return sorted(p for p in self.images_dir.iterdir()
                      if p.suffix.lower() in (".png", ".jpg", ".jpeg"))


def init_project(root, labels=("Background", "Crack")) -> ProjectLayout:
    """Scaffold the directory layout with one crop directory per label."""
    root = Path(root)
    for rel in REQUIRED_DIRS:
        (root / rel).mkdir(parents=True, exist_ok=True)
    for label in labels:
        (root / "datapoints" / label).mkdir(exist_ok=True)
    return ProjectLayout(root)


def open_project(root) -> ProjectLayout:
    root = Path(root)
    missing = [rel for rel in REQUIRED_DIRS if not (root / rel).is_dir()]
    if missing:
        raise LayoutError(f"{root} is not a project root; missing {missing}")
    return ProjectLayout(root)


@dataclass(frozen=True)
class Annotation:
    """A labeled polyline drawn along a defect on one input image."""

    image_id: str
    label: str
    scale_factor: float
    polyline: tuple[tuple[float, float], ...]
    crops_per_segment: int = 5

    def __post_init__(self):
        if self.scale_factor <= 0:
            raise AnnotationError(f"scale factor must be positive, got {self.scale_factor}")
        if self.crops_per_segment < 1:
            raise AnnotationError("crops_per_segment must be >= 1")
        object.__setattr__(self, "polyline",
                           tuple((float(x), float(y)) for x, y in self.polyline))


@dataclass(frozen=True)
class CropRecord:
    path: Path
    x: int       # top-left of the physical crop in image coordinates
    y: int
    side: int    # physical crop side before resizing
    tile_size: int = field(default=imaging.DEFAULT_TILE_SIZE)


def _format_scale(scale: float) -> str:
    return f"{scale:g}"


def _next_sequence(label_dir: Path, prefix: str) -> int:
    pattern = re.compile(re.escape(prefix) + r"_(\d+)\.png$")
    best = -1
    for p in label_dir.glob(f"{prefix}_*.png"):
        m = pattern.search(p.name)
        if m:
            best = max(best, int(m.group(1)))
    return best + 1


def crop_centers(polyline, crops_per_segment: int):
    """Evenly spaced crop centers per segment, endpoints included.

    Zero-length segments are skipped (logged by the caller); with one crop
    per segment the midpoint is used.
    """
    centers = []
    skipped = 0
    for (x0, y0), (x1, y1) in zip(polyline, polyline[1:]):
        if x0 == x1 and y0 == y1:
            skipped += 1
            continue
        n = crops_per_segment
        ts = [0.5] if n == 1 else [i / (n - 1) for i in range(n)]
        for t in ts:
            centers.append((x0 + t * (x1 - x0), y0 + t * (y1 - y0)))
    return centers, skipped


def crops_from_path(image: np.ndarray, annotation: Annotation,
                    layout: ProjectLayout,
                    tile_size: int = imaging.DEFAULT_TILE_SIZE) -> list[CropRecord]:
    """Extract square crops centered along the annotation polyline.

    Each segment yields crops_per_segment crops of physical side
    round(tile_size / scale_factor), clamped inward at image borders,
    resized to tile_size and written into the label's crop directory.
    """
    imaging.ensure_image(image)
    if len(annotation.polyline) < 2:
        raise AnnotationError("polyline needs at least 2 points")
    label_dir = layout.label_dir(annotation.label)
    if not label_dir.is_dir():
        raise LayoutError(f"label directory {label_dir} does not exist")
    h, w = image.shape[:2]
    for px, py in annotation.polyline:
        if not (0 <= px < w and 0 <= py < h):
            raise AnnotationError(f"point ({px}, {py}) outside image {w}x{h}")
    side = round_half_up(tile_size / annotation.scale_factor)
    if side < 1 or side > min(w, h):
        raise DimensionError(
            f"physical crop side {side}px does not fit image {w}x{h}")
    centers, skipped = crop_centers(annotation.polyline,
                                    annotation.crops_per_segment)
    if skipped:
        logger.warning("skipped %d zero-length segment(s) in %s",
                       skipped, annotation.image_id)
    stem = Path(annotation.image_id).stem
    prefix = f"{annotation.label}_s{_format_scale(annotation.scale_factor)}_{stem}"
    seq = _next_sequence(label_dir, prefix)
    records = []
    for cx, cy in centers:
        left = round_half_up(cx - side / 2.0)
        top = round_half_up(cy - side / 2.0)
        left = min(max(left, 0), w - side)
        top = min(max(top, 0), h - side)
        crop = imaging.extract_crop(image, left, top, side)
        tile = imaging.resize(crop, tile_size)
        path = label_dir / f"{prefix}_{seq:04d}.png"
        imaging.save_image(path, tile)
        records.append(CropRecord(path=path, x=left, y=top, side=side,
                                  tile_size=tile_size))
        seq += 1
    return records


def parse_scale_from_name(name: str) -> float | None:
    """Recover the scale factor stamped into a crop file name."""
    m = re.search(r"_s(\d+(?:\.\d+)?(?:e[+-]?\d+)?)_", name)
    return float(m.group(1)) if m else None


def infer_scale_factor(layout: ProjectLayout) -> float | None:
    """Unique scale factor across all crop file names, or None if mixed/absent."""
    scales = set()
    for label in layout.labels():
        for p in layout.label_dir(label).glob("*.png"):
            s = parse_scale_from_name(p.name)
            if s is not None:
                scales.add(s)
    if len(scales) == 1:
        return scales.pop()
    return None
