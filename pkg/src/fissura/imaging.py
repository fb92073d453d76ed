"""Image loading, sliding-window grids, cropping, resizing, preprocessing.

Images are numpy arrays of shape (height, width, 3), dtype uint8, channel
order RGB. All operations are pure functions; nothing mutates its input.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from fissura import kernels
from fissura.errors import BoundsError, DimensionError

# channel means of the ImageNet training set, RGB order
IMAGENET_MEANS = (123.68, 116.779, 103.939)

DEFAULT_TILE_SIZE = 224
DEFAULT_STEP_FRACTION = 0.60


def round_half_up(v: float) -> int:
    """floor(v + 0.5): the rounding the browser UI uses too, so preview
    rectangles and server-side crops always land on the same pixels."""
    return math.floor(v + 0.5)


def load_image(path) -> np.ndarray:
    """Read a PNG or JPEG file into an RGB uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_image(path, image: np.ndarray) -> None:
    """Write an RGB uint8 array as PNG."""
    ensure_image(image)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image, mode="RGB").save(path, format="PNG")


def ensure_image(image: np.ndarray) -> np.ndarray:
    if not isinstance(image, np.ndarray) or image.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"expected an HxWx3 array, got shape {getattr(image, 'shape', None)}")
    if image.dtype != np.uint8:
        raise DimensionError(f"expected uint8 pixels, got {image.dtype}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise DimensionError(f"empty image of shape {image.shape}")
    return image


@dataclass(frozen=True)
class TileGrid:
    """Sliding-window positions over one image, row-major order."""

    image_width: int
    image_height: int
    window_size: int
    step_fraction: float
    step_px: int
    positions: np.ndarray = field(repr=False)  # (N, 2) int64 columns (x, y)

    def __len__(self) -> int:
        return self.positions.shape[0]


def _axis_positions(length: int, window: int, step: int) -> list[int]:
    last = length - window
    pos = list(range(0, last + 1, step))
    if pos[-1] != last:
        pos.append(last)  # clamp the final window flush to the edge
    return pos


def generate_windows(image_width: int, image_height: int, window_size: int,
                     step_fraction: float) -> TileGrid:
    """Sliding-window top-left positions stepping by step_fraction * window.

    When the next step would overrun the edge, one final window clamped
    flush to the edge is emitted, so the grid always covers every pixel.
    """
    if window_size < 1:
        raise DimensionError(f"window size must be >= 1, got {window_size}")
    if window_size > image_width or window_size > image_height:
        raise DimensionError(
            f"window {window_size}px exceeds image {image_width}x{image_height}px")
    if not 0.0 < step_fraction <= 1.0:
        raise ValueError(f"step fraction must be in (0, 1], got {step_fraction}")
    step_px = math.floor(step_fraction * window_size)
    if step_px < 1:
        raise ValueError(
            f"step {step_fraction} of window {window_size}px is below one pixel")
    xs = _axis_positions(image_width, window_size, step_px)
    ys = _axis_positions(image_height, window_size, step_px)
    positions = np.empty((len(xs) * len(ys), 2), dtype=np.int64)
    xs_arr = np.asarray(xs, dtype=np.int64)
    for row, y in enumerate(ys):
        positions[row * len(xs):(row + 1) * len(xs), 0] = xs_arr
        positions[row * len(xs):(row + 1) * len(xs), 1] = y
    return TileGrid(image_width, image_height, window_size, step_fraction,
                    step_px, positions)


def extract_crop(image: np.ndarray, x: int, y: int, window_size: int) -> np.ndarray:
    """Copy out one window_size x window_size square."""
    ensure_image(image)
    h, w = image.shape[:2]
    if x < 0 or y < 0 or x + window_size > w or y + window_size > h:
        raise BoundsError(
            f"window ({x},{y})+{window_size} lies outside image {w}x{h}")
    return image[y:y + window_size, x:x + window_size].copy()


def resize(image: np.ndarray, target_size: int) -> np.ndarray:
    """Bicubic (Catmull-Rom, a=-0.5) resize to a square target."""
    ensure_image(image)
    if target_size < 1:
        raise DimensionError(f"target size must be >= 1, got {target_size}")
    if image.shape[0] == target_size and image.shape[1] == target_size:
        return image.copy()
    return kernels.resize_bicubic(image, target_size, target_size)


@dataclass(frozen=True)
class PreprocessConfig:
    """Backend-ready tile normalization: per-channel mean subtraction."""

    target_tile_size: int = DEFAULT_TILE_SIZE
    channel_means: tuple[float, float, float] = IMAGENET_MEANS
    channel_order: str = "RGB"  # order expected by the backend

    def __post_init__(self):
        if self.target_tile_size < 8:
            raise DimensionError(
                f"tile size must be >= 8, got {self.target_tile_size}")
        if self.channel_order not in ("RGB", "BGR"):
            raise ValueError(f"unknown channel order {self.channel_order!r}")
        if len(self.channel_means) != 3:
            raise ValueError("channel_means must have three entries")


def preprocess(image: np.ndarray, config: PreprocessConfig) -> np.ndarray:
    """Reorder channels for the backend and subtract its channel means.

    The input must already be resized to config.target_tile_size; output is
    float32 and may be negative. channel_means are given in the backend's
    channel order.
    """
    ensure_image(image)
    t = config.target_tile_size
    if image.shape[0] != t or image.shape[1] != t:
        raise DimensionError(
            f"expected a {t}x{t} tile, got {image.shape[1]}x{image.shape[0]}")
    x = image.astype(np.float32)
    if config.channel_order == "BGR":
        x = x[:, :, ::-1]
    return x - np.asarray(config.channel_means, dtype=np.float32)
