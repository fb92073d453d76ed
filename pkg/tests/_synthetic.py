"""Procedural fixtures: textured gray surfaces with thin dark polyline
cracks at known pixel locations. Everything is driven by a seeded RNG so
tests are reproducible."""

import numpy as np
from scipy.ndimage import zoom


def texture(rng, height, width):
    """Concrete-like background: smooth blotches plus fine grain."""
    coarse = rng.normal(0.0, 12.0, (height // 16 + 2, width // 16 + 2))
    blotches = zoom(coarse, 16, order=1)[:height, :width]
    base = rng.uniform(140.0, 180.0)
    grain = rng.normal(0.0, 8.0, (height, width))
    gray = np.clip(base + blotches + grain, 60.0, 230.0)
    tint = rng.normal(0.0, 3.0, 3)
    img = np.clip(gray[:, :, None] + tint[None, None, :], 0.0, 255.0)
    return img.astype(np.uint8)


def draw_crack(img, points, rng, width_px=3, darkness=80.0):
    """Darken a polyline into the image; returns the painted-pixel mask."""
    h, w = img.shape[:2]
    painted = np.zeros((h, w), dtype=bool)
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        steps = int(max(abs(x1 - x0), abs(y1 - y0), 1)) * 2 + 1
        for t in np.linspace(0.0, 1.0, steps):
            px = int(round(x0 + t * (x1 - x0)))
            py = int(round(y0 + t * (y1 - y0)))
            xa, xb = max(0, px - width_px // 2), min(w, px + (width_px + 1) // 2)
            ya, yb = max(0, py - width_px // 2), min(h, py + (width_px + 1) // 2)
            if xa < xb and ya < yb:
                painted[ya:yb, xa:xb] = True
    n = int(painted.sum())
    level = np.clip(img[..., 0][painted].astype(np.float64) - darkness
                    + rng.normal(0.0, 5.0, n), 5.0, 255.0).astype(np.uint8)
    for c in range(3):
        img[..., c][painted] = level
    return painted


def crack_tile(rng, size=112):
    """Tile with a thin crack passing near the center, random orientation."""
    img = texture(rng, size, size)
    mid = size / 2.0
    jitter = size * 0.08
    angle = rng.uniform(0.0, np.pi)
    dx, dy = np.cos(angle), np.sin(angle)
    reach = size
    p0 = (mid - dx * reach, mid - dy * reach)
    p2 = (mid + dx * reach, mid + dy * reach)
    p1 = (mid + rng.uniform(-jitter, jitter), mid + rng.uniform(-jitter, jitter))
    clip = lambda p: (float(np.clip(p[0], 0, size - 1)),
                      float(np.clip(p[1], 0, size - 1)))
    draw_crack(img, [clip(p0), clip(p1), clip(p2)], rng,
               width_px=int(rng.integers(2, 4)))
    return img


def background_tile(rng, size=112):
    return texture(rng, size, size)


def composite_scene(rng, width, height, n_cracks=3):
    """Large textured image with full-length cracks; returns (image, painted)."""
    img = texture(rng, height, width)
    painted = np.zeros((height, width), dtype=bool)
    for _ in range(n_cracks):
        if rng.uniform() < 0.5:
            x = rng.uniform(0.15, 0.85) * width
            pts = [(x + rng.uniform(-40, 40), y)
                   for y in np.linspace(0, height - 1, 5)]
        else:
            y = rng.uniform(0.15, 0.85) * height
            pts = [(x, y + rng.uniform(-40, 40))
                   for x in np.linspace(0, width - 1, 5)]
        pts = [(float(np.clip(px, 0, width - 1)), float(np.clip(py, 0, height - 1)))
               for px, py in pts]
        painted |= draw_crack(img, pts, rng, width_px=3)
    return img, painted


def make_training_tiles(rng, per_class=300, size=112):
    """(tiles, labels) with labels 0=background, 1=crack."""
    tiles = [background_tile(rng, size) for _ in range(per_class)]
    tiles += [crack_tile(rng, size) for _ in range(per_class)]
    labels = np.array([0] * per_class + [1] * per_class, dtype=np.int64)
    return tiles, labels
