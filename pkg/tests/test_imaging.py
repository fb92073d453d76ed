import math

import numpy as np
import pytest

from fissura.errors import BoundsError, DimensionError
from fissura.imaging import (IMAGENET_MEANS, PreprocessConfig, extract_crop,
                             generate_windows, preprocess, resize)


def brute_force_positions(width, height, window, step):
    """Independent enumeration of clamped sliding-window positions."""
    def axis(limit):
        out, x = [], 0
        while x + window <= limit:
            out.append(x)
            x += step
        if out[-1] + window < limit:
            out.append(limit - window)
        return out

    return [(x, y) for y in axis(height) for x in axis(width)]


class TestGenerateWindows:
    def test_window_equals_image(self):
        grid = generate_windows(224, 224, 224, 0.6)
        assert grid.positions.tolist() == [[0, 0]]

    def test_clamped_final_column(self):
        grid = generate_windows(448, 224, 224, 0.6)
        assert grid.step_px == 134
        assert grid.positions.tolist() == [[0, 0], [134, 0], [224, 0]]

    def test_full_frame_window_count(self):
        # 4248x2850 frame, 112 px windows, step 0.6 -> 63 x 42 grid
        grid = generate_windows(4248, 2850, 112, 0.6)
        assert grid.step_px == 67
        xs = sorted(set(grid.positions[:, 0].tolist()))
        ys = sorted(set(grid.positions[:, 1].tolist()))
        assert (len(xs), len(ys)) == (63, 42)
        assert len(grid) == 2646
        assert len(grid) > 2500
        assert [tuple(p) for p in grid.positions.tolist()] == \
            brute_force_positions(4248, 2850, 112, 67)

    def test_window_larger_than_image(self):
        with pytest.raises(DimensionError, match="300.*200x100"):
            generate_windows(200, 100, 300, 0.6)

    def test_bad_step_fraction(self):
        with pytest.raises(ValueError):
            generate_windows(100, 100, 50, 0.0)
        with pytest.raises(ValueError):
            generate_windows(100, 100, 50, 1.5)

    def test_positions_unique_row_major(self, rng):
        for _ in range(50):
            w = int(rng.integers(10, 400))
            h = int(rng.integers(10, 400))
            win = int(rng.integers(5, min(w, h) + 1))
            frac = float(rng.uniform(0.3, 1.0))
            if math.floor(frac * win) < 1:
                continue
            grid = generate_windows(w, h, win, frac)
            pos = [tuple(p) for p in grid.positions.tolist()]
            assert len(set(pos)) == len(pos)
            assert pos == sorted(pos, key=lambda p: (p[1], p[0]))
            assert all(0 <= x <= w - win and 0 <= y <= h - win for x, y in pos)

    def test_count_law_and_coverage(self, rng):
        for _ in range(50):
            w = int(rng.integers(8, 300))
            h = int(rng.integers(8, 300))
            win = int(rng.integers(4, min(w, h) + 1))
            frac = float(rng.uniform(0.3, 1.0))
            step = math.floor(frac * win)
            if step < 1:
                continue
            grid = generate_windows(w, h, win, frac)
            xs = sorted(set(grid.positions[:, 0].tolist()))
            ys = sorted(set(grid.positions[:, 1].tolist()))
            assert len(xs) == math.ceil((w - win) / step) + 1
            assert len(ys) == math.ceil((h - win) / step) + 1
            covered = np.zeros((h, w), dtype=bool)
            for x, y in grid.positions:
                covered[y:y + win, x:x + win] = True
            assert covered.all()


class TestExtractCrop:
    def test_identity_crop(self, rng):
        img = rng.integers(0, 256, (30, 30, 3), dtype=np.uint8)
        crop = extract_crop(img, 0, 0, 30)
        assert np.array_equal(crop, img)
        crop[0, 0] = 0  # returned copy must not alias the source
        assert img[0, 0, 0] != 0 or img[0, 0].sum() > 0

    def test_gradient_block(self):
        img = np.zeros((32, 32, 3), dtype=np.uint8)
        for c in range(3):
            img[:, :, c] = (np.arange(32)[:, None] * 7 + np.arange(32) * 3 + c) % 256
        crop = extract_crop(img, 10, 10, 4)
        assert np.array_equal(crop, img[10:14, 10:14])

    def test_out_of_bounds(self, rng):
        img = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        with pytest.raises(BoundsError):
            extract_crop(img, -1, 0, 4)
        with pytest.raises(BoundsError):
            extract_crop(img, 14, 0, 4)

    def test_source_unmodified(self, rng):
        img = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        before = img.copy()
        extract_crop(img, 2, 3, 5)
        assert np.array_equal(img, before)


def catmull_rom(x):
    """Reference kernel with a = -0.5, evaluated directly from its cases."""
    x = abs(x)
    if x <= 1.0:
        return 1.5 * x**3 - 2.5 * x**2 + 1.0
    if x < 2.0:
        return -0.5 * x**3 + 2.5 * x**2 - 4.0 * x + 2.0
    return 0.0


def reference_resize(src, out_size):
    """Scalar bicubic oracle: direct kernel evaluation, no shared code."""
    h, w = src.shape[:2]
    out = np.empty((out_size, out_size, 3))
    for oy in range(out_size):
        sy = (oy + 0.5) * h / out_size - 0.5
        for ox in range(out_size):
            sx = (ox + 0.5) * w / out_size - 0.5
            for c in range(3):
                acc = 0.0
                for ty in range(4):
                    # weights use the unclamped tap position; pixel reads clamp
                    py = min(max(math.floor(sy) - 1 + ty, 0), h - 1)
                    row = 0.0
                    for tx in range(4):
                        px = min(max(math.floor(sx) - 1 + tx, 0), w - 1)
                        wx = catmull_rom(sx - (math.floor(sx) - 1 + tx))
                        row += wx * float(src[py, px, c])
                    acc += catmull_rom(sy - (math.floor(sy) - 1 + ty)) * row
                out[oy, ox, c] = acc
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


class TestResize:
    def test_constant_preserved(self):
        img = np.full((112, 112, 3), 128, dtype=np.uint8)
        out = resize(img, 224)
        assert out.shape == (224, 224, 3)
        assert np.all(out == 128)

    def test_identity(self, rng):
        img = rng.integers(0, 256, (224, 224, 3), dtype=np.uint8)
        assert np.array_equal(resize(img, 224), img)

    def test_checkerboard_upsample_matches_kernel_oracle(self):
        img = np.zeros((2, 2, 3), dtype=np.uint8)
        img[0, 1] = img[1, 0] = 255
        out = resize(img, 4)
        assert np.array_equal(out, reference_resize(img, 4))
        center = out[1:3, 1:3, 0].astype(int)
        assert np.all(center > 0) and np.all(center < 255)

    def test_random_images_match_kernel_oracle(self, rng):
        for _ in range(3):
            h, w = int(rng.integers(3, 12)), int(rng.integers(3, 12))
            img = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
            out_size = int(rng.integers(2, 16))
            got = resize(img, out_size)
            want = reference_resize(img, out_size)
            # oracle accumulates in a different order; allow 1 lsb of slack
            assert np.max(np.abs(got.astype(int) - want.astype(int))) <= 1


class TestPreprocess:
    def test_mean_image_maps_to_zero(self):
        cfg = PreprocessConfig(target_tile_size=8, channel_means=(10.0, 20.0, 30.0))
        img = np.empty((8, 8, 3), dtype=np.uint8)
        img[..., 0], img[..., 1], img[..., 2] = 10, 20, 30
        assert np.all(preprocess(img, cfg) == 0.0)

    def test_black_image(self):
        cfg = PreprocessConfig(target_tile_size=8)
        out = preprocess(np.zeros((8, 8, 3), dtype=np.uint8), cfg)
        assert np.allclose(out[0, 0], [-123.68, -116.779, -103.939], atol=1e-4)

    def test_white_image(self):
        cfg = PreprocessConfig(target_tile_size=8)
        out = preprocess(np.full((8, 8, 3), 255, dtype=np.uint8), cfg)
        assert np.allclose(out[0, 0], [131.32, 138.221, 151.061], atol=1e-4)

    def test_bgr_reorder(self):
        cfg = PreprocessConfig(target_tile_size=8, channel_means=(0.0, 0.0, 0.0),
                               channel_order="BGR")
        img = np.zeros((8, 8, 3), dtype=np.uint8)
        img[..., 0] = 200  # red
        out = preprocess(img, cfg)
        assert out[0, 0, 2] == 200.0 and out[0, 0, 0] == 0.0

    def test_round_trip_within_quantization(self, rng):
        cfg = PreprocessConfig(target_tile_size=16)
        img = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        restored = preprocess(img, cfg) + np.asarray(IMAGENET_MEANS, dtype=np.float32)
        assert np.allclose(restored, img.astype(np.float32), atol=1e-3)

    def test_size_mismatch(self, rng):
        cfg = PreprocessConfig(target_tile_size=16)
        with pytest.raises(DimensionError):
            preprocess(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8), cfg)
