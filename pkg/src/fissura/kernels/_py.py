"""Pure-numpy kernels: the fallback implementation of the hot loops.

Semantics here are normative; the Cython extension in ``_ext.pyx`` mirrors
the arithmetic term by term (same accumulation order, float64 throughout)
so both implementations produce identical tiles.
"""

import numpy as np


def _cubic_taps(src_len: int, dst_len: int):
    """Tap indices and Catmull-Rom weights (a = -0.5) for one axis.

    Output pixel centers map to source coordinates via half-pixel alignment:
    s = (d + 0.5) * src/dst - 0.5. Taps outside the image clamp to the edge
    (border replication).
    """
    scale = src_len / dst_len
    s = (np.arange(dst_len, dtype=np.float64) + 0.5) * scale - 0.5
    f = s - np.floor(s)
    base = np.floor(s).astype(np.int64)
    idx = np.empty((dst_len, 4), dtype=np.int64)
    for t in range(4):
        idx[:, t] = np.clip(base - 1 + t, 0, src_len - 1)
    w = np.empty((dst_len, 4), dtype=np.float64)
    w[:, 0] = ((-0.5 * f + 1.0) * f - 0.5) * f
    w[:, 1] = (1.5 * f - 2.5) * f * f + 1.0
    w[:, 2] = ((-1.5 * f + 2.0) * f + 0.5) * f
    w[:, 3] = (0.5 * f - 0.5) * f * f
    return idx, w


def _interp_axis1(values: np.ndarray, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
    # sequential accumulation: bit-identical to the extension's inner loop
    acc = values[:, idx[:, 0], :] * w[np.newaxis, :, 0, np.newaxis]
    for t in range(1, 4):
        acc += values[:, idx[:, t], :] * w[np.newaxis, :, t, np.newaxis]
    return acc


def resize_bicubic(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize an 8-bit H x W x 3 image with Catmull-Rom bicubic interpolation."""
    srcf = np.ascontiguousarray(src, dtype=np.uint8).astype(np.float64)
    idx_x, w_x = _cubic_taps(src.shape[1], out_w)
    tmp = _interp_axis1(srcf, idx_x, w_x)
    idx_y, w_y = _cubic_taps(src.shape[0], out_h)
    out = _interp_axis1(tmp.transpose(1, 0, 2), idx_y, w_y).transpose(1, 0, 2)
    return np.rint(np.clip(out, 0.0, 255.0)).astype(np.uint8)


def block_mean_std(batch: np.ndarray, grid: int = 8) -> np.ndarray:
    """Per-block mean and population std over a grid of square blocks.

    ``batch`` is (N, S, S, 3), coerced to float32 like the compiled kernel;
    S must be divisible by ``grid``. Output is (N, grid*grid*3*2) float32
    ordered block-row-major, channel within block, mean before std.
    Processes in slabs so temporaries stay small for large batches.
    """
    b = np.ascontiguousarray(batch, dtype=np.float32)
    n, s = b.shape[0], b.shape[1]
    bs = s // grid
    out = np.empty((n, grid * grid * 3 * 2), dtype=np.float32)
    slab = max(1, (1 << 24) // (s * s * 3 * 8))
    for lo in range(0, n, slab):
        v = b[lo:lo + slab].astype(np.float64)
        m = v.shape[0]
        v = v.reshape(m, grid, bs, grid, bs, 3)
        mean = v.mean(axis=(2, 4))
        dev = v - mean[:, :, np.newaxis, :, np.newaxis, :]
        std = np.sqrt((dev * dev).mean(axis=(2, 4)))
        pair = np.stack([mean, std], axis=-1)
        out[lo:lo + slab] = pair.reshape(m, -1).astype(np.float32)
    return out
