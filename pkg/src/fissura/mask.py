"""Per-class detection masks: one bit per pixel, plus bounding-box extraction.

Bits are packed MSB-first per row (np.packbits convention), so a
120-megapixel mask costs ~15 MB. Connected components are computed from
row runs with union-find, which stays fast however large the mask is.
"""

from dataclasses import dataclass

import numpy as np

from fissura.errors import BoundsError

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def _span_mask(a: int, b: int) -> int:
    """Byte with MSB-first bit positions [a, b) set."""
    return (0xFF >> a) & ((0xFF << (8 - b)) & 0xFF)


class Bitmask:
    """Mutable 1-bit-per-pixel mask of a fixed width and height."""

    def __init__(self, width: int, height: int, data: np.ndarray | None = None):
        if width < 1 or height < 1:
            raise ValueError(f"mask must be at least 1x1, got {width}x{height}")
        self.width = width
        self.height = height
        self._row_bytes = (width + 7) // 8
        if data is None:
            self.data = np.zeros((height, self._row_bytes), dtype=np.uint8)
        else:
            if data.shape != (height, self._row_bytes):
                raise ValueError(f"packed data shape {data.shape} does not match "
                                 f"{width}x{height}")
            self.data = data

    @classmethod
    def from_bool(cls, arr: np.ndarray) -> "Bitmask":
        arr = np.asarray(arr, dtype=bool)
        return cls(arr.shape[1], arr.shape[0], np.packbits(arr, axis=1))

    def to_bool(self) -> np.ndarray:
        return np.unpackbits(self.data, axis=1)[:, :self.width].astype(bool)

    def to_image(self) -> np.ndarray:
        """8-bit 0/255 rendering for PNG output."""
        return np.unpackbits(self.data, axis=1)[:, :self.width] * np.uint8(255)

    def fill_rect(self, x: int, y: int, w: int, h: int) -> None:
        """Set every bit in the axis-aligned rectangle [x, x+w) x [y, y+h)."""
        if w <= 0 or h <= 0:
            return
        if x < 0 or y < 0 or x + w > self.width or y + h > self.height:
            raise BoundsError(
                f"rect ({x},{y},{w},{h}) outside mask {self.width}x{self.height}")
        x1 = x + w
        rows = self.data[y:y + h]
        first_byte, last_byte = x >> 3, (x1 - 1) >> 3
        if first_byte == last_byte:
            rows[:, first_byte] |= _span_mask(x & 7, x1 - 8 * first_byte)
            return
        rows[:, first_byte] |= _span_mask(x & 7, 8)
        rows[:, first_byte + 1:last_byte] |= 0xFF
        rows[:, last_byte] |= _span_mask(0, x1 - 8 * last_byte)

    def get(self, x: int, y: int) -> bool:
        return bool((self.data[y, x >> 3] >> (7 - (x & 7))) & 1)

    def get_points(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized membership test for arrays of coordinates."""
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        return ((self.data[ys, xs >> 3] >> (7 - (xs & 7))) & 1).astype(bool)

    def count(self) -> int:
        return int(_POPCOUNT[self.data].sum(dtype=np.int64))

    def row_runs(self, y: int) -> list[tuple[int, int]]:
        """Half-open [start, stop) runs of set bits in row y."""
        bits = np.unpackbits(self.data[y])[:self.width]
        edges = np.diff(np.concatenate(([0], bits, [0])).astype(np.int8))
        starts = np.flatnonzero(edges == 1)
        stops = np.flatnonzero(edges == -1)
        return list(zip(starts.tolist(), stops.tolist()))

    def is_subset_of(self, other: "Bitmask") -> bool:
        return not np.any(self.data & ~other.data)

    def __eq__(self, other):
        return (isinstance(other, Bitmask) and self.width == other.width
                and self.height == other.height
                and np.array_equal(self.data, other.data))


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel rectangle; w and h are at least 1."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"degenerate box {self}")


def mask_to_bboxes(mask: Bitmask) -> list[BBox]:
    """Tight bounding box of every 8-connected component, sorted by (y, x).

    Row runs are merged with union-find; two runs in adjacent rows belong to
    the same component when they overlap or touch diagonally.
    """
    parent: list[int] = []
    boxes: list[list[int]] = []  # per root: [min_x, max_x, min_y, max_y]

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> int:
        ri, rj = find(i), find(j)
        if ri == rj:
            return ri
        parent[rj] = ri
        bi, bj = boxes[ri], boxes[rj]
        bi[0] = min(bi[0], bj[0])
        bi[1] = max(bi[1], bj[1])
        bi[2] = min(bi[2], bj[2])
        bi[3] = max(bi[3], bj[3])
        return ri

    prev: list[tuple[int, int, int]] = []  # (start, stop, run id) in prior row
    for y in range(mask.height):
        cur: list[tuple[int, int, int]] = []
        p = 0
        for start, stop in mask.row_runs(y):
            rid = len(parent)
            parent.append(rid)
            boxes.append([start, stop - 1, y, y])
            # 8-connectivity: runs may touch diagonally, hence the <= bounds
            while p < len(prev) and prev[p][1] < start:
                p += 1
            q = p
            while q < len(prev) and prev[q][0] <= stop:
                rid = union(prev[q][2], rid)
                q += 1
            cur.append((start, stop, rid))
        prev = cur
    out = []
    seen = set()
    for i in range(len(parent)):
        r = find(i)
        if r not in seen:
            seen.add(r)
            min_x, max_x, min_y, max_y = boxes[r]
            out.append(BBox(x=min_x, y=min_y, w=max_x - min_x + 1,
                            h=max_y - min_y + 1))
    out.sort(key=lambda b: (b.y, b.x))
    return out
