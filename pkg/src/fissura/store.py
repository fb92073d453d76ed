"""Single-file feature dataset: the KFS1 binary format.

Layout, little-endian throughout:

    magic "KFS1" | version u32 | rowCount u64 | featureDim u32
    | labelCount u32 | {nameLen u16 | UTF-8 bytes} x labelCount
    | labels u32 x rowCount
    | features f32 x rowCount x featureDim (row-major)

rowCount is written as the u64 sentinel 2**64-1 while a writer is open and
patched at finalize, so partially written files are detectable. The writer
spools labels and features to side files and concatenates them at finalize;
its memory use is bounded by buffer_rows regardless of the total row count.
"""

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fissura.errors import (AppendError, CorruptionError, EmptyStoreError,
                            FormatError, StateError)

MAGIC = b"KFS1"
VERSION = 1
ROW_COUNT_SENTINEL = 2**64 - 1

_FIXED_HEADER = struct.Struct("<4sIQII")  # magic, version, rows, dim, labelCount
_ROW_COUNT_OFFSET = 8  # magic + version


@dataclass(frozen=True)
class StoreHeader:
    version: int
    row_count: int
    feature_dim: int
    label_names: tuple[str, ...]


def _encode_names(names) -> bytes:
    parts = []
    for name in names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    return b"".join(parts)


def _header_bytes(row_count: int, feature_dim: int, names) -> bytes:
    return _FIXED_HEADER.pack(MAGIC, VERSION, row_count, feature_dim,
                              len(names)) + _encode_names(names)


class StoreWriter:
    """Streaming writer; single writer per file, finalize exactly once."""

    def __init__(self, path, feature_dim: int, label_names, buffer_rows: int = 1024):
        if feature_dim < 1:
            raise ValueError(f"feature dim must be >= 1, got {feature_dim}")
        names = tuple(label_names)
        if not names or len(set(names)) != len(names):
            raise ValueError("label names must be non-empty and unique")
        if buffer_rows < 1:
            raise ValueError(f"buffer_rows must be >= 1, got {buffer_rows}")
        self.path = Path(path)
        self.feature_dim = feature_dim
        self.label_names = names
        self.buffer_rows = buffer_rows
        self.rows_written = 0
        self._buf_features: list[np.ndarray] = []
        self._buf_labels: list[np.ndarray] = []
        self._buf_rows = 0
        self._finalized = False
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_bytes(_header_bytes(ROW_COUNT_SENTINEL, feature_dim, names))
        self._labels_part = self.path.with_name(self.path.name + ".labels.part")
        self._features_part = self.path.with_name(self.path.name + ".features.part")
        self._labels_fh = open(self._labels_part, "wb")
        self._features_fh = open(self._features_part, "wb")

    def append(self, features, labels) -> None:
        """Append a batch of rows; features (M, dim), labels (M,) int indices."""
        if self._finalized:
            raise StateError("writer already finalized")
        f = np.asarray(features, dtype=np.float32)
        if f.ndim == 1:
            f = f.reshape(1, -1)
        lab = np.asarray(labels, dtype=np.int64).reshape(-1)
        if f.ndim != 2 or f.shape[1] != self.feature_dim:
            raise AppendError(
                f"expected feature dim {self.feature_dim}, got {f.shape}")
        if f.shape[0] != lab.shape[0]:
            raise AppendError(
                f"{f.shape[0]} feature rows vs {lab.shape[0]} labels")
        if not np.all(np.isfinite(f)):
            bad = int(np.flatnonzero(~np.isfinite(f).all(axis=1))[0])
            raise AppendError(f"non-finite feature value in batch row {bad}")
        if lab.size and (lab.min() < 0 or lab.max() >= len(self.label_names)):
            raise AppendError(
                f"label index out of range for {len(self.label_names)} labels")
        self._buf_features.append(f)
        self._buf_labels.append(lab.astype(np.uint32))
        self._buf_rows += f.shape[0]
        self.rows_written += f.shape[0]
        if self._buf_rows >= self.buffer_rows:
            self._flush()

    def _flush(self) -> None:
        if self._buf_rows == 0:
            return
        np.concatenate(self._buf_labels).astype("<u4").tofile(self._labels_fh)
        feats = np.concatenate(self._buf_features).astype("<f4")
        feats.tofile(self._features_fh)
        self._buf_features = []
        self._buf_labels = []
        self._buf_rows = 0

    def finalize(self) -> StoreHeader:
        """Concatenate the spooled sections and patch the row count."""
        if self._finalized:
            raise StateError("writer already finalized")
        self._flush()
        self._labels_fh.close()
        self._features_fh.close()
        with open(self.path, "r+b") as out:
            out.seek(0, 2)
            for part in (self._labels_part, self._features_part):
                with open(part, "rb") as src:
                    while chunk := src.read(1 << 22):
                        out.write(chunk)
            out.seek(_ROW_COUNT_OFFSET)
            out.write(struct.pack("<Q", self.rows_written))
        self._labels_part.unlink()
        self._features_part.unlink()
        self._finalized = True
        return StoreHeader(VERSION, self.rows_written, self.feature_dim,
                           self.label_names)

    def abort(self) -> None:
        """Close spool files, leaving the sentinel header in place."""
        if not self._finalized:
            self._labels_fh.close()
            self._features_fh.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            if not self._finalized:
                self.finalize()
        else:
            self.abort()
        return False


def write_store(path, feature_dim: int, label_names, batches,
                buffer_rows: int = 1024) -> StoreHeader:
    """Write a whole store from an iterable of (features, labels) batches."""
    writer = StoreWriter(path, feature_dim, label_names, buffer_rows)
    try:
        for features, labels in batches:
            writer.append(features, labels)
    except BaseException:
        writer.abort()
        raise
    return writer.finalize()


class StoreReader:
    """Random-access reader over a finalized store."""

    def __init__(self, path):
        self.path = Path(path)
        with open(self.path, "rb") as fh:
            fixed = fh.read(_FIXED_HEADER.size)
            if len(fixed) < _FIXED_HEADER.size:
                raise CorruptionError(f"{self.path}: truncated header")
            magic, version, rows, dim, label_count = _FIXED_HEADER.unpack(fixed)
            if magic != MAGIC:
                raise FormatError(f"{self.path}: bad magic {magic!r}")
            if version != VERSION:
                raise FormatError(f"{self.path}: unsupported version {version}")
            names = []
            for _ in range(label_count):
                raw_len = fh.read(2)
                if len(raw_len) < 2:
                    raise CorruptionError(f"{self.path}: truncated label table")
                (n,) = struct.unpack("<H", raw_len)
                raw = fh.read(n)
                if len(raw) < n:
                    raise CorruptionError(f"{self.path}: truncated label table")
                names.append(raw.decode("utf-8"))
            self._data_offset = fh.tell()
        if rows == ROW_COUNT_SENTINEL:
            raise CorruptionError(f"{self.path}: store was never finalized")
        if dim < 1 or not names:
            raise FormatError(f"{self.path}: invalid header (dim {dim}, "
                              f"{len(names)} labels)")
        expected = self._data_offset + rows * 4 + rows * dim * 4
        actual = self.path.stat().st_size
        if actual != expected:
            raise CorruptionError(
                f"{self.path}: expected {expected} bytes, found {actual}")
        self.header = StoreHeader(version, rows, dim, tuple(names))
        self._fh = open(self.path, "rb")

    def __len__(self) -> int:
        return self.header.row_count

    def read_labels(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        start, stop = self._check_range(start, stop)
        self._fh.seek(self._data_offset + 4 * start)
        return np.fromfile(self._fh, dtype="<u4", count=stop - start)

    def read_features(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        start, stop = self._check_range(start, stop)
        dim = self.header.feature_dim
        self._fh.seek(self._data_offset + 4 * self.header.row_count
                      + 4 * dim * start)
        out = np.fromfile(self._fh, dtype="<f4", count=(stop - start) * dim)
        return out.reshape(stop - start, dim)

    def read_slice(self, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
        return self.read_features(start, stop), self.read_labels(start, stop)

    def read_all(self) -> tuple[np.ndarray, np.ndarray]:
        return self.read_slice(0, self.header.row_count)

    def _check_range(self, start, stop):
        rows = self.header.row_count
        if stop is None:
            stop = rows
        if not 0 <= start <= stop <= rows:
            raise IndexError(f"slice [{start}, {stop}) out of range for {rows} rows")
        return start, stop

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False


def read_store(path) -> StoreReader:
    """Open a finalized store for random-access reads."""
    return StoreReader(path)


def split_index(row_count: int, split_ratio: float = 0.75) -> int:
    """First index of the evaluation slice: floor(row_count * ratio)."""
    if row_count == 0:
        raise EmptyStoreError("cannot split an empty store")
    if not 0.0 < split_ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {split_ratio}")
    return math.floor(row_count * split_ratio)
