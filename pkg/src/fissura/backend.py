"""Feature extraction backends: pretrained-network and deterministic reference.

A backend turns preprocessed float32 tiles (N, S, S, 3) into a row-per-tile
feature matrix (N, D) float32. Two backends exist:

* ``blockstats`` — deterministic reference: each channel of the tile is
  partitioned into an 8x8 grid of square blocks; per block and channel the
  mean and population standard deviation are emitted, ordered block-row-major,
  channel within block, mean before std (8*8*3*2 = 384 features at any tile
  size divisible by 8).
* TorchScript — a pretrained convolutional trunk exported offline to a single
  TorchScript graph file (e.g. ``torch.jit.trace`` of a torchvision VGG16
  with its classifier head removed, flattened output 7*7*512 = 25088).
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fissura import kernels
from fissura.errors import AssetError, DescriptorError, DimensionError
from fissura.imaging import IMAGENET_MEANS

BLOCKSTATS_NAME = "blockstats"
BLOCKSTATS_GRID = 8
BLOCKSTATS_DIM = BLOCKSTATS_GRID * BLOCKSTATS_GRID * 3 * 2

DEFAULT_EXTRACTION_BATCH = 128


@dataclass(frozen=True)
class BackendDescriptor:
    """Identity and expected shapes of a feature backend."""

    name: str
    output_dim: int
    input_size: int = 224
    channel_means: tuple[float, float, float] = IMAGENET_MEANS
    channel_order: str = "RGB"
    model_asset_path: str | None = None
    input_layout: str = "NHWC"  # layout the asset's graph expects

    def __post_init__(self):
        if self.output_dim < 1:
            raise DescriptorError(f"output dim must be >= 1, got {self.output_dim}")
        if self.input_layout not in ("NHWC", "NCHW"):
            raise DescriptorError(f"unknown input layout {self.input_layout!r}")


def blockstats_descriptor(input_size: int = 224) -> BackendDescriptor:
    return BackendDescriptor(name=BLOCKSTATS_NAME, output_dim=BLOCKSTATS_DIM,
                             input_size=input_size)


class BlockStatsBackend:
    """Reference backend: per-block mean/std statistics, no model asset."""

    def __init__(self, descriptor: BackendDescriptor):
        if descriptor.output_dim != BLOCKSTATS_DIM:
            raise DescriptorError(
                f"blockstats backend emits {BLOCKSTATS_DIM} features, "
                f"descriptor says {descriptor.output_dim}")
        if descriptor.input_size % BLOCKSTATS_GRID != 0:
            raise DescriptorError(
                f"blockstats input size must be divisible by {BLOCKSTATS_GRID}, "
                f"got {descriptor.input_size}")
        self.descriptor = descriptor

    def extract(self, batch: np.ndarray) -> np.ndarray:
        return kernels.block_mean_std(batch, BLOCKSTATS_GRID)


class TorchScriptBackend:
    """Backend running a TorchScript graph on CPU with one worker thread."""

    def __init__(self, descriptor: BackendDescriptor):
        import torch

        path = descriptor.model_asset_path
        if path is None:
            raise DescriptorError("TorchScript backend needs model_asset_path")
        if not Path(path).is_file():
            raise AssetError(f"model asset not found: {path}")
        torch.set_num_threads(1)  # keeps inference bit-reproducible
        self._torch = torch
        try:
            self._module = torch.jit.load(path, map_location="cpu").eval()
        except Exception as exc:
            raise AssetError(f"cannot load model asset {path}: {exc}") from exc
        self.descriptor = descriptor
        probe = np.zeros((1, descriptor.input_size, descriptor.input_size, 3),
                         dtype=np.float32)
        try:
            out = self._forward(probe)
        except Exception as exc:
            raise DescriptorError(
                f"asset rejects {descriptor.input_size}x{descriptor.input_size} "
                f"input: {exc}") from exc
        if out.shape != (1, descriptor.output_dim):
            raise DescriptorError(
                f"descriptor says output dim {descriptor.output_dim}, "
                f"asset produced {out.size // out.shape[0]}")

    def _forward(self, batch: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            t = torch.from_numpy(np.ascontiguousarray(batch))
            if self.descriptor.input_layout == "NCHW":
                t = t.permute(0, 3, 1, 2).contiguous()
            out = self._module(t)
        return out.reshape(out.shape[0], -1).numpy().astype(np.float32, copy=False)

    def extract(self, batch: np.ndarray) -> np.ndarray:
        out = self._forward(batch)
        if out.shape[1] != self.descriptor.output_dim:
            raise DescriptorError(
                f"asset produced dim {out.shape[1]}, "
                f"descriptor says {self.descriptor.output_dim}")
        return out


def load_backend(descriptor: BackendDescriptor):
    """Instantiate the backend a descriptor names. Loading has no side effects
    beyond reading the asset file."""
    if descriptor.model_asset_path is not None:
        return TorchScriptBackend(descriptor)
    if descriptor.name == BLOCKSTATS_NAME:
        return BlockStatsBackend(descriptor)
    raise DescriptorError(
        f"unknown backend {descriptor.name!r} and no model asset path given")


def extract_features(backend, batch) -> np.ndarray:
    """Embed a batch of preprocessed tiles; row i corresponds to tile i.

    ``batch`` is a list of (S, S, 3) float tensors or one (N, S, S, 3) array.
    The output is (N, output_dim) float32 and is deterministic: the same
    batch always produces the same bytes, and concatenating batches equals
    concatenating their outputs.
    """
    desc = backend.descriptor
    s = desc.input_size
    if isinstance(batch, np.ndarray) and batch.ndim == 4:
        if batch.shape[1:] != (s, s, 3):
            raise DimensionError(
                f"tile 0: expected shape {(s, s, 3)}, got {tuple(batch.shape[1:])}")
        arr = np.ascontiguousarray(batch, dtype=np.float32)
    else:
        tiles = list(batch)
        if not tiles:
            return np.empty((0, desc.output_dim), dtype=np.float32)
        arr = np.empty((len(tiles), s, s, 3), dtype=np.float32)
        for i, tile in enumerate(tiles):
            t = np.asarray(tile)
            if t.shape != (s, s, 3):
                raise DimensionError(
                    f"tile {i}: expected shape {(s, s, 3)}, got {tuple(t.shape)}")
            arr[i] = t
    if arr.shape[0] == 0:
        return np.empty((0, desc.output_dim), dtype=np.float32)
    return backend.extract(arr)
