"""Spectrogram containers, tile extraction, and the trainable patch embedding.

The patch embedding turns a grid of spectrogram tiles into one feature
vector per tile: flatten -> shared linear to 512 -> ReLU -> a separate
linear to 128 per frequency column, so each frequency ordinate owns its
projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .nn import Linear, Module, Tensor, concat

EMBED_HIDDEN = 512
EMBED_DIM = 128


@dataclass
class Spectrogram:
    """A frames x bins grid of log-magnitude values."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError(f"spectrogram must be 2-D, got shape {self.values.shape}")
        t, f = self.values.shape
        if t < 1 or f < 1:
            raise DimensionError(f"spectrogram needs at least one frame and bin, got {t}x{f}")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]


@dataclass
class LabeledExample:
    """Spectrogram plus per-class labels and a known-label mask."""

    spectrogram: Spectrogram
    labels: np.ndarray
    known_mask: np.ndarray
    example_id: str

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        self.known_mask = np.asarray(self.known_mask, dtype=bool)
        if self.labels.shape != self.known_mask.shape:
            raise DimensionError(
                f"labels shape {self.labels.shape} != mask shape {self.known_mask.shape}"
            )

    @property
    def classes(self) -> int:
        return self.labels.shape[0]


@dataclass
class InstanceGrid:
    """Per-tile feature vectors with their (time, frequency) grid coordinates.

    Features are stored time-major: instance n sits at row n // f_tiles,
    column n % f_tiles.
    """

    t_tiles: int
    f_tiles: int
    features: Tensor
    coords: list = field(init=False)

    def __post_init__(self):
        n = self.features.data.shape[0]
        if n != self.t_tiles * self.f_tiles:
            raise DimensionError(
                f"{n} instances do not fill a {self.t_tiles}x{self.f_tiles} grid"
            )
        self.coords = [(i // self.f_tiles, i % self.f_tiles) for i in range(n)]

    @property
    def num_instances(self) -> int:
        return self.t_tiles * self.f_tiles

    @property
    def dim(self) -> int:
        return self.features.data.shape[1]


def tile_spectrogram(spec, t_tiles: int, f_tiles: int) -> np.ndarray:
    """Partition a spectrogram into a t_tiles x f_tiles grid of equal tiles.

    Tile size is floor(T/t_tiles) x floor(F/f_tiles); trailing remainder
    frames/bins are truncated. Returns (t_tiles, f_tiles, th, tw).
    """
    values = spec.values if isinstance(spec, Spectrogram) else np.asarray(spec, dtype=np.float64)
    t, f = values.shape
    if t_tiles > t or f_tiles > f:
        raise DimensionError(
            f"cannot cut a {t}x{f} spectrogram into {t_tiles}x{f_tiles} tiles"
        )
    th = t // t_tiles
    tw = f // f_tiles
    trimmed = values[: t_tiles * th, : f_tiles * tw]
    return trimmed.reshape(t_tiles, th, f_tiles, tw).transpose(0, 2, 1, 3)


def tile_batch(batch_values: np.ndarray, t_tiles: int, f_tiles: int) -> np.ndarray:
    """Tile a (batch, T, F) stack; returns (batch, t_tiles, f_tiles, th, tw)."""
    b, t, f = batch_values.shape
    if t_tiles > t or f_tiles > f:
        raise DimensionError(
            f"cannot cut {t}x{f} spectrograms into {t_tiles}x{f_tiles} tiles"
        )
    th = t // t_tiles
    tw = f // f_tiles
    trimmed = batch_values[:, : t_tiles * th, : f_tiles * tw]
    return trimmed.reshape(b, t_tiles, th, f_tiles, tw).transpose(0, 1, 3, 2, 4)


class PatchEmbedding(Module):
    """Flatten each tile, shared 512-wide layer, then per-column 128 heads."""

    def __init__(self, tile_cells: int, f_tiles: int, rng: np.random.Generator, name: str = "feat"):
        self.tile_cells = tile_cells
        self.f_tiles = f_tiles
        self.shared = Linear(tile_cells, EMBED_HIDDEN, rng, f"{name}.shared")
        self.columns = [
            Linear(EMBED_HIDDEN, EMBED_DIM, rng, f"{name}.col{f}") for f in range(f_tiles)
        ]

    def forward(self, tiles_batch: np.ndarray) -> Tensor:
        """(batch, T', F', th, tw) -> features (batch, T'*F', 128), time-major."""
        b, t_tiles, f_tiles, th, tw = tiles_batch.shape
        if f_tiles != self.f_tiles:
            raise DimensionError(
                f"tiles have {f_tiles} frequency columns, embedding expects {self.f_tiles}"
            )
        if th * tw != self.tile_cells:
            raise DimensionError(
                f"tiles have {th * tw} cells, embedding expects {self.tile_cells}"
            )
        flat = Tensor(tiles_batch.reshape(b * t_tiles * f_tiles, th * tw))
        hidden = self.shared(flat).relu()
        hidden = hidden.reshape(b * t_tiles, f_tiles, EMBED_HIDDEN)
        cols = [
            self.columns[f](hidden[:, f, :]).reshape(b * t_tiles, 1, EMBED_DIM)
            for f in range(f_tiles)
        ]
        out = concat(cols, axis=1)
        return out.reshape(b, t_tiles * f_tiles, EMBED_DIM)

    def embed_tiles(self, tiles: np.ndarray) -> InstanceGrid:
        """Single-example entry point; tiles is (T', F', th, tw)."""
        t_tiles, f_tiles = tiles.shape[0], tiles.shape[1]
        feats = self.forward(tiles[None]).reshape(t_tiles * f_tiles, EMBED_DIM)
        return InstanceGrid(t_tiles, f_tiles, feats)
