"""Tiled instance-attention classifiers.

Every tile of the spectrogram gets an instance-level prediction and an
attention score per class; the recording-level prediction is the
attention-weighted average of the instance predictions. Variants:

  AttTF   - attention over the full time x frequency grid
  AttTFid - AttTF plus a one-hot frequency-row identifier on each instance
  AttT    - temporal attention only (frequency tiles mean-pooled first)
  FC      - no attention; mean-pool embeddings into a single linear head
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .features import EMBED_DIM, InstanceGrid, PatchEmbedding, tile_batch
from .nn import Linear, Module, Tensor, concat

ATTENTION_VARIANTS = ("AttTF", "AttTFid", "AttT", "FC")


@dataclass
class AttentionOutput:
    """Instance predictions, normalized attention, and the pooled prediction."""

    instance_preds: Tensor  # (N, C) in [0, 1]
    attention: Tensor  # (N, C), sums to 1 over instances per class
    final_pred: Tensor  # (C,) in [0, 1]


class EmbeddingBlock(Module):
    """Three 128-wide linear layers with ReLUs and an input skip connection."""

    def __init__(self, rng: np.random.Generator, dim: int = EMBED_DIM, name: str = "emb"):
        self.dim = dim
        self.fc1 = Linear(dim, dim, rng, f"{name}.fc1")
        self.fc2 = Linear(dim, dim, rng, f"{name}.fc2")
        self.fc3 = Linear(dim, dim, rng, f"{name}.fc3")

    def forward(self, u: Tensor) -> Tensor:
        return self.fc3(self.fc2(self.fc1(u).relu()).relu()) + u


class AttentionHead(Module):
    """Per-class sigmoid scorers for instance predictions and attention."""

    def __init__(self, in_dim: int, classes: int, rng: np.random.Generator, name: str = "head"):
        self.classes = classes
        self.inst = Linear(in_dim, classes, rng, f"{name}.inst")
        self.att = Linear(in_dim, classes, rng, f"{name}.att")

    def forward(self, v: Tensor):
        """v is (batch, N, D); returns (preds, alpha, final) per batch item."""
        if v.data.ndim != 3:
            raise DimensionError(f"attention head expects (batch, N, D), got {v.data.shape}")
        if v.data.shape[1] < 1:
            raise DimensionError("attention head needs at least one instance")
        preds = self.inst(v).sigmoid()
        raw = self.att(v).sigmoid()
        alpha = raw / raw.sum(axis=1, keepdims=True)
        final = (alpha * preds).sum(axis=1)
        return preds, alpha, final


def embed_instances(grid: InstanceGrid, block: EmbeddingBlock) -> InstanceGrid:
    """Apply the skip-connected embedding block to every instance."""
    if grid.dim != block.dim:
        raise DimensionError(f"grid features are {grid.dim}-dim, block expects {block.dim}")
    return InstanceGrid(grid.t_tiles, grid.f_tiles, block(grid.features))


def freq_onehot(t_tiles: int, f_tiles: int) -> np.ndarray:
    """(N, F') one-hot frequency-row identifiers, time-major instance order."""
    rows = np.arange(t_tiles * f_tiles) % f_tiles
    return np.eye(f_tiles)[rows]


def append_freq_id(grid: InstanceGrid) -> InstanceGrid:
    """Append each instance's one-hot frequency-row identifier."""
    onehot = Tensor(freq_onehot(grid.t_tiles, grid.f_tiles))
    feats = concat([grid.features, onehot], axis=1)
    return InstanceGrid(grid.t_tiles, grid.f_tiles, feats)


def attend_and_aggregate(grid: InstanceGrid, head: AttentionHead) -> AttentionOutput:
    """Score each instance, normalize attention per class, pool predictions."""
    n, d = grid.features.data.shape
    v = grid.features.reshape(1, n, d)
    preds, alpha, final = head(v)
    return AttentionOutput(
        instance_preds=preds.reshape(n, head.classes),
        attention=alpha.reshape(n, head.classes),
        final_pred=final.reshape(head.classes),
    )


def pool_frequency(grid: InstanceGrid) -> InstanceGrid:
    """Mean-pool the frequency tiles of each time step (for AttT)."""
    n, d = grid.features.data.shape
    pooled = grid.features.reshape(grid.t_tiles, grid.f_tiles, d).mean(axis=1)
    return InstanceGrid(grid.t_tiles, 1, pooled)


def attT_forward(grid: InstanceGrid, block: EmbeddingBlock, head: AttentionHead) -> AttentionOutput:
    """Temporal-only attention: pool frequency, embed, attend over T' instances."""
    return attend_and_aggregate(embed_instances(pool_frequency(grid), block), head)


def fc_baseline_forward(grid: InstanceGrid, block: EmbeddingBlock, out: Linear) -> Tensor:
    """Mean-pool embedded instances into a single sigmoid linear head."""
    v = embed_instances(grid, block).features
    return out(v.mean(axis=0)).sigmoid()


class InstanceAttentionClassifier(Module):
    """Full model: patch embedding, instance embedding, variant-specific head."""

    def __init__(
        self,
        variant: str,
        classes: int,
        t_tiles: int,
        f_tiles: int,
        tile_cells: int,
        rng: np.random.Generator,
    ):
        if variant not in ATTENTION_VARIANTS:
            raise DimensionError(
                f"unknown attention variant '{variant}', expected one of {ATTENTION_VARIANTS}"
            )
        self.variant = variant
        self.classes = classes
        self.t_tiles = t_tiles
        self.f_tiles = f_tiles
        self.patch = PatchEmbedding(tile_cells, f_tiles, rng, "feat")
        self.block = EmbeddingBlock(rng, EMBED_DIM, "emb")
        head_dim = EMBED_DIM + f_tiles if variant == "AttTFid" else EMBED_DIM
        if variant == "FC":
            self.out = Linear(EMBED_DIM, classes, rng, "head.out")
        else:
            self.head = AttentionHead(head_dim, classes, rng, "head")

    def forward(self, batch_values: np.ndarray) -> dict:
        """(batch, T, F) spectrogram values -> predictions and attention.

        Returns {"final": (B, C), "instance_preds": (B, N, C) | None,
        "attention": (B, N, C) | None}, all Tensors.
        """
        b = batch_values.shape[0]
        tiles = tile_batch(batch_values, self.t_tiles, self.f_tiles)
        u = self.patch(tiles)  # (B, N, 128)
        if self.variant == "AttT":
            n = self.t_tiles
            u = u.reshape(b, self.t_tiles, self.f_tiles, EMBED_DIM).mean(axis=2)
            v = self.block(u)
        else:
            n = self.t_tiles * self.f_tiles
            v = self.block(u)
            if self.variant == "AttTFid":
                onehot = np.broadcast_to(
                    freq_onehot(self.t_tiles, self.f_tiles), (b, n, self.f_tiles)
                )
                v = concat([v, Tensor(onehot)], axis=2)
        if self.variant == "FC":
            final = self.out(v.mean(axis=1)).sigmoid()
            return {"final": final, "instance_preds": None, "attention": None}
        preds, alpha, final = self.head(v)
        return {"final": final, "instance_preds": preds, "attention": alpha}

    def predict(self, batch_values: np.ndarray, rng=None) -> np.ndarray:
        return self.forward(batch_values)["final"].data
