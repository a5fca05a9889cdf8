"""Tiling geometry, patch embedding, and spectrogram types."""

import numpy as np
import pytest

from atnm.errors import DimensionError
from atnm.features import (
    LabeledExample,
    PatchEmbedding,
    Spectrogram,
    tile_batch,
    tile_spectrogram,
)
from atnm.nn import Tensor, finite_diff_check


class TestTileSpectrogram:
    def test_paper_geometry_truncates_trailing_frames(self):
        values = np.arange(998 * 64, dtype=float).reshape(998, 64)
        tiles = tile_spectrogram(values, 60, 4)
        assert tiles.shape == (60, 4, 16, 16)
        # 998 - 60*16 = 38 trailing frames dropped
        np.testing.assert_array_equal(tiles[0, 0], values[:16, :16])
        np.testing.assert_array_equal(tiles[59, 3], values[944:960, 48:64])

    def test_unit_tiles_equal_cells(self):
        values = np.random.default_rng(0).standard_normal((4, 4))
        tiles = tile_spectrogram(values, 4, 4)
        assert tiles.shape == (4, 4, 1, 1)
        np.testing.assert_array_equal(tiles[:, :, 0, 0], values)

    def test_tile_coverage_matches_index_oracle(self):
        values = np.arange(60, dtype=float).reshape(10, 6)
        tiles = tile_spectrogram(values, 2, 3)
        # tile (1, 2) covers frames 5..9 and bins 4..5
        np.testing.assert_array_equal(tiles[1, 2], values[5:10, 4:6])
        # every retained cell appears in exactly one tile
        th, tw = 5, 2
        for t in range(2):
            for f in range(3):
                np.testing.assert_array_equal(
                    tiles[t, f], values[t * th : (t + 1) * th, f * tw : (f + 1) * tw]
                )

    def test_partition_cell_count(self):
        values = np.zeros((37, 13))
        tiles = tile_spectrogram(values, 5, 3)
        th, tw = 37 // 5, 13 // 3
        assert tiles.size == (th * 5) * (tw * 3)

    def test_grid_larger_than_input(self):
        with pytest.raises(DimensionError):
            tile_spectrogram(np.zeros((4, 4)), 5, 2)
        with pytest.raises(DimensionError):
            tile_spectrogram(np.zeros((4, 4)), 2, 5)

    def test_batch_tiling_matches_per_example(self):
        rng = np.random.default_rng(1)
        batch = rng.standard_normal((3, 20, 12))
        tiles = tile_batch(batch, 4, 3)
        for i in range(3):
            np.testing.assert_array_equal(tiles[i], tile_spectrogram(batch[i], 4, 3))


class TestPatchEmbedding:
    def test_zero_input_zero_bias_gives_zero_features(self):
        rng = np.random.default_rng(0)
        emb = PatchEmbedding(tile_cells=6, f_tiles=2, rng=rng)
        tiles = np.zeros((3, 2, 2, 3))
        grid = emb.embed_tiles(tiles)
        np.testing.assert_array_equal(grid.features.data, 0.0)
        assert grid.dim == 128 and grid.num_instances == 6

    def test_column_projections_distinguish_frequency_rows(self):
        rng = np.random.default_rng(1)
        emb = PatchEmbedding(tile_cells=4, f_tiles=2, rng=rng)
        tiles = np.zeros((1, 2, 2, 2))
        tiles[0, 0] = tiles[0, 1] = rng.standard_normal((2, 2))
        grid = emb.embed_tiles(tiles)
        assert not np.allclose(grid.features.data[0], grid.features.data[1])
        # tying the column weights restores the symmetry
        for col in emb.columns[1:]:
            col.weight.data = emb.columns[0].weight.data.copy()
            col.bias.data = emb.columns[0].bias.data.copy()
        tied = emb.embed_tiles(tiles)
        np.testing.assert_array_equal(tied.features.data[0], tied.features.data[1])

    def test_instance_order_is_time_major(self):
        rng = np.random.default_rng(2)
        emb = PatchEmbedding(tile_cells=1, f_tiles=2, rng=rng)
        tiles = np.arange(8, dtype=float).reshape(4, 2, 1, 1)
        grid = emb.embed_tiles(tiles)
        assert grid.coords[:3] == [(0, 0), (0, 1), (1, 0)]
        # swapping two time rows swaps the matching feature rows, column-wise
        swapped = emb.embed_tiles(tiles[[1, 0, 2, 3]])
        np.testing.assert_array_equal(swapped.features.data[0:2], grid.features.data[2:4])
        np.testing.assert_array_equal(swapped.features.data[2:4], grid.features.data[0:2])

    def test_gradient_check_through_embedding(self):
        rng = np.random.default_rng(3)
        emb = PatchEmbedding(tile_cells=4, f_tiles=2, rng=rng)
        tiles = rng.standard_normal((1, 4, 2, 2, 2))

        def loss():
            return (emb(tiles).pow(2.0)).sum()

        err = finite_diff_check(loss, emb.parameters(), rng=rng)
        assert err < 1e-5

    def test_wrong_column_count(self):
        emb = PatchEmbedding(tile_cells=4, f_tiles=2, rng=np.random.default_rng(0))
        with pytest.raises(DimensionError):
            emb(np.zeros((1, 3, 3, 2, 2)))


class TestTypes:
    def test_spectrogram_validation(self):
        with pytest.raises(DimensionError):
            Spectrogram(np.zeros(5))
        with pytest.raises(DimensionError):
            Spectrogram(np.zeros((0, 4)))
        s = Spectrogram(np.zeros((2, 3)))
        assert (s.frames, s.bins) == (2, 3)

    def test_labeled_example_shape_check(self):
        spec = Spectrogram(np.zeros((2, 2)))
        with pytest.raises(DimensionError):
            LabeledExample(spec, np.zeros(3), np.zeros(4, dtype=bool), "x")
