"""Glimpse sensor, encoders, location policy, and episode runner."""

import math

import numpy as np
import pytest

from atnm.errors import ConfigError, DimensionError
from atnm.glimpse_models import (
    FlatGlimpseEncoder,
    GlimpseNetwork,
    LocationPolicy,
    RecurrentGlimpseClassifier,
    RectConvGlimpseEncoder,
    extract_glimpse,
    glimpse_encode,
    loc_to_center,
    run_episode,
)
from atnm.nn import Tensor, finite_diff_check

from oracles import naive_glimpse


class TestExtractGlimpse:
    def test_center_location_on_odd_grid(self):
        values = np.arange(49, dtype=float).reshape(7, 7)
        ps = extract_glimpse(values, (0.0, 0.0), [(3, 3)])
        assert ps.center == (3, 3)
        np.testing.assert_array_equal(ps.patches[0], values[2:5, 2:5])

    def test_top_left_corner_zero_padded(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal((30, 30))
        ps = extract_glimpse(values, (-1.0, -1.0), [(12, 12)])
        np.testing.assert_array_equal(ps.patches, naive_glimpse(values, (-1.0, -1.0), [(12, 12)]))
        # the first 6 rows/cols fall outside and stay zero
        assert np.all(ps.patches[0][:6, :] == 0.0)
        assert np.all(ps.patches[0][:, :6] == 0.0)

    def test_full_size_patch_recovers_input_on_odd_dims(self):
        rng = np.random.default_rng(1)
        values = rng.standard_normal((9, 7))
        ps = extract_glimpse(values, (0.0, 0.0), [(9, 7)])
        np.testing.assert_array_equal(ps.patches[0], values)

    @pytest.mark.parametrize("corner", [(-1, -1), (-1, 1), (1, -1), (1, 1)])
    def test_corners_match_index_oracle(self, corner):
        rng = np.random.default_rng(2)
        values = rng.standard_normal((20, 16))
        sizes = [(6, 4), (12, 8)]
        ps = extract_glimpse(values, corner, sizes)
        np.testing.assert_array_equal(ps.patches, naive_glimpse(values, corner, sizes))

    def test_random_cases_match_index_oracle_bit_exactly(self):
        rng = np.random.default_rng(3)
        values = rng.standard_normal((25, 18))
        for _ in range(200):
            loc = rng.uniform(-1, 1, 2)
            st = int(rng.integers(1, 10))
            sf = int(rng.integers(1, 10))
            sizes = [(st, sf)]
            if rng.random() < 0.5:
                sizes.append((st * 2, sf * 2))
            ours = extract_glimpse(values, loc, sizes).patches
            ref = naive_glimpse(values, loc, sizes)
            assert np.array_equal(ours, ref)

    def test_multiscale_pooling_reduces_to_base_size(self):
        values = np.ones((30, 30))
        ps = extract_glimpse(values, (0.0, 0.0), [(6, 6), (12, 12), (24, 24)])
        assert ps.patches.shape == (3, 6, 6)
        np.testing.assert_allclose(ps.patches[1], 1.0)

    def test_size_validation(self):
        values = np.zeros((10, 10))
        with pytest.raises(ConfigError):
            extract_glimpse(values, (0, 0), [])
        with pytest.raises(ConfigError):
            extract_glimpse(values, (0, 0), [(4, 4), (4, 4)])
        with pytest.raises(ConfigError):
            extract_glimpse(values, (0, 0), [(4, 4), (6, 6)])  # not a multiple
        with pytest.raises(DimensionError):
            extract_glimpse(values, (0, 0), [(12, 4)])

    def test_location_clamped_before_mapping(self):
        values = np.arange(100, dtype=float).reshape(10, 10)
        a = extract_glimpse(values, (5.0, -3.0), [(3, 3)])
        b = extract_glimpse(values, (1.0, -1.0), [(3, 3)])
        np.testing.assert_array_equal(a.patches, b.patches)

    def test_center_mapping_rounds_half_up(self):
        assert loc_to_center((0.0, 0.0), 10, 10) == (5, 5)  # 4.5 rounds up
        assert loc_to_center((-1.0, 1.0), 10, 10) == (0, 9)


class TestEncoders:
    def test_flat_encoder_shapes_and_gradients(self):
        rng = np.random.default_rng(0)
        enc = FlatGlimpseEncoder([(4, 3)], rng)
        patches = Tensor(rng.standard_normal((2, 1, 4, 3)), requires_grad=True)
        out = enc(patches)
        assert out.data.shape == (2, 128)
        err = finite_diff_check(lambda: (enc(patches).pow(2.0)).sum(), enc.parameters() + [patches])
        assert err < 1e-5

    def test_rect_encoder_needs_big_enough_patch(self):
        with pytest.raises(ConfigError):
            RectConvGlimpseEncoder([(4, 4)], np.random.default_rng(0))

    def test_rect_encoder_shapes(self):
        rng = np.random.default_rng(1)
        enc = RectConvGlimpseEncoder([(12, 12), (24, 24)], rng)
        patches = Tensor(rng.standard_normal((3, 2, 12, 12)))
        assert enc(patches).data.shape == (3, 128)

    def test_patch_shape_mismatch(self):
        enc = FlatGlimpseEncoder([(4, 3)], np.random.default_rng(0))
        with pytest.raises(DimensionError):
            enc(Tensor(np.zeros((2, 1, 5, 3))))


class TestGlimpseNetwork:
    def test_zero_location_weights_ablate_location(self):
        rng = np.random.default_rng(0)
        net = GlimpseNetwork(FlatGlimpseEncoder([(3, 3)], rng), rng)
        net.loc_proj.weight.data[:] = 0.0
        net.loc_proj.bias.data[:] = 0.0
        patches = Tensor(rng.standard_normal((2, 1, 3, 3)))
        a = net(patches, np.array([[0.3, -0.7], [0.9, 0.1]]))
        b = net(patches, np.array([[-0.5, 0.5], [0.0, 0.0]]))
        np.testing.assert_array_equal(a.data, b.data)

    def test_zero_inputs_leave_fuse_bias_path(self):
        rng = np.random.default_rng(1)
        net = GlimpseNetwork(FlatGlimpseEncoder([(3, 3)], rng), rng)
        net.encoder.proj.bias.data[:] = 0.0
        net.loc_proj.bias.data[:] = 0.0
        b = rng.standard_normal(128)
        net.fuse.bias.data[:] = b
        out = net(Tensor(np.zeros((1, 1, 3, 3))), np.zeros((1, 2)))
        np.testing.assert_allclose(out.data[0], np.maximum(b, 0.0))

    def test_gradients_through_params_and_patches(self):
        rng = np.random.default_rng(2)
        net = GlimpseNetwork(FlatGlimpseEncoder([(3, 3)], rng), rng)
        patches = Tensor(rng.standard_normal((2, 1, 3, 3)), requires_grad=True)
        loc = rng.uniform(-1, 1, (2, 2))

        def loss():
            return (net(patches, loc).pow(2.0)).sum()

        err = finite_diff_check(loss, net.parameters() + [patches], rng=np.random.default_rng(7))
        assert err < 1e-5

    def test_single_patchset_entry_point(self):
        rng = np.random.default_rng(3)
        net = GlimpseNetwork(FlatGlimpseEncoder([(3, 3)], rng), rng)
        values = rng.standard_normal((10, 10))
        ps = extract_glimpse(values, (0.2, -0.4), [(3, 3)])
        out = glimpse_encode(ps, net)
        assert out.data.shape == (128,)


class TestLocationPolicy:
    def test_sample_statistics_at_paper_sigma(self):
        rng = np.random.default_rng(0)
        policy = LocationPolicy(4, rng)
        policy.proj.weight.data[:] = 0.0
        policy.proj.bias.data[:] = 0.0  # mu = (0, 0)
        h = Tensor(np.zeros((100_000, 4)))
        _, _, _ = policy.step(h, 0.17, rng)
        # draw pre-clamp samples directly for the statistics
        mu, _, _ = policy.step(h, 0.17, rng)
        samples = mu.data + 0.17 * np.random.default_rng(42).standard_normal((100_000, 2))
        assert np.all(np.abs(samples.mean(axis=0)) < 0.002)
        assert np.all(np.abs(samples.std(axis=0) - 0.17) < 0.002)

    def test_logprob_peak_closed_form(self):
        rng = np.random.default_rng(1)
        policy = LocationPolicy(4, rng)
        h = Tensor(rng.standard_normal((1, 4)))
        mu, _, _ = policy.step(h, 0.17, rng)
        # force the sample to equal mu: density peak of the bivariate Gaussian
        _, _, logprob = policy.step(h, 0.17, rng, forced_sample=mu.data)
        expected = 2.0 * (-math.log(0.17 * math.sqrt(2.0 * math.pi)))
        assert abs(logprob.data[0] - expected) < 1e-12
        assert abs(expected - (-math.log(2.0 * math.pi * 0.17**2))) < 1e-12

    def test_samples_clamped_to_unit_box(self):
        rng = np.random.default_rng(2)
        policy = LocationPolicy(4, rng)
        policy.proj.bias.data[:] = 10.0  # tanh -> mu near (1, 1)
        h = Tensor(np.zeros((500, 4)))
        _, locs, _ = policy.step(h, 0.3, rng)
        assert np.all(locs <= 1.0) and np.all(locs >= -1.0)
        assert np.any(locs == 1.0)  # some samples actually hit the clamp

    def test_sigma_must_be_positive(self):
        policy = LocationPolicy(4, np.random.default_rng(0))
        with pytest.raises(ConfigError):
            policy.step(Tensor(np.zeros((1, 4))), 0.0, np.random.default_rng(0))

    def test_sigma_to_zero_collapses_to_mu(self):
        rng = np.random.default_rng(3)
        policy = LocationPolicy(6, rng)
        h = Tensor(rng.standard_normal((1000, 6)))
        mu, locs, _ = policy.step(h, 1e-6, rng)
        gap = np.abs(locs - np.clip(mu.data, -1.0, 1.0)).max()
        assert gap < 1e-4

    def test_logprob_gradient_is_score_function(self):
        rng = np.random.default_rng(4)
        policy = LocationPolicy(4, rng)
        h = Tensor(rng.standard_normal((1, 4)))
        sigma = 0.25
        mu, _, _ = policy.step(h, sigma, rng)
        z = mu.data + np.array([[0.1, -0.2]])
        policy.zero_grad()
        _, _, logprob = policy.step(h, sigma, rng, forced_sample=z)
        logprob.sum().backward()
        # d logprob / d mu = (z - mu) / sigma^2, through the tanh and linear
        err = finite_diff_check(
            lambda: policy.step(h, sigma, None, forced_sample=z)[2].sum(),
            policy.parameters(),
        )
        assert err < 1e-6


class TestEpisodes:
    def _model(self, variant="RAM16-GRU", glimpses=4, seed=0, **kw):
        rng = np.random.default_rng(seed)
        kw.setdefault("hidden_size", 16)
        kw.setdefault("patch_sizes", [(4, 4)])
        return RecurrentGlimpseClassifier(variant, classes=3, rng=rng, glimpses=glimpses, **kw)

    def test_trajectory_length_matches_glimpse_count(self):
        model = self._model(glimpses=16)
        values = np.random.default_rng(1).standard_normal((20, 12))
        traj = run_episode(model, values, np.random.default_rng(2))
        assert traj.steps == 16
        assert len(traj.logprobs) == 16
        assert traj.locations.shape == (16, 2)

    def test_single_glimpse_episode(self):
        model = self._model(glimpses=1)
        values = np.random.default_rng(1).standard_normal((20, 12))
        traj = run_episode(model, values, np.random.default_rng(2), initial_loc=(0.0, 0.0))
        assert traj.steps == 1
        np.testing.assert_array_equal(traj.locations[0], [0.0, 0.0])
        assert traj.final_pred.data.shape == (3,)

    def test_fixed_seed_reproduces_trajectory_bitwise(self):
        model = self._model()
        values = np.random.default_rng(1).standard_normal((20, 12))
        a = run_episode(model, values, np.random.default_rng(7))
        b = run_episode(model, values, np.random.default_rng(7))
        np.testing.assert_array_equal(a.locations, b.locations)
        np.testing.assert_array_equal(a.mus, b.mus)
        np.testing.assert_array_equal(a.final_pred.data, b.final_pred.data)

    def test_locations_stay_in_unit_box_and_preds_in_unit_interval(self):
        model = self._model(glimpses=8)
        rng = np.random.default_rng(3)
        values = rng.standard_normal((20, 12)) * 5.0
        traj = run_episode(model, values, rng)
        assert np.all(np.abs(traj.locations) <= 1.0)
        for p in traj.preds:
            assert np.all((p.data >= 0.0) & (p.data <= 1.0))
        # GRU hidden state stays in (-1, 1) starting from zeros
        assert np.all(np.abs(traj.hiddens) < 1.0)

    def test_batch_matches_single_with_same_draws(self):
        model = self._model(glimpses=3)
        rng = np.random.default_rng(4)
        values = rng.standard_normal((2, 20, 12))
        init = np.array([[0.1, -0.2], [0.5, 0.4]])
        forced = rng.uniform(-1, 1, (3, 2, 2))
        batch = model.episode_batch(values, None, initial_locs=init, forced_samples=forced)
        for i in range(2):
            single = run_episode(
                model, values[i], None, initial_loc=init[i], forced_samples=forced[:, i, :]
            )
            np.testing.assert_allclose(single.final_pred.data, batch.final_pred.data[i], atol=1e-12)
            np.testing.assert_allclose(single.locations, batch.locations[:, i, :], atol=1e-15)

    def test_variant_presets(self):
        rng = np.random.default_rng(0)
        sr = RecurrentGlimpseClassifier("SR16", classes=3, rng=rng)
        assert sr.sizes == ((12, 12), (24, 24))
        assert sr.glimpses == 16
        ram = RecurrentGlimpseClassifier("RAM16-RNN", classes=3, rng=np.random.default_rng(1))
        assert ram.sizes == ((12, 12),)
        with pytest.raises(DimensionError):
            RecurrentGlimpseClassifier("SR32", classes=3, rng=rng)

    def test_end_to_end_classification_gradients_frozen_policy(self):
        model = self._model(glimpses=2, seed=5)
        rng = np.random.default_rng(6)
        values = rng.standard_normal((1, 12, 10))
        forced = rng.uniform(-0.5, 0.5, (2, 1, 2))
        # a (0, 0) start would park the zero-initialized location bias
        # exactly on its ReLU kink, where central differences are invalid
        init = np.array([[0.3, -0.4]])

        def loss():
            ep = model.episode_batch(values, None, initial_locs=init, forced_samples=forced)
            return (ep.final_pred.pow(2.0)).sum()

        err = finite_diff_check(loss, model.parameters(), rng=np.random.default_rng(8))
        assert err < 1e-4
