"""Recurrent glimpse classifiers with a stochastic location policy.

Per step the model extracts a small multi-scale patch set around a
normalized location, encodes it together with the location, updates a
recurrent core, emits a preliminary per-class prediction, and samples the
next location from a Gaussian centered on a learned mean. Locations are
data to the classification path; the policy trains through the
score-function (log-probability) terms collected in the trajectory.

Variants:

  SR16      - 16 glimpses, two patch scales, rectangular-kernel encoder, GRU core
  SR16-FL   - SR16 trained with the focal classification loss
  RAM16-RNN - 16 glimpses, single 12x12 patch, flat encoder, tanh RNN core
  RAM16-GRU - RAM16-RNN with the core swapped for a GRU
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .nn import Conv2dRect, GRUCell, Linear, Module, Parameter, RNNCell, Tensor, concat

GLIMPSE_DIM = 128
GLIMPSE_VARIANTS = ("SR16", "SR16-FL", "RAM16-RNN", "RAM16-GRU")

# (encoder, core, patch sizes) per variant; SR16 adds a coarse second scale.
VARIANT_PRESETS = {
    "SR16": ("rect-conv", "gru", ((12, 12), (24, 24))),
    "SR16-FL": ("rect-conv", "gru", ((12, 12), (24, 24))),
    "RAM16-RNN": ("flat-fc", "rnn", ((12, 12),)),
    "RAM16-GRU": ("flat-fc", "gru", ((12, 12),)),
}

# Elongated kernel bank for the rect-conv encoder: temporal then timbral.
RECT_KERNEL_SHAPES = ((1, 7), (1, 3), (7, 1), (3, 1))
RECT_MAPS_PER_SHAPE = 8


@dataclass
class GlimpsePatchSet:
    """Patches extracted around one location, all resampled to the base size."""

    patches: np.ndarray  # (K, s1_t, s1_f) after pooling
    sizes: tuple  # nominal (time, freq) extents, strictly increasing
    location: np.ndarray  # the normalized location that produced the set
    center: tuple  # integer (frame, bin) center cell


@dataclass
class Trajectory:
    """Full record of one episode."""

    locations: np.ndarray  # (J, 2), post-clamp
    mus: np.ndarray  # (J, 2), policy means produced at each step
    hiddens: np.ndarray  # (J, H)
    preds: list  # J Tensors of shape (C,)
    logprobs: list  # J scalar Tensors (log-density of each sampled decision)
    rewards: np.ndarray | None = None
    cumulative: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return len(self.preds)

    @property
    def final_pred(self) -> Tensor:
        return self.preds[-1]


@dataclass
class BatchEpisode:
    """Batched episode: one trajectory per example, run in lockstep."""

    locations: np.ndarray  # (J, B, 2)
    mus: np.ndarray  # (J, B, 2)
    preds: list  # J Tensors of shape (B, C)
    logprobs: list  # J Tensors of shape (B,)

    @property
    def steps(self) -> int:
        return len(self.preds)

    @property
    def final_pred(self) -> Tensor:
        return self.preds[-1]


def _normalize_sizes(sizes) -> tuple:
    if sizes is None or len(sizes) == 0:
        raise ConfigError("glimpse needs at least one patch size")
    out = []
    for s in sizes:
        if isinstance(s, int):
            s = (s, s)
        st, sf = int(s[0]), int(s[1])
        if st < 1 or sf < 1:
            raise ConfigError(f"patch sizes must be positive, got {(st, sf)}")
        out.append((st, sf))
    base = out[0]
    for a, b in zip(out, out[1:]):
        if not (b[0] >= a[0] and b[1] >= a[1] and b != a):
            raise ConfigError(f"patch sizes must strictly increase, got {out}")
        if b[0] % base[0] or b[1] % base[1]:
            raise ConfigError(f"patch size {b} is not a multiple of base size {base}")
    return tuple(out)


def loc_to_center(loc, frames: int, bins: int) -> tuple:
    """Map a location in [-1,1]^2 to the nearest cell (half-up rounding)."""
    t = int(math.floor((loc[0] + 1.0) / 2.0 * (frames - 1) + 0.5))
    f = int(math.floor((loc[1] + 1.0) / 2.0 * (bins - 1) + 0.5))
    return t, f


def _window(values: np.ndarray, center: tuple, size: tuple) -> np.ndarray:
    """Zero-padded size window of `values` centered (size//2 convention)."""
    frames, bins = values.shape
    st, sf = size
    out = np.zeros((st, sf))
    t0 = center[0] - st // 2
    f0 = center[1] - sf // 2
    src_t0, src_t1 = max(t0, 0), min(t0 + st, frames)
    src_f0, src_f1 = max(f0, 0), min(f0 + sf, bins)
    if src_t0 < src_t1 and src_f0 < src_f1:
        out[src_t0 - t0 : src_t1 - t0, src_f0 - f0 : src_f1 - f0] = values[
            src_t0:src_t1, src_f0:src_f1
        ]
    return out


def extract_glimpse(values: np.ndarray, loc, sizes) -> GlimpsePatchSet:
    """Extract the patch pyramid at `loc`, pooling coarse scales to the base size.

    Out-of-bounds cells are zero. Deterministic pure data movement; the
    result enters the network as a leaf tensor.
    """
    sizes = _normalize_sizes(sizes)
    frames, bins = values.shape
    base = sizes[0]
    if base[0] > frames or base[1] > bins:
        raise DimensionError(
            f"base patch {base} larger than spectrogram {(frames, bins)}"
        )
    loc = np.clip(np.asarray(loc, dtype=np.float64), -1.0, 1.0)
    center = loc_to_center(loc, frames, bins)
    patches = np.empty((len(sizes), base[0], base[1]))
    for k, size in enumerate(sizes):
        win = _window(values, center, size)
        if size != base:
            # accumulate block cells in fixed row-major order so the result
            # is reproducible down to the last bit
            ft, ff = size[0] // base[0], size[1] // base[1]
            acc = np.zeros((base[0], base[1]))
            for p in range(ft):
                for q in range(ff):
                    acc += win[p::ft, q::ff]
            win = acc / (ft * ff)
        patches[k] = win
    return GlimpsePatchSet(patches=patches, sizes=sizes, location=loc, center=center)


class FlatGlimpseEncoder(Module):
    """Flatten all patches into one vector and project to the glimpse dim."""

    def __init__(self, sizes, rng: np.random.Generator, name: str = "sensor"):
        self.sizes = _normalize_sizes(sizes)
        base = self.sizes[0]
        self.in_dim = len(self.sizes) * base[0] * base[1]
        self.proj = Linear(self.in_dim, GLIMPSE_DIM, rng, f"{name}.proj")

    def forward(self, patches: Tensor) -> Tensor:
        """patches (B, K, s1_t, s1_f) -> (B, GLIMPSE_DIM)."""
        b = patches.data.shape[0]
        if int(np.prod(patches.data.shape[1:])) != self.in_dim:
            raise DimensionError(
                f"patch set shape {patches.data.shape[1:]} does not match encoder "
                f"input dim {self.in_dim}"
            )
        return self.proj(patches.reshape(b, self.in_dim)).relu()


class RectConvGlimpseEncoder(Module):
    """Elongated-kernel banks, global max-pool per map, shared projection."""

    def __init__(self, sizes, rng: np.random.Generator, name: str = "sensor"):
        self.sizes = _normalize_sizes(sizes)
        st, sf = self.sizes[0]
        for kh, kw in RECT_KERNEL_SHAPES:
            if kh > st or kw > sf:
                raise ConfigError(
                    f"kernel {kh}x{kw} does not fit in base patch {st}x{sf}"
                )
        self.banks = [
            Conv2dRect(RECT_MAPS_PER_SHAPE, kh, kw, rng, f"{name}.k{kh}x{kw}")
            for kh, kw in RECT_KERNEL_SHAPES
        ]
        maps = RECT_MAPS_PER_SHAPE * len(RECT_KERNEL_SHAPES)
        self.in_dim = len(self.sizes) * st * sf
        self.proj = Linear(len(self.sizes) * maps, GLIMPSE_DIM, rng, f"{name}.proj")
        self._maps = maps

    def forward(self, patches: Tensor) -> Tensor:
        b, k, st, sf = patches.data.shape
        x = patches.reshape(b * k, 1, st, sf)
        pooled = [bank(x).max(axis=(2, 3)) for bank in self.banks]
        feats = concat(pooled, axis=1)  # (B*K, maps)
        return self.proj(feats.reshape(b, k * self._maps)).relu()


class GlimpseNetwork(Module):
    """Fuse patch features with a location representation."""

    def __init__(self, encoder: Module, rng: np.random.Generator, name: str = "glimpse"):
        self.encoder = encoder
        self.loc_proj = Linear(2, GLIMPSE_DIM, rng, f"{name}.loc")
        self.fuse = Linear(GLIMPSE_DIM, GLIMPSE_DIM, rng, f"{name}.fuse")

    def forward(self, patches: Tensor, loc_values: np.ndarray) -> Tensor:
        q = self.encoder(patches)
        l_feat = self.loc_proj(Tensor(loc_values)).relu()
        return self.fuse(q + l_feat).relu()


def glimpse_encode(patchset: GlimpsePatchSet, net: GlimpseNetwork) -> Tensor:
    """Single-patch-set entry point; returns the fused (GLIMPSE_DIM,) feature."""
    patches = Tensor(patchset.patches[None])
    out = net(patches, patchset.location[None])
    return out.reshape(GLIMPSE_DIM)


def gaussian_logprob(sample: np.ndarray, mu: Tensor, sigma: float) -> Tensor:
    """Log-density of an isotropic bivariate Gaussian, per batch row.

    `sample` is constant data; the gradient flows into `mu` only (the
    score-function path)."""
    diff = Tensor(sample) - mu
    quad = diff.pow(2.0).sum(axis=-1) * (-0.5 / (sigma * sigma))
    return quad + (-math.log(2.0 * math.pi) - 2.0 * math.log(sigma))


class LocationPolicy(Module):
    """tanh-bounded Gaussian policy over the next glimpse location."""

    def __init__(self, hidden_size: int, rng: np.random.Generator, name: str = "loc"):
        self.proj = Linear(hidden_size, 2, rng, f"{name}.proj")

    def step(
        self,
        h: Tensor,
        sigma: float,
        rng: np.random.Generator | None,
        forced_sample: np.ndarray | None = None,
    ):
        """Returns (mu Tensor (B,2), next loc ndarray (B,2), logprob Tensor (B,)).

        The sample is taken before clamping; the log-probability is evaluated
        at the pre-clamp sample and clamping is left to the environment.
        """
        if sigma <= 0.0:
            raise ConfigError(f"location sigma must be positive, got {sigma}")
        mu = self.proj(h).tanh()
        if forced_sample is not None:
            z = np.asarray(forced_sample, dtype=np.float64)
        else:
            z = mu.data + sigma * rng.standard_normal(mu.data.shape)
        next_loc = np.clip(z, -1.0, 1.0)
        logprob = gaussian_logprob(z, mu, sigma)
        return mu, next_loc, logprob


class RecurrentGlimpseClassifier(Module):
    """Full episodic model: glimpse network, recurrent core, policy, classifier."""

    def __init__(
        self,
        variant: str,
        classes: int,
        rng: np.random.Generator,
        glimpses: int = 16,
        hidden_size: int = 256,
        sigma: float = 0.17,
        patch_sizes=None,
    ):
        if variant not in GLIMPSE_VARIANTS:
            raise DimensionError(
                f"unknown glimpse variant '{variant}', expected one of {GLIMPSE_VARIANTS}"
            )
        if glimpses < 1:
            raise ConfigError(f"need at least one glimpse, got {glimpses}")
        encoder_kind, core_kind, preset_sizes = VARIANT_PRESETS[variant]
        sizes = _normalize_sizes(patch_sizes if patch_sizes is not None else preset_sizes)
        self.variant = variant
        self.classes = classes
        self.glimpses = glimpses
        self.hidden_size = hidden_size
        self.sigma = sigma
        self.sizes = sizes
        if encoder_kind == "rect-conv":
            encoder = RectConvGlimpseEncoder(sizes, rng)
        else:
            encoder = FlatGlimpseEncoder(sizes, rng)
        self.net = GlimpseNetwork(encoder, rng)
        if core_kind == "gru":
            self.core = GRUCell(GLIMPSE_DIM, hidden_size, rng, "core")
        else:
            self.core = RNNCell(GLIMPSE_DIM, hidden_size, rng, "core")
        self.policy = LocationPolicy(hidden_size, rng)
        self.pred = Linear(hidden_size, classes, rng, "pred")
        # One learned scalar reward baseline per step.
        self.baselines = Parameter(np.zeros(glimpses), "baselines")

    # -- episodes -----------------------------------------------------------

    def _extract_batch(self, batch_values: np.ndarray, locs: np.ndarray) -> Tensor:
        base = self.sizes[0]
        b = batch_values.shape[0]
        patches = np.empty((b, len(self.sizes), base[0], base[1]))
        for i in range(b):
            patches[i] = extract_glimpse(batch_values[i], locs[i], self.sizes).patches
        return Tensor(patches)

    def episode_batch(
        self,
        batch_values: np.ndarray,
        rng: np.random.Generator | None,
        initial_locs: np.ndarray | None = None,
        forced_samples: np.ndarray | None = None,
    ) -> BatchEpisode:
        """Run all examples in lockstep for the configured glimpse count.

        `forced_samples` (J, B, 2) freezes the policy samples (pre-clamp) for
        deterministic gradient checks."""
        b = batch_values.shape[0]
        j_total = self.glimpses
        if initial_locs is None:
            initial_locs = rng.uniform(-1.0, 1.0, size=(b, 2))
        locs = np.clip(np.asarray(initial_locs, dtype=np.float64), -1.0, 1.0)
        h = Tensor(np.zeros((b, self.hidden_size)))
        all_locs = np.empty((j_total, b, 2))
        all_mus = np.empty((j_total, b, 2))
        preds: list[Tensor] = []
        logprobs: list[Tensor] = []
        for j in range(j_total):
            all_locs[j] = locs
            patches = self._extract_batch(batch_values, locs)
            rho = self.net(patches, locs)
            h = self.core(h, rho)
            preds.append(self.pred(h).sigmoid())
            forced = forced_samples[j] if forced_samples is not None else None
            mu, locs, lp = self.policy.step(h, self.sigma, rng, forced)
            all_mus[j] = mu.data
            logprobs.append(lp)
        return BatchEpisode(locations=all_locs, mus=all_mus, preds=preds, logprobs=logprobs)

    def predict(self, batch_values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.episode_batch(batch_values, rng).final_pred.data


def run_episode(
    model: RecurrentGlimpseClassifier,
    values: np.ndarray,
    rng: np.random.Generator | None,
    initial_loc=None,
    forced_samples: np.ndarray | None = None,
) -> Trajectory:
    """Run one example; the hidden states and per-step records are kept."""
    frames, bins = values.shape
    b = 1
    if initial_loc is None:
        initial_loc = rng.uniform(-1.0, 1.0, size=2)
    locs = np.clip(np.asarray(initial_loc, dtype=np.float64), -1.0, 1.0)[None, :]
    h = Tensor(np.zeros((b, model.hidden_size)))
    j_total = model.glimpses
    locations = np.empty((j_total, 2))
    mus = np.empty((j_total, 2))
    hiddens = np.empty((j_total, model.hidden_size))
    preds: list[Tensor] = []
    logprobs: list[Tensor] = []
    for j in range(j_total):
        locations[j] = locs[0]
        patches = model._extract_batch(values[None], locs)
        rho = model.net(patches, locs)
        h = model.core(h, rho)
        hiddens[j] = h.data[0]
        preds.append(model.pred(h).sigmoid().reshape(model.classes))
        forced = forced_samples[j][None] if forced_samples is not None else None
        mu, locs, lp = model.policy.step(h, model.sigma, rng, forced)
        mus[j] = mu.data[0]
        logprobs.append(lp.reshape(()))
    return Trajectory(
        locations=locations,
        mus=mus,
        hiddens=hiddens,
        preds=preds,
        logprobs=logprobs,
    )
