"""Synthetic multi-label dataset generator.

Each class owns a frequency band; a positive example carries a "note": a
smooth bump across that band held for a contiguous random time span, on top
of a Gaussian noise floor. Labels are independently hidden to exercise the
partial-label paths. Band positions make frequency location genuinely
informative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .features import LabeledExample, Spectrogram


@dataclass
class SynthConfig:
    classes: int = 20
    examples: int = 100
    frames: int = 998
    bins: int = 64
    center_range: tuple = (0.1, 0.9)  # fraction of the bin axis
    bandwidth_range: tuple = (3.0, 6.0)  # bins
    duty_range: tuple = (0.1, 0.3)  # fraction of the frame axis
    known_prob: float = 1.0
    positive_rate: object = 0.3  # scalar or per-class sequence
    noise_std: float = 0.1
    amplitude: float = 1.0
    # broadband distractor bursts per example (Poisson mean); they carry no
    # label and force models to reject interference locally
    clutter_rate: float = 0.0
    clutter_bandwidth_range: tuple = (0.4, 0.8)  # fraction of the bin axis
    clutter_duty_range: tuple | None = None  # None reuses duty_range
    seed: int = 0

    rates: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if not 0.0 <= self.known_prob <= 1.0:
            raise ConfigError(f"known_prob must be in [0, 1], got {self.known_prob}")
        rates = np.broadcast_to(np.asarray(self.positive_rate, dtype=np.float64), (self.classes,))
        if np.any(rates < 0.0) or np.any(rates > 1.0):
            raise ConfigError("positive rates must be in [0, 1]")
        self.rates = np.array(rates)
        if self.bandwidth_range[1] > self.bins:
            raise ConfigError(
                f"bandwidth up to {self.bandwidth_range[1]} bins does not fit in {self.bins} bins"
            )
        if not (0 < self.duty_range[0] <= self.duty_range[1] <= 1.0):
            raise ConfigError(f"bad duty cycle range {self.duty_range}")


def class_band_profiles(cfg: SynthConfig) -> np.ndarray:
    """Per-class spectral bump, (classes, bins). Centers are evenly spaced."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5BAD]))
    lo, hi = cfg.center_range
    centers = (lo + (np.arange(cfg.classes) + 0.5) * (hi - lo) / cfg.classes) * (cfg.bins - 1)
    widths = rng.uniform(cfg.bandwidth_range[0], cfg.bandwidth_range[1], size=cfg.classes)
    f = np.arange(cfg.bins, dtype=np.float64)
    profiles = np.exp(-0.5 * ((f[None, :] - centers[:, None]) / (widths[:, None] / 2.0)) ** 2)
    return cfg.amplitude * profiles


def synth_generate(cfg: SynthConfig) -> list[LabeledExample]:
    """Deterministic given cfg.seed; examples use independent child streams."""
    profiles = class_band_profiles(cfg)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.examples)
    out = []
    for i in range(cfg.examples):
        rng = np.random.default_rng(children[i])
        labels = (rng.random(cfg.classes) < cfg.rates).astype(np.float64)
        values = cfg.noise_std * rng.standard_normal((cfg.frames, cfg.bins))
        for c in np.flatnonzero(labels):
            duty = rng.uniform(cfg.duty_range[0], cfg.duty_range[1])
            span = max(1, int(round(duty * cfg.frames)))
            span = min(span, cfg.frames)
            start = int(rng.integers(0, cfg.frames - span + 1))
            gain = rng.uniform(0.7, 1.3)
            values[start : start + span, :] += gain * profiles[c]
        if cfg.clutter_rate > 0.0:
            f = np.arange(cfg.bins, dtype=np.float64)
            duty_lo, duty_hi = cfg.clutter_duty_range or cfg.duty_range
            for _ in range(rng.poisson(cfg.clutter_rate)):
                duty = rng.uniform(duty_lo, duty_hi)
                span = max(1, min(int(round(duty * cfg.frames)), cfg.frames))
                start = int(rng.integers(0, cfg.frames - span + 1))
                center = rng.uniform(0.0, cfg.bins - 1.0)
                width = rng.uniform(*cfg.clutter_bandwidth_range) * cfg.bins
                burst = np.exp(-0.5 * ((f - center) / (width / 2.0)) ** 2)
                values[start : start + span, :] += rng.uniform(0.7, 1.3) * cfg.amplitude * burst
        mask = rng.random(cfg.classes) < cfg.known_prob
        if not mask.any():
            mask[int(rng.integers(cfg.classes))] = True
        out.append(
            LabeledExample(
                spectrogram=Spectrogram(values),
                labels=labels,
                known_mask=mask,
                example_id=f"ex{i:05d}",
            )
        )
    return out
