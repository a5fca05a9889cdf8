"""Deterministic training loop: batching, validation, early stopping.

A run is fully reproducible from its config: parameter init, batch
shuffling, and episode sampling all draw from named child streams of the
config seed. Validation (and later evaluation) sees the parameters rounded
through float32, the checkpoint precision, so the recorded best F1 is
exactly what a reload reproduces.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .attention_models import ATTENTION_VARIANTS, InstanceAttentionClassifier
from .checkpoint import Checkpoint, checkpoint_from_model, load_into_model
from .dataio import default_class_names
from .errors import ConfigError, TrainingError
from .glimpse_models import GLIMPSE_VARIANTS, RecurrentGlimpseClassifier
from .losses import batch_partial_loss, class_weights, episode_rewards, hybrid_loss_batch
from .metrics import ClassCounts, accumulate, macro_f1, metrics_report
from .nn import Adam

ALL_VARIANTS = ATTENTION_VARIANTS + GLIMPSE_VARIANTS

# Fixed tag so every validation/evaluation pass draws the same stream.
_EVAL_STREAM = 0xEA11


@dataclass
class TrainConfig:
    variant: str = "AttTF"
    batch_size: int = 32
    lr: float = 5e-4
    weight_decay: float = 1e-4
    max_epochs: int = 250
    patience: int = 10
    val_fraction: float = 0.15
    loss: str | None = None  # "bce" | "focal"; None picks the variant default
    gamma: float = 2.0
    lambda_baseline: float = 1.0
    threshold: float = 0.5
    glimpses: int = 16
    sigma: float = 0.17
    hidden_size: int = 256
    patch_sizes: list | None = None  # None uses the variant preset
    t_tiles: int = 60
    f_tiles: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ALL_VARIANTS:
            raise ConfigError(
                f"unknown variant '{self.variant}'; valid tags: {', '.join(ALL_VARIANTS)}"
            )
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.loss not in (None, "bce", "focal"):
            raise ConfigError(f"loss must be 'bce' or 'focal', got '{self.loss}'")

    @property
    def loss_kind(self) -> str:
        if self.loss is not None:
            return self.loss
        return "focal" if self.variant == "SR16-FL" else "bce"

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["patch_sizes"] is not None:
            d["patch_sizes"] = [list(s) if not isinstance(s, int) else s for s in d["patch_sizes"]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)


@dataclass
class RunRecord:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_f1: float = float("-inf")

    def record(self, epoch: int, train_loss: float, val_f1: float) -> bool:
        """Append one epoch; returns True when this epoch is a new best."""
        improved = val_f1 > self.best_f1
        if improved:
            self.best_f1 = val_f1
            self.best_epoch = epoch
        self.epochs.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_macro_f1": val_f1,
                "best_so_far": self.best_f1,
            }
        )
        return improved

    def to_jsonl(self) -> str:
        return "".join(json.dumps(row, sort_keys=True) + "\n" for row in self.epochs)

    def save_jsonl(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def split_train_val(examples: list, fraction: float = 0.15, seed: int = 0):
    """Deterministic disjoint split; val gets round(fraction * N) examples."""
    n = len(examples)
    if n < 2:
        raise ConfigError(f"need at least 2 examples to split, got {n}")
    n_val = int(round(fraction * n))
    if n_val == 0 or n_val == n:
        raise ConfigError(
            f"fraction {fraction} of {n} examples leaves an empty side"
        )
    perm = np.random.default_rng(seed).permutation(n)
    val_idx = set(perm[:n_val].tolist())
    train = [examples[i] for i in range(n) if i not in val_idx]
    val = [examples[i] for i in range(n) if i in val_idx]
    return train, val


def build_model(config: TrainConfig, classes: int, frames: int, bins: int, rng):
    """Instantiate the variant named by the config for the given geometry."""
    if config.variant in ATTENTION_VARIANTS:
        if config.t_tiles > frames or config.f_tiles > bins:
            raise ConfigError(
                f"{config.t_tiles}x{config.f_tiles} tile grid does not fit "
                f"{frames}x{bins} spectrograms"
            )
        tile_cells = (frames // config.t_tiles) * (bins // config.f_tiles)
        return InstanceAttentionClassifier(
            variant=config.variant,
            classes=classes,
            t_tiles=config.t_tiles,
            f_tiles=config.f_tiles,
            tile_cells=tile_cells,
            rng=rng,
        )
    return RecurrentGlimpseClassifier(
        variant=config.variant,
        classes=classes,
        rng=rng,
        glimpses=config.glimpses,
        hidden_size=config.hidden_size,
        sigma=config.sigma,
        patch_sizes=config.patch_sizes,
    )


def _batch_arrays(examples: list):
    values = np.stack([ex.spectrogram.values for ex in examples])
    labels = np.stack([ex.labels for ex in examples])
    masks = np.stack([ex.known_mask for ex in examples])
    return values, labels, masks


@contextmanager
def float32_view(model):
    """Temporarily round parameters through float32 (checkpoint precision)."""
    params = model.parameters()
    saved = [p.data for p in params]
    try:
        for p in params:
            p.data = p.data.astype(np.float32).astype(np.float64)
        yield
    finally:
        for p, d in zip(params, saved):
            p.data = d


def _eval_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, _EVAL_STREAM]))


def predict_dataset(model, examples: list, batch_size: int, rng) -> np.ndarray:
    preds = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        values, _, _ = _batch_arrays(chunk)
        preds.append(model.predict(values, rng))
    return np.concatenate(preds, axis=0)


def _validation_f1(model, val_examples, config: TrainConfig, classes: int) -> float:
    counts = ClassCounts.zeros(classes)
    with float32_view(model):
        preds = predict_dataset(model, val_examples, config.batch_size, _eval_rng(config.seed))
    _, labels, masks = _batch_arrays(val_examples)
    accumulate(counts, preds, labels, masks, config.threshold)
    return macro_f1(counts)


def train(config: TrainConfig, examples: list, class_names=None, val_fn=None):
    """Fit one model; returns (RunRecord, best Checkpoint).

    `examples` is the full training pool; a validation slice of
    config.val_fraction is carved out internally. `val_fn(model, val, epoch)
    -> float` replaces the validation metric when given (testing hook).
    """
    if not examples:
        raise ConfigError("training needs a non-empty dataset")
    classes = examples[0].classes
    frames = examples[0].spectrogram.frames
    bins = examples[0].spectrogram.bins
    if class_names is None:
        class_names = default_class_names(classes)

    train_ex, val_ex = split_train_val(examples, config.val_fraction, config.seed)
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    param_rng = np.random.default_rng(seeds[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    episode_rng = np.random.default_rng(seeds[2])

    model = build_model(config, classes, frames, bins, param_rng)
    optimizer = Adam(
        model.parameters(), lr=config.lr, weight_decay=config.weight_decay
    )
    loss_kind = config.loss_kind
    weights = None
    if loss_kind == "focal":
        _, tr_labels, tr_masks = _batch_arrays(train_ex)
        weights = class_weights(tr_labels, tr_masks)

    is_glimpse = config.variant in GLIMPSE_VARIANTS
    record = RunRecord()
    best_ckpt: Checkpoint | None = None
    meta = {
        "config": config.to_dict(),
        "classes": classes,
        "frames": frames,
        "bins": bins,
        "class_names": list(class_names),
        "train_examples": len(train_ex),
        "val_examples": len(val_ex),
    }

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_ex))
        loss_sum = 0.0
        seen = 0
        for bstart in range(0, len(order), config.batch_size):
            batch = [train_ex[i] for i in order[bstart : bstart + config.batch_size]]
            values, labels, masks = _batch_arrays(batch)
            if is_glimpse:
                episode = model.episode_batch(values, episode_rng)
                if epoch == 1 and bstart == 0:
                    # warm-start the per-step baselines at the batch-mean
                    # cumulative reward; Adam at this lr would need thousands
                    # of steps to walk them there from zero
                    _, cumulative = episode_rewards(episode, labels, masks, config.threshold)
                    model.baselines.data[:] = cumulative.mean(axis=0)
                loss, _ = hybrid_loss_batch(
                    episode,
                    labels,
                    masks,
                    model.baselines,
                    lambda_b=config.lambda_baseline,
                    kind=loss_kind,
                    gamma=config.gamma,
                    weights=weights,
                    threshold=config.threshold,
                )
            else:
                out = model.forward(values)
                loss = batch_partial_loss(
                    out["final"], labels, masks, loss_kind, config.gamma, weights
                )
            if not np.isfinite(loss.data):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {bstart // config.batch_size}"
                )
            loss.backward()
            optimizer.step()
            loss_sum += loss.item() * len(batch)
            seen += len(batch)

        if val_fn is not None:
            val_f1 = float(val_fn(model, val_ex, epoch))
        else:
            val_f1 = _validation_f1(model, val_ex, config, classes)
        improved = record.record(epoch, loss_sum / seen, val_f1)
        if improved:
            meta["best_epoch"] = epoch
            meta["best_val_f1"] = val_f1
            best_ckpt = checkpoint_from_model(model, config.variant, meta)
        if epoch - record.best_epoch >= config.patience:
            break

    assert best_ckpt is not None
    return record, best_ckpt


def model_from_checkpoint(ckpt: Checkpoint):
    """Rebuild the architecture from checkpoint metadata and load weights."""
    try:
        config = TrainConfig.from_dict(ckpt.meta["config"])
        classes = int(ckpt.meta["classes"])
        frames = int(ckpt.meta["frames"])
        bins = int(ckpt.meta["bins"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"checkpoint metadata incomplete: {exc}") from exc
    if config.variant != ckpt.variant:
        raise ConfigError(
            f"checkpoint variant '{ckpt.variant}' disagrees with config '{config.variant}'"
        )
    model = build_model(config, classes, frames, bins, np.random.default_rng(0))
    load_into_model(ckpt, model)
    return model, config


def evaluate(ckpt: Checkpoint, examples: list, threshold: float | None = None):
    """Score a checkpoint on a dataset; returns the metrics report dict."""
    if not examples:
        raise ConfigError("evaluation needs a non-empty dataset")
    model, config = model_from_checkpoint(ckpt)
    thr = config.threshold if threshold is None else threshold
    classes = int(ckpt.meta["classes"])
    counts = ClassCounts.zeros(classes)
    preds = predict_dataset(model, examples, config.batch_size, _eval_rng(config.seed))
    _, labels, masks = _batch_arrays(examples)
    accumulate(counts, preds, labels, masks, thr)
    names = ckpt.meta.get("class_names") or default_class_names(classes)
    return metrics_report(counts, names)
