"""Partial-label classification losses, rewards, and the hybrid objective.

Losses average only over the known classes of each example. The hybrid
objective adds a score-function policy term weighted by per-step cumulative
reward minus a learned per-step baseline, plus the squared-error fit of
those baselines.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, EmptyMaskError
from .nn import Parameter, Tensor, as_tensor, concat

PRED_EPS = 1e-7


def class_weights(labels: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Normalized inverse frequency of known positives, mean 1 across classes.

    `labels` and `masks` are (N, C). Classes with no known positives count
    as one positive to stay finite.
    """
    labels = np.asarray(labels, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    pos = ((labels >= 0.5) & masks).sum(axis=0).astype(np.float64)
    inv = 1.0 / np.maximum(pos, 1.0)
    return inv * (inv.size / inv.sum())


def _check_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMaskError("example has no known labels; skip it upstream")
    return mask


def partial_bce(pred, label, mask) -> Tensor:
    """Binary cross-entropy averaged over the known classes only."""
    mask = _check_mask(mask)
    label = np.asarray(label, dtype=np.float64)
    p = as_tensor(pred).clip(PRED_EPS, 1.0 - PRED_EPS)
    term = -(label * p.log() + (1.0 - label) * (1.0 - p).log())
    return (term * mask.astype(np.float64)).sum() / float(mask.sum())


def partial_focal(pred, label, mask, gamma: float = 2.0, weights=None) -> Tensor:
    """Focal loss over known classes: -w_c (1-p_c)^gamma log p_c.

    p_c is the probability assigned to the true outcome of class c. With
    gamma=0 and unit weights this reduces exactly to partial_bce.
    """
    mask = _check_mask(mask)
    label = np.asarray(label, dtype=np.float64)
    p_hat = as_tensor(pred).clip(PRED_EPS, 1.0 - PRED_EPS)
    p_true = label * p_hat + (1.0 - label) * (1.0 - p_hat)
    w = np.ones_like(label) if weights is None else np.asarray(weights, dtype=np.float64)
    term = (1.0 - p_true).pow(gamma) * p_true.log() * (-w)
    return (term * mask.astype(np.float64)).sum() / float(mask.sum())


def batch_partial_loss(
    preds: Tensor,
    labels: np.ndarray,
    masks: np.ndarray,
    kind: str = "bce",
    gamma: float = 2.0,
    weights=None,
) -> Tensor:
    """Mean per-example partial loss over the examples with known labels.

    `preds` is (B, C); rows whose mask is empty contribute nothing."""
    labels = np.asarray(labels, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    known = masks.sum(axis=1)
    valid = known > 0
    if not valid.any():
        raise EmptyMaskError("every example in the batch has an empty mask")
    # Per-element weight: mask / |C_i| / n_valid, zero for empty-mask rows.
    elem = masks.astype(np.float64)
    elem[valid] /= known[valid, None]
    elem[~valid] = 0.0
    elem /= valid.sum()

    p_hat = preds.clip(PRED_EPS, 1.0 - PRED_EPS)
    if kind == "bce":
        term = -(labels * p_hat.log() + (1.0 - labels) * (1.0 - p_hat).log())
    elif kind == "focal":
        p_true = labels * p_hat + (1.0 - labels) * (1.0 - p_hat)
        w = np.ones(labels.shape[1]) if weights is None else np.asarray(weights, dtype=np.float64)
        term = (1.0 - p_true).pow(gamma) * p_true.log() * (-w[None, :])
    else:
        raise DimensionError(f"unknown loss kind '{kind}', expected 'bce' or 'focal'")
    return (term * elem).sum()


def step_reward(pred: np.ndarray, label, mask, threshold: float = 0.5) -> float:
    """Fraction of known classes predicted correctly at the threshold.

    Empty-mask examples earn zero reward."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return 0.0
    label = np.asarray(label, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    hits = (pred >= threshold) == (label >= 0.5)
    return float(hits[mask].sum()) / float(mask.sum())


def compute_rewards(step_preds, label, mask, threshold: float = 0.5):
    """Per-step rewards and their running sum for one example."""
    r = np.array([step_reward(np.asarray(p), label, mask, threshold) for p in step_preds])
    return r, np.cumsum(r)


def hybrid_loss(
    trajectory,
    label,
    mask,
    baselines: Parameter,
    lambda_b: float = 1.0,
    kind: str = "bce",
    gamma: float = 2.0,
    weights=None,
    threshold: float = 0.5,
):
    """Classification + REINFORCE + baseline-regression loss for one episode.

    loss = CLoss(final pred)
         - sum_j (R_j - b_j) * logprob_j      (R_j, b_j constant here)
         + lambda_b * sum_j (b_j - R_j)^2     (gradient reaches b only)

    Returns (loss Tensor, diagnostics dict); fills the trajectory's reward
    fields as a side effect.
    """
    j_total = trajectory.steps
    if baselines.data.shape != (j_total,):
        raise DimensionError(
            f"trajectory has {j_total} steps but baselines shape is {baselines.data.shape}"
        )
    rewards, cumulative = compute_rewards([p.data for p in trajectory.preds], label, mask, threshold)
    trajectory.rewards = rewards
    trajectory.cumulative = cumulative

    if kind == "focal":
        closs = partial_focal(trajectory.final_pred, label, mask, gamma, weights)
    else:
        closs = partial_bce(trajectory.final_pred, label, mask)

    advantage = cumulative - baselines.data  # constant in the policy term
    lp = concat([p.reshape(1) for p in trajectory.logprobs], axis=0)
    policy_term = -(lp * advantage).sum()
    baseline_term = lambda_b * (baselines - cumulative).pow(2.0).sum()

    loss = closs + policy_term + baseline_term
    diag = {
        "classification_loss": closs.item(),
        "mean_reward": float(rewards.mean()),
        "mean_advantage": float(advantage.mean()),
        "baseline_mse": float(((baselines.data - cumulative) ** 2).mean()),
    }
    return loss, diag


def episode_rewards(episode, labels: np.ndarray, masks: np.ndarray, threshold: float = 0.5):
    """Per-step rewards (B, J) and cumulative sums for a batched episode."""
    j_total = episode.steps
    b = labels.shape[0]
    rewards = np.empty((b, j_total))
    for i in range(b):
        rewards[i] = [
            step_reward(episode.preds[j].data[i], labels[i], masks[i], threshold)
            for j in range(j_total)
        ]
    return rewards, np.cumsum(rewards, axis=1)


def hybrid_loss_batch(
    episode,
    labels: np.ndarray,
    masks: np.ndarray,
    baselines: Parameter,
    lambda_b: float = 1.0,
    kind: str = "bce",
    gamma: float = 2.0,
    weights=None,
    threshold: float = 0.5,
):
    """Batched hybrid loss, averaged over examples. Empty-mask rows earn
    zero reward and are excluded from the classification mean."""
    j_total = episode.steps
    b = labels.shape[0]
    if baselines.data.shape != (j_total,):
        raise DimensionError(
            f"episode has {j_total} steps but baselines shape is {baselines.data.shape}"
        )
    rewards, cumulative = episode_rewards(episode, labels, masks, threshold)

    closs = batch_partial_loss(episode.final_pred, labels, masks, kind, gamma, weights)

    advantage = cumulative - baselines.data[None, :]
    lp = concat([p.reshape(-1, 1) for p in episode.logprobs], axis=1)  # (B, J)
    policy_term = -(lp * advantage).sum() / b
    baseline_term = lambda_b * (baselines - cumulative).pow(2.0).sum() / b

    loss = closs + policy_term + baseline_term
    diag = {
        "classification_loss": closs.item(),
        "mean_reward": float(rewards.mean()),
        "mean_advantage": float(advantage.mean()),
        "baseline_mse": float(((baselines.data[None, :] - cumulative) ** 2).mean()),
    }
    return loss, diag
