"""Composite training objective: retention BCE plus the anti-mask penalty.

Over every visible position the model's retention probability
``r_i = 1 - p(MASK at i)`` is scored with binary cross-entropy against the
ground-truth retention bit.  Positions the model would wrongly remove
(``r_i < 0.5`` but label 1) form the incorrect set; the anti-mask penalty is
the scaled mean negative log-probability of the true token over that set,
countering the removed/retained class imbalance.  The total is the convex
combination ``alpha * bce + (1 - alpha) * anti``.

Two implementations exist on purpose: a numpy reference operating on
probability arrays (:func:`compute_loss`) and a differentiable torch twin
used by training (:func:`loss_terms`); a test pins them to each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from maskpress.core.types import RetentionMask, TokenSeq
from maskpress.errors import ConfigError, LossError

_EPS = 1e-12

#: decision boundary for "the model removes this token"
REMOVE_THRESHOLD = 0.5


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.8
    lambda_mask: float = 2.0
    lr: float = 1e-4
    warmup_steps: int = 100
    epochs: int = 20
    max_seq_len: int = 512
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.lambda_mask < 0:
            raise ConfigError("lambda_mask must be >= 0")
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("lr, epochs, batch_size must be positive")
        if self.warmup_steps < 0 or self.max_seq_len < 1:
            raise ConfigError("warmup_steps/max_seq_len out of range")


@dataclass(frozen=True)
class LossBreakdown:
    l_bce: float
    l_anti_mask: float
    l_total: float
    incorrect: tuple[int, ...]
    n_scored: int


def compute_loss(
    probs: np.ndarray,
    x: TokenSeq,
    m_t: RetentionMask,
    m: RetentionMask,
    cfg: TrainConfig,
    mask_id: int,
) -> LossBreakdown:
    """Reference loss over model output probabilities.

    ``m_t`` says which positions are visible; ``m`` provides the retention
    label at each visible position (1 for kept tokens, 0 for revealed
    removed tokens).
    """
    if m_t.length != len(x) or m.length != len(x):
        raise LossError("masks must cover the full sequence")
    visible = [i for i, bit in enumerate(m_t.bits) if bit == 1]
    if not visible:
        raise LossError("no visible positions to score")
    p_mask = np.clip(probs[visible, mask_id], _EPS, 1.0 - _EPS)
    r = 1.0 - p_mask
    labels = np.array([m.bits[i] for i in visible], dtype=np.float64)
    bce = -(labels * np.log(r) + (1.0 - labels) * np.log(1.0 - r))
    l_bce = float(bce.mean())

    incorrect = tuple(
        i
        for i, pos_r, label in zip(visible, r, labels)
        if pos_r < REMOVE_THRESHOLD and label == 1.0
    )
    if incorrect:
        p_true = np.clip(
            np.array([probs[i, x.tokens[i]] for i in incorrect]), _EPS, 1.0
        )
        l_anti = float(cfg.lambda_mask * np.mean(-np.log(p_true)))
    else:
        l_anti = 0.0
    l_total = cfg.alpha * l_bce + (1.0 - cfg.alpha) * l_anti
    return LossBreakdown(
        l_bce=l_bce,
        l_anti_mask=l_anti,
        l_total=l_total,
        incorrect=incorrect,
        n_scored=len(visible),
    )


def loss_terms(
    logits: torch.Tensor,
    token_ids: tuple[int, ...],
    m_t: RetentionMask,
    m: RetentionMask,
    cfg: TrainConfig,
    mask_id: int,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, tuple[int, ...]]:
    """Differentiable twin of :func:`compute_loss` on raw logits."""
    visible = [i for i, bit in enumerate(m_t.bits) if bit == 1]
    if not visible:
        raise LossError("no visible positions to score")
    logp = torch.log_softmax(logits, dim=-1)
    idx = torch.as_tensor(visible, dtype=torch.long)
    logp_mask = logp[idx, mask_id]
    p_mask = torch.clamp(logp_mask.exp(), _EPS, 1.0 - _EPS)
    labels = torch.as_tensor(
        [float(m.bits[i]) for i in visible], dtype=logits.dtype
    )
    # log r = log(1 - p_mask); log(1 - r) = log p_mask
    bce = -(labels * torch.log1p(-p_mask) + (1.0 - labels) * torch.log(p_mask))
    l_bce = bce.mean()

    with torch.no_grad():
        wrongly_removed = (p_mask > 1.0 - REMOVE_THRESHOLD) & (labels > 0.5)
    incorrect = tuple(int(visible[j]) for j in torch.nonzero(wrongly_removed).flatten())
    if incorrect:
        rows = torch.as_tensor(incorrect, dtype=torch.long)
        cols = torch.as_tensor([token_ids[i] for i in incorrect], dtype=torch.long)
        l_anti = cfg.lambda_mask * (-logp[rows, cols]).mean()
    else:
        l_anti = torch.zeros((), dtype=logits.dtype)
    l_total = cfg.alpha * l_bce + (1.0 - cfg.alpha) * l_anti
    return l_bce, l_anti, l_total, incorrect
