"""Seed-deterministic training loop for the mask predictor.

Each optimizer step draws one pair, samples a reveal fraction t ~ U(0,1),
builds the partially revealed input, and applies the composite loss with a
linear-warmup / linear-decay learning-rate schedule.  All randomness comes
from one seeded generator, so fixed seeds reproduce checkpoints byte for
byte.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch

from maskpress.core.records import PromptPair
from maskpress.core.types import RetentionMask, TokenSeq
from maskpress.diffusion.loss import REMOVE_THRESHOLD, TrainConfig, loss_terms
from maskpress.diffusion.model import MaskModel
from maskpress.diffusion.process import forward_process
from maskpress.errors import ConfigError, TrainError

logger = logging.getLogger(__name__)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    mask_f1: float | None = None
    removed_recall: float | None = None


@dataclass
class TrainMetrics:
    steps: list[dict] = field(default_factory=list)
    epochs: list[EpochStats] = field(default_factory=list)
    skipped_pairs: int = 0

    def final_f1(self) -> float | None:
        return self.epochs[-1].mask_f1 if self.epochs else None

    def final_removed_recall(self) -> float | None:
        return self.epochs[-1].removed_recall if self.epochs else None


def _pair_seq(pair: PromptPair) -> TokenSeq:
    # spans are synthesized as contiguous singleton covers: training only
    # consumes token ids, the text is carried for provenance
    length = len(pair.tokens)
    if length == 0:
        raise ConfigError(f"pair {pair.id} has no tokens")
    spans = []
    cursor = 0
    step = len(pair.text) / length
    for i in range(length):
        end = len(pair.text) if i == length - 1 else int(round((i + 1) * step))
        end = max(end, cursor + 1)
        spans.append((cursor, min(end, len(pair.text))))
        cursor = spans[-1][1]
    if spans[-1][1] != len(pair.text):
        spans[-1] = (spans[-1][0], len(pair.text))
    return TokenSeq(pair.tokens, tuple(spans), pair.text)


def predict_retention(model: MaskModel, token_ids: tuple[int, ...]) -> list[int]:
    """Single-pass mask prediction: remove iff r < REMOVE_THRESHOLD."""
    r = model.retention_probabilities(token_ids)
    return [1 if v >= REMOVE_THRESHOLD else 0 for v in r]


def mask_prediction_scores(
    model: MaskModel, pairs: list[PromptPair]
) -> tuple[float, float]:
    """(retained-class F1, removed-class recall) against pair masks."""
    tp = fp = fn = 0
    removed_hit = removed_total = 0
    for pair in pairs:
        predicted = predict_retention(model, pair.tokens)
        for want, got in zip(pair.mask, predicted):
            if want == 1 and got == 1:
                tp += 1
            elif want == 0 and got == 1:
                fp += 1
            elif want == 1 and got == 0:
                fn += 1
            if want == 0:
                removed_total += 1
                if got == 0:
                    removed_hit += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    removed_recall = removed_hit / removed_total if removed_total else 0.0
    return f1, removed_recall


def _lr_factor(step: int, warmup: int, total: int) -> float:
    if warmup > 0 and step < warmup:
        return (step + 1) / warmup
    if total <= warmup:
        return 1.0
    return max(0.0, (total - step) / (total - warmup))


def train(
    model: MaskModel,
    dataset: list[PromptPair],
    cfg: TrainConfig,
    eval_pairs: list[PromptPair] | None = None,
    metrics_path: str | Path | None = None,
) -> tuple[MaskModel, TrainMetrics]:
    """Train in place; returns the model plus per-step and per-epoch metrics.

    Pairs longer than ``cfg.max_seq_len`` are skipped with a warning.  A
    non-finite loss aborts with the last epoch's parameter snapshot attached.
    """
    if not dataset:
        raise ConfigError("dataset must be non-empty")
    usable = []
    for pair in dataset:
        if len(pair.tokens) > cfg.max_seq_len:
            logger.warning(
                "skipping pair %s: %d tokens exceed max_seq_len %d",
                pair.id, len(pair.tokens), cfg.max_seq_len,
            )
            continue
        usable.append(pair)
    if not usable:
        raise ConfigError("every pair exceeds max_seq_len")

    metrics = TrainMetrics(skipped_pairs=len(dataset) - len(usable))
    rng = random.Random(cfg.seed)
    steps_per_epoch = math.ceil(len(usable) / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs
    optimizer = torch.optim.RMSprop(model.net.parameters(), lr=cfg.lr)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda s: _lr_factor(s, cfg.warmup_steps, total_steps)
    )
    sink = None
    if metrics_path is not None:
        sink = open(metrics_path, "w", encoding="utf-8", newline="\n")

    model.net.train()
    last_snapshot = model.save_bytes()
    step = 0
    try:
        for epoch in range(cfg.epochs):
            order = list(range(len(usable)))
            rng.shuffle(order)
            epoch_losses = []
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                optimizer.zero_grad()
                batch_total = 0.0
                for pick in batch:
                    pair = usable[pick]
                    seq = _pair_seq(pair)
                    m = RetentionMask(pair.mask)
                    t = rng.random()
                    sample = forward_process(
                        seq, m, t, seed=rng.randrange(2**63), mask_id=model.mask_id
                    )
                    logits = model.logits(sample.x_tilde.tokens)
                    l_bce, l_anti, l_total, _ = loss_terms(
                        logits, seq.tokens, sample.m_t, m, cfg, model.mask_id
                    )
                    (l_total / len(batch)).backward()
                    value = float(l_total.detach())
                    batch_total += value / len(batch)
                    if sink is not None:
                        sink.write(
                            json.dumps(
                                {
                                    "step": step,
                                    "t": t,
                                    "l_bce": float(l_bce.detach()),
                                    "l_anti": float(l_anti.detach()),
                                    "l_total": value,
                                }
                            )
                            + "\n"
                        )
                    metrics.steps.append(
                        {"step": step, "t": t, "l_total": value}
                    )
                if not math.isfinite(batch_total):
                    raise TrainError(
                        f"loss diverged at step {step}", checkpoint=last_snapshot
                    )
                optimizer.step()
                scheduler.step()
                epoch_losses.append(batch_total)
                step += 1
            stats = EpochStats(epoch=epoch, mean_loss=sum(epoch_losses) / len(epoch_losses))
            if eval_pairs:
                model.net.eval()
                stats.mask_f1, stats.removed_recall = mask_prediction_scores(
                    model, eval_pairs
                )
                model.net.train()
            metrics.epochs.append(stats)
            last_snapshot = model.save_bytes()
    finally:
        if sink is not None:
            sink.close()
        model.net.eval()
    return model, metrics
