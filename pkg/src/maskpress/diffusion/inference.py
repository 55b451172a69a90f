"""Iterative denoising inference: rank-and-threshold mask prediction.

Each round runs the model on the current sequence and prunes every still
visible position whose MASK probability both ranks within the top-k entries
of that position's distribution and clears the confidence threshold tau.
Pruned positions become MASK symbols for the next round.  Inference is
purely deterministic; raising k prunes more, raising tau prunes less, and a
tau above every reachable probability prunes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from maskpress.core.types import RetentionMask, TokenSeq
from maskpress.diffusion.model import MaskModel
from maskpress.errors import ConfigError

#: at least this many tokens always survive inference
MIN_RETAINED = 1


@dataclass(frozen=True)
class InferenceConfig:
    steps: int = 64
    top_k: int = 4
    tau: float = 1e-3
    per_step_cap: int | None = None
    early_stop: bool = True

    def __post_init__(self):
        if self.steps < 1 or self.top_k < 1:
            raise ConfigError("steps and top_k must be >= 1")
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")
        if self.per_step_cap is not None and self.per_step_cap < 1:
            raise ConfigError("per_step_cap must be >= 1 when set")


@dataclass(frozen=True)
class StepTrace:
    step: int
    mask_probs: tuple[float | None, ...]  # None at already-pruned positions
    pruned: tuple[int, ...]


@dataclass(frozen=True)
class InferenceTrace:
    steps: tuple[StepTrace, ...]

    def rounds_run(self) -> int:
        return len(self.steps)


def single_step_prune_set(
    probs: np.ndarray,
    visible: list[bool],
    top_k: int,
    tau: float,
    mask_id: int,
) -> set[int]:
    """Positions pruned by one denoising round on fixed model output.

    Prune position i iff p(MASK at i) has fewer than top_k strictly larger
    entries in row i and p(MASK at i) >= tau.  Both tests are monotone: the
    pruned set grows with k and shrinks with tau.
    """
    pruned = set()
    for i, vis in enumerate(visible):
        if not vis:
            continue
        row = probs[i]
        p_mask = row[mask_id]
        if p_mask < tau:
            continue
        rank = int(np.sum(row > p_mask))
        if rank < top_k:
            pruned.add(i)
    return pruned


def infer_mask(
    model: MaskModel,
    full_prompt: TokenSeq,
    cfg: InferenceConfig | None = None,
) -> tuple[RetentionMask, InferenceTrace]:
    """Predict a retention mask for a full prompt.

    Runs ``cfg.steps`` denoising rounds (stopping early at a fixed point
    unless disabled) and returns the surviving-token mask plus a per-round
    probability trace.  At least one token always survives.
    """
    cfg = cfg or InferenceConfig()
    length = len(full_prompt)
    visible = [True] * length
    ids = list(full_prompt.tokens)
    traces = []
    for step in range(cfg.steps):
        probs = model.forward_probs(ids)
        p_mask_col = probs[:, model.mask_id]
        candidates = single_step_prune_set(
            probs, visible, cfg.top_k, cfg.tau, model.mask_id
        )
        ordered = sorted(candidates, key=lambda i: (-p_mask_col[i], i))
        if cfg.per_step_cap is not None:
            ordered = ordered[: cfg.per_step_cap]
        allowed = sum(visible) - MIN_RETAINED
        if len(ordered) > allowed:
            ordered = ordered[:allowed]
        traces.append(
            StepTrace(
                step=step,
                mask_probs=tuple(
                    float(p_mask_col[i]) if visible[i] else None
                    for i in range(length)
                ),
                pruned=tuple(sorted(ordered)),
            )
        )
        if not ordered:
            if cfg.early_stop:
                break
            continue
        for i in ordered:
            visible[i] = False
            ids[i] = model.mask_id
    mask = RetentionMask(tuple(1 if v else 0 for v in visible))
    return mask, InferenceTrace(tuple(traces))


def compression_ratio(mask: RetentionMask) -> float:
    """1 - retained/total."""
    return 1.0 - mask.retained_count() / mask.length
