"""Forward reveal process: interpolate between pruned and full prompts.

Training samples start at the pruned prompt (mask ``m``) and re-reveal each
removed token independently with probability ``t``, producing the partially
revealed state the model learns to denoise.  At t=0 the state equals the
pruned prompt; at t=1 everything is visible.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from maskpress.core.masks import apply_mask
from maskpress.core.types import RetentionMask, TokenSeq
from maskpress.errors import InvalidInput, ShapeError


@dataclass(frozen=True)
class ForwardSample:
    """One reveal draw: interpolated mask, model input, and the two index sets."""

    t: float
    m_t: RetentionMask
    x_tilde: TokenSeq
    revealed_set: frozenset[int]
    masked_set: frozenset[int]

    def visible_positions(self) -> tuple[int, ...]:
        return self.m_t.retained_positions()


def forward_process(
    x: TokenSeq,
    m: RetentionMask,
    t: float,
    seed: int,
    mask_id: int,
) -> ForwardSample:
    """Reveal each removed position independently with probability ``t``.

    Retained positions (m=1) always stay visible.  The model input carries
    ``mask_id`` at the positions that remain hidden.
    """
    if m.length != len(x):
        raise ShapeError("mask length does not match sequence")
    if not 0.0 <= t <= 1.0:
        raise InvalidInput(f"t={t} outside [0, 1]")
    rng = random.Random(seed)
    bits = []
    revealed = []
    hidden = []
    for i, bit in enumerate(m.bits):
        if bit == 1:
            bits.append(1)
            continue
        if rng.random() < t:
            bits.append(1)
            revealed.append(i)
        else:
            bits.append(0)
            hidden.append(i)
    m_t = RetentionMask(tuple(bits))
    x_tilde = apply_mask(x, m_t, "mask_symbol", mask_id=mask_id)
    return ForwardSample(
        t=t,
        m_t=m_t,
        x_tilde=x_tilde,
        revealed_set=frozenset(revealed),
        masked_set=frozenset(hidden),
    )
