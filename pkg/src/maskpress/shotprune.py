"""Shot-level exemplar pruning: random variable-k / fixed-k selection and
similarity-based candidate retrieval.

A trained shot pruner is deliberately absent: random selection matches it in
practice, so the module offers seeded random strategies plus a pluggable
similarity interface (token-set Jaccard by default) for retrieval.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from maskpress.core.masks import apply_mask
from maskpress.core.types import RetentionMask, ShotPrompt, TokenSeq
from maskpress.errors import ConfigError, InvalidInput

#: half-width of the variable-k sampling window
VARIABLE_K_WINDOW = 3

STRATEGIES = ("random_variable_k", "random_fixed_k", "pluggable")


@dataclass(frozen=True)
class ShotSelection:
    """Which shots survive, under which strategy and seed."""

    kept_shot_indices: tuple[int, ...]
    strategy: str
    k_effective: int
    seed: int

    def __post_init__(self):
        object.__setattr__(
            self, "kept_shot_indices", tuple(int(i) for i in self.kept_shot_indices)
        )
        kept = self.kept_shot_indices
        if list(kept) != sorted(set(kept)):
            raise InvalidInput("kept shot indices must be unique and sorted")
        if kept and kept[0] < 0:
            raise InvalidInput("shot indices must be non-negative")
        if self.k_effective != len(kept):
            raise InvalidInput("k_effective disagrees with kept indices")
        if self.strategy not in STRATEGIES:
            raise InvalidInput(f"unknown strategy {self.strategy!r}")


@runtime_checkable
class SimilarityProvider(Protocol):
    """Scores (query, exemplar) pairs; finite and deterministic."""

    name: str

    def similarity(self, query: TokenSeq, exemplar: TokenSeq) -> float: ...


def _word_set(seq: TokenSeq) -> frozenset[str]:
    return frozenset(
        seq.token_text(i) for i in range(len(seq)) if not seq.token_text(i).isspace()
    )


class JaccardSimilarity:
    """Overlap of non-whitespace token strings: |A & B| / |A | B|."""

    name = "jaccard"

    def similarity(self, query: TokenSeq, exemplar: TokenSeq) -> float:
        a = _word_set(query)
        b = _word_set(exemplar)
        if not a and not b:
            return 0.0
        return len(a & b) / len(a | b)


def retrieve_candidates(
    query: TokenSeq,
    pool: Sequence[TokenSeq],
    n: int,
    sim: SimilarityProvider | None = None,
) -> list[TokenSeq]:
    """The n highest-scoring exemplars, descending score, ties by pool index."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    if len(pool) < n:
        raise ConfigError(f"pool of {len(pool)} exemplars cannot supply {n}")
    provider = sim if sim is not None else JaccardSimilarity()
    scored = []
    for index, exemplar in enumerate(pool):
        score = float(provider.similarity(query, exemplar))
        if not math.isfinite(score):
            raise ConfigError(f"similarity for exemplar {index} is not finite")
        scored.append((-score, index))
    scored.sort()
    return [pool[index] for _, index in scored[:n]]


def prune_shots_variable_k(
    prompt: ShotPrompt, mean_target: float, seed: int
) -> ShotSelection:
    """Keep a random k of the shots with E[k] == mean_target exactly.

    k = floor(m) + Bernoulli(frac(m)) + Uniform{-w..w}, with the window
    half-width w shrunk so every reachable k stays inside [1, shot_count].
    The Bernoulli rounding keeps the expectation at mean_target instead of
    at the nearest integer.
    """
    count = prompt.shot_count
    if not (1 <= mean_target <= count):
        raise ConfigError(
            f"mean_target {mean_target} outside [1, shot_count={count}]"
        )
    rng = random.Random(seed)
    base = int(math.floor(mean_target))
    frac = mean_target - base
    if frac > 0:
        bump = 1 if rng.random() < frac else 0
        ceil_m = base + 1
    else:
        bump = 0
        ceil_m = base
    width = min(VARIABLE_K_WINDOW, base - 1, count - ceil_m)
    width = max(width, 0)
    k = base + bump + rng.randint(-width, width)
    kept = tuple(sorted(rng.sample(range(count), k)))
    return ShotSelection(kept, "random_variable_k", k, seed)


def prune_shots_fixed_k(prompt: ShotPrompt, k: int, seed: int) -> ShotSelection:
    """Keep exactly k shots, uniformly without replacement."""
    count = prompt.shot_count
    if not (1 <= k <= count):
        raise ConfigError(f"k={k} outside [1, shot_count={count}]")
    rng = random.Random(seed)
    kept = tuple(sorted(rng.sample(range(count), k)))
    return ShotSelection(kept, "random_fixed_k", k, seed)


def _token_owners(prompt: ShotPrompt) -> list[tuple[str, int]]:
    """Per-token (kind, index): shot i, query, or filler owned by the
    preceding region (prefix filler belongs to nobody and is kept)."""
    n = len(prompt.base)
    owners: list[tuple[str, int]] = [("prefix", -1)] * n
    regions = [("shot", i, s, e) for i, (s, e) in enumerate(prompt.shots)]
    qs, qe = prompt.query_range
    if qe > qs:
        regions.append(("query", -1, qs, qe))
    regions.sort(key=lambda r: r[2])
    for kind, index, start, end in regions:
        for t in range(start, end):
            owners[t] = (kind, index)
    # trailing filler inherits the preceding region
    current: tuple[str, int] = ("prefix", -1)
    for t in range(n):
        if owners[t] == ("prefix", -1):
            owners[t] = current if current != ("prefix", -1) else ("prefix", -1)
        else:
            current = owners[t]
    return owners


def materialize_fewer_shot(
    prompt: ShotPrompt, sel: ShotSelection
) -> tuple[TokenSeq, RetentionMask]:
    """The shot-pruned sequence plus its retention mask over the full prompt.

    Kept-shot tokens and query tokens are 1, dropped-shot tokens 0. The
    delimiter filler after a shot follows that shot's fate so the pruned
    text re-segments into exactly k shots.
    """
    count = prompt.shot_count
    kept = set(sel.kept_shot_indices)
    if sel.kept_shot_indices and sel.kept_shot_indices[-1] >= count:
        raise InvalidInput("selection references a shot outside this prompt")
    if not kept:
        raise InvalidInput("selection keeps no shot")
    owners = _token_owners(prompt)
    bits = []
    for kind, index in owners:
        if kind == "shot":
            bits.append(1 if index in kept else 0)
        else:  # query, query-filler, prefix
            bits.append(1)
    mask = RetentionMask(tuple(bits))
    return apply_mask(prompt.base, mask, "delete"), mask
