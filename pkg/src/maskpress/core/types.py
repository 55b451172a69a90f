"""Immutable token and mask data model.

A :class:`TokenSeq` keeps, for every token, the character span it was cut
from, so any subsequence of tokens can be mapped back to exact source text.
A :class:`RetentionMask` is a per-token keep/remove vector over such a
sequence.  Both are frozen after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from maskpress.errors import InvalidInput, ShapeError


@dataclass(frozen=True)
class TokenSeq:
    """Tokenized text with per-token character spans.

    Invariants (checked at construction):
      * one span per token,
      * spans are adjacent, in order, and partition ``source_text`` exactly.
    """

    tokens: tuple[int, ...]
    spans: tuple[tuple[int, int], ...]
    source_text: str

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "spans", tuple((int(a), int(b)) for a, b in self.spans))
        if len(self.tokens) != len(self.spans):
            raise ShapeError(
                f"{len(self.tokens)} tokens but {len(self.spans)} spans"
            )
        cursor = 0
        for start, end in self.spans:
            if start != cursor or end <= start:
                raise InvalidInput(
                    f"span ({start}, {end}) does not continue partition at {cursor}"
                )
            cursor = end
        if cursor != len(self.source_text):
            raise InvalidInput(
                f"spans cover {cursor} chars of {len(self.source_text)}"
            )

    def __len__(self) -> int:
        return len(self.tokens)

    def token_text(self, i: int) -> str:
        start, end = self.spans[i]
        return self.source_text[start:end]

    def token_texts(self) -> list[str]:
        return [self.token_text(i) for i in range(len(self.tokens))]


@dataclass(frozen=True)
class RetentionMask:
    """Binary keep(1)/remove(0) vector aligned to a TokenSeq."""

    bits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if not self.bits:
            raise InvalidInput("mask must cover at least one token")
        for b in self.bits:
            if b not in (0, 1):
                raise InvalidInput(f"mask entry {b!r} not in {{0, 1}}")

    @property
    def length(self) -> int:
        return len(self.bits)

    def __len__(self) -> int:
        return len(self.bits)

    def retained_count(self) -> int:
        return sum(self.bits)

    def retained_positions(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if b == 1)

    def drop(self, position: int) -> "RetentionMask":
        """New mask with one more position removed."""
        if self.bits[position] != 1:
            raise InvalidInput(f"position {position} is already removed")
        bits = list(self.bits)
        bits[position] = 0
        return RetentionMask(tuple(bits))

    @classmethod
    def all_ones(cls, length: int) -> "RetentionMask":
        return cls((1,) * length)

    @classmethod
    def all_zeros(cls, length: int) -> "RetentionMask":
        return cls((0,) * length)


@dataclass(frozen=True)
class ShotPrompt:
    """A tokenized few-shot prompt split into exemplar ranges plus a query.

    ``shots`` are half-open ``(start, end)`` token index ranges; they are
    disjoint, ordered, and never overlap ``query_range``.  Tokens outside all
    ranges are inter-shot delimiter filler.
    """

    base: TokenSeq
    shots: tuple[tuple[int, int], ...]
    query_range: tuple[int, int]
    shot_count: int = field(default=-1)

    def __post_init__(self):
        object.__setattr__(self, "shots", tuple((int(a), int(b)) for a, b in self.shots))
        if self.shot_count == -1:
            object.__setattr__(self, "shot_count", len(self.shots))
        if self.shot_count != len(self.shots):
            raise InvalidInput("shot_count disagrees with len(shots)")
        n = len(self.base)
        prev_end = 0
        for start, end in self.shots:
            if not (0 <= start < end <= n):
                raise InvalidInput(f"shot range ({start}, {end}) out of bounds")
            if start < prev_end:
                raise InvalidInput("shot ranges overlap or are out of order")
            prev_end = end
        qs, qe = self.query_range
        if not (0 <= qs <= qe <= n):
            raise InvalidInput(f"query range ({qs}, {qe}) out of bounds")
        for start, end in self.shots:
            if start < qe and qs < end:
                raise InvalidInput("a shot overlaps the query range")

    def shot_tokens(self, i: int) -> tuple[int, int]:
        return self.shots[i]

    def query_positions(self) -> tuple[int, ...]:
        qs, qe = self.query_range
        return tuple(range(qs, qe))
