"""PromptPair records and their JSON Lines serialization.

A PromptPair is one training example: the full prompt, its token ids under a
named tokenizer, and the ground-truth retention mask of the same length.
The on-disk format is one JSON object per line with a fixed field order,
UTF-8, LF line endings; serialization is byte-deterministic so dataset
files can be compared exactly across runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from maskpress.errors import InvalidInput, ShapeError

STAGES = ("full", "fewer_shot", "ta_intermediate", "ta_final")


@dataclass(frozen=True)
class PromptPair:
    """Full prompt + retention mask + provenance metadata."""

    id: str
    text: str
    tokenizer: str
    tokens: tuple[int, ...]
    mask: tuple[int, ...]
    stage: str
    score: float | None
    source: str

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        object.__setattr__(self, "mask", tuple(int(b) for b in self.mask))
        if len(self.tokens) != len(self.mask):
            raise ShapeError(
                f"{len(self.tokens)} tokens but mask of {len(self.mask)}"
            )
        if any(b not in (0, 1) for b in self.mask):
            raise InvalidInput("mask entries must be 0 or 1")
        if self.stage not in STAGES:
            raise InvalidInput(f"unknown stage {self.stage!r}")

    def to_json(self) -> str:
        record = {
            "id": self.id,
            "text": self.text,
            "tokenizer": self.tokenizer,
            "tokens": list(self.tokens),
            "mask": list(self.mask),
            "meta": {
                "stage": self.stage,
                "score": self.score,
                "source": self.source,
            },
        }
        return json.dumps(record, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "PromptPair":
        record = json.loads(line)
        meta = record["meta"]
        return cls(
            id=record["id"],
            text=record["text"],
            tokenizer=record["tokenizer"],
            tokens=tuple(record["tokens"]),
            mask=tuple(record["mask"]),
            stage=meta["stage"],
            score=meta["score"],
            source=meta["source"],
        )


def write_pairs(path: str | Path, pairs: Iterable[PromptPair]) -> int:
    """Write records as JSONL (UTF-8, LF). Returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in pairs:
            fh.write(pair.to_json())
            fh.write("\n")
            n += 1
    return n


def read_pairs(path: str | Path) -> Iterator[PromptPair]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield PromptPair.from_json(line)
