"""Lossless tokenizers and the tokenizer interface.

Two built-ins ship with the package:

* :class:`WordTokenizer` splits into word / whitespace / punctuation runs and
  maps each run to an id from a frozen lexicon (unknowns collapse to UNK).
* :class:`ByteTokenizer` emits one token per character with the leading UTF-8
  byte as id.

Both satisfy the same contract: ``encode`` produces spans that partition the
input exactly, so detokenization is lossless regardless of the id mapping,
and the reserved MASK id is never produced on natural text.
"""

from __future__ import annotations

import re
from typing import Protocol, runtime_checkable

from maskpress.core.types import TokenSeq
from maskpress.errors import InvalidInput

# word runs, whitespace runs, or a single other character: a complete
# partition of any string.
_WORD_SPLIT = re.compile(r"\w+|\s+|[^\w\s]")


@runtime_checkable
class Tokenizer(Protocol):
    """Minimal tokenizer interface used across the package."""

    name: str
    vocab_size: int
    mask_id: int

    def encode(self, text: str) -> TokenSeq: ...


def _segment(text: str) -> list[tuple[int, int]]:
    """Character spans of word/whitespace/punctuation runs."""
    return [m.span() for m in _WORD_SPLIT.finditer(text)]


class WordTokenizer:
    """Whitespace + punctuation splitter over a frozen lexicon.

    Ids: 0 = MASK (reserved), 1 = UNK, then lexicon entries in order.
    """

    MASK = 0
    UNK = 1

    def __init__(self, lexicon: list[str] | tuple[str, ...] = (), name: str = "word"):
        seen: dict[str, int] = {}
        for entry in lexicon:
            if entry not in seen:
                seen[entry] = 2 + len(seen)
        self.name = name
        self._ids = seen
        self._words = {v: k for k, v in seen.items()}
        self.vocab_size = 2 + len(seen)
        self.mask_id = self.MASK

    def encode(self, text: str) -> TokenSeq:
        if not text:
            raise InvalidInput("cannot tokenize empty text")
        spans = _segment(text)
        tokens = tuple(self._ids.get(text[a:b], self.UNK) for a, b in spans)
        return TokenSeq(tokens, tuple(spans), text)

    def word_id(self, word: str) -> int:
        return self._ids.get(word, self.UNK)

    def lexicon(self) -> list[str]:
        return [self._words[i] for i in sorted(self._words)]


class ByteTokenizer:
    """One token per character; id is the leading UTF-8 byte.

    Spans stay exact for any input, so losslessness holds even for
    multi-byte characters whose ids collapse onto the lead byte.
    """

    def __init__(self, name: str = "byte"):
        self.name = name
        self.vocab_size = 257  # 256 byte values + MASK
        self.mask_id = 256

    def encode(self, text: str) -> TokenSeq:
        if not text:
            raise InvalidInput("cannot tokenize empty text")
        tokens = []
        spans = []
        for i, ch in enumerate(text):
            code = ord(ch)
            tokens.append(code if code < 256 else ch.encode("utf-8")[0])
            spans.append((i, i + 1))
        return TokenSeq(tuple(tokens), tuple(spans), text)


def tokenize(text: str, tok: Tokenizer) -> TokenSeq:
    """Tokenize ``text`` with ``tok``; raises InvalidInput on empty text."""
    return tok.encode(text)


def detokenize(seq: TokenSeq) -> str:
    """Reassemble source text from spans (exact by the TokenSeq invariant)."""
    return "".join(seq.token_text(i) for i in range(len(seq)))
