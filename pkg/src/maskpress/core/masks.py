"""Mask application and cross-tokenizer mask realignment."""

from __future__ import annotations

from maskpress.core.tokenizers import Tokenizer
from maskpress.core.types import RetentionMask, TokenSeq
from maskpress.errors import AlignmentError, InvalidInput, ShapeError

#: A destination token is retained when at least this fraction of its span
#: is covered by retained source characters.
DEFAULT_OVERLAP = 0.5


def apply_mask(
    seq: TokenSeq,
    mask: RetentionMask,
    mode: str = "delete",
    mask_id: int | None = None,
) -> TokenSeq:
    """Apply a retention mask to a token sequence.

    ``delete`` drops removed tokens and rebuilds spans over the surviving
    text; ``mask_symbol`` keeps the length and substitutes ``mask_id`` at
    removed positions so per-position alignment survives.
    """
    if mask.length != len(seq):
        raise ShapeError(f"mask length {mask.length} != sequence length {len(seq)}")
    if mode == "delete":
        if mask.retained_count() == 0:
            raise InvalidInput("a prompt cannot be pruned to emptiness")
        tokens = []
        spans = []
        pieces = []
        cursor = 0
        for i, bit in enumerate(mask.bits):
            if bit == 0:
                continue
            piece = seq.token_text(i)
            tokens.append(seq.tokens[i])
            spans.append((cursor, cursor + len(piece)))
            pieces.append(piece)
            cursor += len(piece)
        return TokenSeq(tuple(tokens), tuple(spans), "".join(pieces))
    if mode == "mask_symbol":
        if mask_id is None:
            raise InvalidInput("mask_symbol mode needs a mask_id")
        tokens = tuple(
            tok if bit == 1 else mask_id for tok, bit in zip(seq.tokens, mask.bits)
        )
        return TokenSeq(tokens, seq.spans, seq.source_text)
    raise InvalidInput(f"unknown mode {mode!r}")


def align_mask(
    src_seq: TokenSeq,
    src_mask: RetentionMask,
    dst_seq: TokenSeq,
    theta_overlap: float = DEFAULT_OVERLAP,
) -> RetentionMask:
    """Re-express a retention mask in another tokenization of the same text.

    A destination token is retained iff at least ``theta_overlap`` of its
    character span is covered by characters of retained source tokens.
    """
    if src_seq.source_text != dst_seq.source_text:
        raise AlignmentError("source texts differ; masks cannot be realigned")
    if src_mask.length != len(src_seq):
        raise ShapeError(
            f"mask length {src_mask.length} != source length {len(src_seq)}"
        )
    retained = bytearray(len(src_seq.source_text))
    for i, bit in enumerate(src_mask.bits):
        if bit == 1:
            start, end = src_seq.spans[i]
            for c in range(start, end):
                retained[c] = 1
    bits = []
    for start, end in dst_seq.spans:
        covered = sum(retained[start:end])
        bits.append(1 if covered >= theta_overlap * (end - start) else 0)
    return RetentionMask(tuple(bits))


def mask_from_positions(length: int, removed: set[int] | frozenset[int]) -> RetentionMask:
    """All-ones mask with the given positions removed."""
    return RetentionMask(tuple(0 if i in removed else 1 for i in range(length)))
