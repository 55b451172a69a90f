"""Token/mask data model, tokenizers, segmentation, and mask alignment."""

from maskpress.core.masks import align_mask, apply_mask, mask_from_positions
from maskpress.core.records import PromptPair, read_pairs, write_pairs
from maskpress.core.segment import segment_shots
from maskpress.core.tokenizers import (
    ByteTokenizer,
    Tokenizer,
    WordTokenizer,
    detokenize,
    tokenize,
)
from maskpress.core.types import RetentionMask, ShotPrompt, TokenSeq

__all__ = [
    "ByteTokenizer",
    "PromptPair",
    "RetentionMask",
    "ShotPrompt",
    "TokenSeq",
    "Tokenizer",
    "WordTokenizer",
    "align_mask",
    "apply_mask",
    "detokenize",
    "mask_from_positions",
    "read_pairs",
    "segment_shots",
    "tokenize",
    "write_pairs",
]
