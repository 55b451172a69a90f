"""Shot segmentation: split a few-shot prompt into exemplars plus query."""

from __future__ import annotations

import re

from maskpress.core.tokenizers import Tokenizer, tokenize
from maskpress.core.types import ShotPrompt
from maskpress.errors import SegmentationError


def _contained_token_range(
    spans: tuple[tuple[int, int], ...], char_start: int, char_end: int
) -> tuple[int, int]:
    """Half-open range of tokens whose spans lie fully inside the segment."""
    first = None
    last = None
    for i, (a, b) in enumerate(spans):
        if a >= char_start and b <= char_end:
            if first is None:
                first = i
            last = i
        elif first is not None and a >= char_end:
            break
    if first is None:
        return (0, 0)
    return (first, last + 1)


def segment_shots(text: str, delimiter_spec: str, tok: Tokenizer) -> ShotPrompt:
    """Split ``text`` at delimiter matches into exemplars and a final query.

    ``delimiter_spec`` is a regular expression.  The text between
    consecutive delimiters (and before the first) forms one exemplar each;
    everything after the last delimiter is the query.  Tokens straddling a
    boundary or lying inside a delimiter count as filler: they belong to no
    shot and not to the query.
    """
    boundaries = [m.span() for m in re.finditer(delimiter_spec, text)]
    if not boundaries:
        raise SegmentationError(
            f"delimiter {delimiter_spec!r} matched no boundary"
        )
    segments = []
    cursor = 0
    for b_start, b_end in boundaries:
        segments.append((cursor, b_start))
        cursor = b_end
    segments.append((cursor, len(text)))

    seq = tokenize(text, tok)
    shot_ranges = []
    for a, b in segments[:-1]:
        rng = _contained_token_range(seq.spans, a, b)
        if rng[0] == rng[1]:
            raise SegmentationError(f"exemplar segment ({a}, {b}) holds no token")
        shot_ranges.append(rng)
    query_range = _contained_token_range(seq.spans, *segments[-1])
    return ShotPrompt(base=seq, shots=tuple(shot_ranges), query_range=query_range)
