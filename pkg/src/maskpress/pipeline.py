"""End-to-end dataset construction.

For every full prompt: shot-level pruning produces a fewer-shot prompt, the
threshold-accepting search prunes tokens inside it, and every resulting
candidate (final state plus harvested trajectory intermediates) is kept only
when it strictly beats both the full and the fewer-shot baseline under the
oracle.  Prompts that never improve are routed to the test split as
full-prompt records.  All randomness is derived from one seed, so reruns produce
byte-identical artifacts; interrupted token-pruning runs resume from their
per-prompt checkpoint files.
"""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from maskpress.core.records import PromptPair, write_pairs
from maskpress.core.types import RetentionMask
from maskpress.errors import ConfigError, ShapeError
from maskpress.oracle.synth import Score, SynthCorpus
from maskpress.shotprune import (
    materialize_fewer_shot,
    prune_shots_fixed_k,
    prune_shots_variable_k,
)
from maskpress.taprune import TaConfig, harvest_intermediates, resume, ta_prune

logger = logging.getLogger(__name__)

CATEGORIES = ("word", "numeral", "punctuation", "symbol", "whitespace", "other")
_PUNCTUATION = set(".,;:!?'\"()[]{}-")
_SYMBOL = set("+*/=\\$%&#@^~|<>`_")

VALIDATION_FRACTION = 0.2


@dataclass(frozen=True)
class ShotConfig:
    """Shot-level pruning strategy for the pipeline."""

    strategy: str = "fixed_k"
    k: int = 5
    mean_target: float = 10.3

    def __post_init__(self):
        if self.strategy not in ("fixed_k", "variable_k"):
            raise ConfigError(f"unknown shot strategy {self.strategy!r}")


@dataclass(frozen=True)
class FilterRule:
    """Keep a candidate only when it beats its baselines by ``margin``."""

    require_beats_full: bool = True
    require_beats_fewer: bool = True
    margin: float = 0.0

    def __post_init__(self):
        if not (self.require_beats_full or self.require_beats_fewer):
            raise ConfigError("at least one filter requirement must be enabled")
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")

    def passes(
        self, candidate: float, full: float, fewer: float | None = None
    ) -> bool:
        if self.require_beats_full and not candidate > full + self.margin:
            return False
        if (
            self.require_beats_fewer
            and fewer is not None
            and not candidate > fewer + self.margin
        ):
            return False
        return True


@dataclass(frozen=True)
class SplitAssignment:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]

    def __post_init__(self):
        groups = [set(self.train), set(self.validation), set(self.test)]
        total = sum(len(g) for g in groups)
        if len(set().union(*groups)) != total:
            raise ConfigError("splits must be pairwise disjoint")

    def to_dict(self) -> dict:
        return {
            "train": list(self.train),
            "validation": list(self.validation),
            "test": list(self.test),
        }


@dataclass
class BuildReport:
    stage_counts: dict = field(default_factory=dict)
    improved: int = 0
    trajectory_pairs: int = 0
    splits: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "stage_counts": self.stage_counts,
            "improved": self.improved,
            "trajectory_pairs": self.trajectory_pairs,
            "splits": self.splits,
        }


def compose_masks(
    full_len: int, shot_mask: RetentionMask, token_mask_on_fewer: RetentionMask
) -> RetentionMask:
    """Combine a shot-level mask with a token mask over the shot-pruned prompt.

    A full-prompt position survives iff the shot mask keeps it and the token
    mask keeps its image in the shot-pruned prompt.
    """
    if shot_mask.length != full_len:
        raise ShapeError("shot mask does not cover the full prompt")
    if token_mask_on_fewer.length != shot_mask.retained_count():
        raise ShapeError(
            "token mask length must equal the shot mask's retained count"
        )
    bits = []
    rank = 0
    for bit in shot_mask.bits:
        if bit == 0:
            bits.append(0)
        else:
            bits.append(token_mask_on_fewer.bits[rank])
            rank += 1
    return RetentionMask(tuple(bits))


def _prompt_seed(seed: int, prompt_index: int) -> int:
    return seed * 1_000_003 + prompt_index * 7_919 + 17


@dataclass
class _PromptOutcome:
    prompt_index: int
    records: list[PromptPair]
    improved: bool
    intermediates: int


def _map_query_positions(prompt, shot_mask: RetentionMask) -> tuple[int, ...]:
    """Query token positions re-indexed into the shot-pruned sequence."""
    retained = shot_mask.retained_positions()
    rank = {pos: r for r, pos in enumerate(retained)}
    return tuple(rank[p] for p in prompt.query_positions() if p in rank)


def _build_one(
    corpus: SynthCorpus,
    prompt_index: int,
    out_dir: Path,
    shot_cfg: ShotConfig,
    ta_cfg: TaConfig,
    filter_rule: FilterRule,
    seed: int,
    stride: int,
    oracle_factory,
) -> _PromptOutcome:
    prompt = corpus.prompts[prompt_index]
    f = oracle_factory(prompt_index)
    full_seq = prompt.base
    score_full = f(full_seq)

    prompt_seed = _prompt_seed(seed, prompt_index)
    if shot_cfg.strategy == "fixed_k":
        k = min(shot_cfg.k, prompt.shot_count)
        sel = prune_shots_fixed_k(prompt, k, prompt_seed)
    else:
        mean = min(shot_cfg.mean_target, float(prompt.shot_count))
        sel = prune_shots_variable_k(prompt, mean, prompt_seed)
    fewer_seq, shot_mask = materialize_fewer_shot(prompt, sel)
    score_fewer = f(fewer_seq)

    protected = _map_query_positions(prompt, shot_mask)
    ckpt = out_dir / "ta" / f"prompt-{prompt_index:04d}.jsonl"
    init_mask = RetentionMask.all_ones(len(fewer_seq))
    if ckpt.exists():
        traj = resume(ckpt, fewer_seq, f, ta_cfg, protected, init_mask)
    else:
        traj = ta_prune(fewer_seq, init_mask, f, ta_cfg, protected, ckpt)

    base = f"{seed:08d}-p{prompt_index:04d}"
    records: list[PromptPair] = []
    intermediates = 0

    def emit(stage: str, token_mask: RetentionMask, score: Score, tag: str):
        full_mask = compose_masks(len(full_seq), shot_mask, token_mask)
        records.append(
            PromptPair(
                id=f"{base}-{stage}-{tag}",
                text=full_seq.source_text,
                tokenizer=corpus.tokenizer.name,
                tokens=full_seq.tokens,
                mask=full_mask.bits,
                stage=stage,
                score=score.value,
                source=f"pipeline:{sel.strategy}:k={sel.k_effective}",
            )
        )

    harvested = harvest_intermediates(traj, stride)
    if harvested:
        final_mask, final_score = harvested[-1]
        for n, (mask, score) in enumerate(harvested[:-1]):
            if filter_rule.passes(score.value, score_full.value, score_fewer.value):
                emit("ta_intermediate", mask, score, f"{n + 1:03d}")
                intermediates += 1
        if filter_rule.passes(final_score.value, score_full.value, score_fewer.value):
            emit("ta_final", final_mask, final_score, "999")

    improved = bool(records)
    if not improved:
        records.append(
            PromptPair(
                id=f"{base}-full-000",
                text=full_seq.source_text,
                tokenizer=corpus.tokenizer.name,
                tokens=full_seq.tokens,
                mask=RetentionMask.all_ones(len(full_seq)).bits,
                stage="full",
                score=score_full.value,
                source=f"pipeline:{sel.strategy}:k={sel.k_effective}",
            )
        )
    return _PromptOutcome(prompt_index, records, improved, intermediates)


def build_dataset(
    corpus: SynthCorpus,
    out_dir: str | Path,
    shot_cfg: ShotConfig | None = None,
    ta_cfg: TaConfig | None = None,
    filter_rule: FilterRule | None = None,
    seed: int = 0,
    stride: int = 2,
    oracle_factory=None,
    jobs: int = 1,
) -> tuple[list[PromptPair], SplitAssignment, BuildReport]:
    """Run the full pipeline and write pairs.jsonl, splits.json, report.json.

    ``oracle_factory(prompt_index)`` must return the performance function
    for one prompt; it defaults to the corpus's deterministic answerer.
    Token-pruning checkpoints live under ``out_dir/ta`` and make reruns
    resume instead of recompute.
    """
    shot_cfg = shot_cfg or ShotConfig()
    ta_cfg = ta_cfg or TaConfig()
    filter_rule = filter_rule or FilterRule()
    out_path = Path(out_dir)
    (out_path / "ta").mkdir(parents=True, exist_ok=True)
    factory = oracle_factory if oracle_factory is not None else corpus.oracle_for

    indices = list(range(len(corpus.prompts)))
    outcomes: list[_PromptOutcome | None] = [None] * len(indices)

    def work(p: int) -> _PromptOutcome:
        return _build_one(
            corpus, p, out_path, shot_cfg, ta_cfg, filter_rule, seed, stride, factory
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for outcome in pool.map(work, indices):
                outcomes[outcome.prompt_index] = outcome
    else:
        for p in indices:
            outcomes[p] = work(p)

    records: list[PromptPair] = []
    improved_prompts: list[int] = []
    trajectory_pairs = 0
    for outcome in outcomes:
        assert outcome is not None
        records.extend(outcome.records)
        trajectory_pairs += outcome.intermediates
        if outcome.improved:
            improved_prompts.append(outcome.prompt_index)

    records.sort(key=lambda r: r.id)
    stage_counts: dict[str, int] = {}
    for record in records:
        stage_counts[record.stage] = stage_counts.get(record.stage, 0) + 1

    # improved prompts split into train/validation by prompt, the rest to test
    rng = random.Random(seed * 31 + 7)
    shuffled = improved_prompts[:]
    rng.shuffle(shuffled)
    n_val = int(len(shuffled) * VALIDATION_FRACTION)
    validation_prompts = set(shuffled[:n_val])
    train_ids = []
    val_ids = []
    test_ids = []
    improved_set = set(improved_prompts)
    for outcome in outcomes:
        assert outcome is not None
        ids = [r.id for r in outcome.records]
        if outcome.prompt_index not in improved_set:
            test_ids.extend(ids)
        elif outcome.prompt_index in validation_prompts:
            val_ids.extend(ids)
        else:
            train_ids.extend(ids)
    splits = SplitAssignment(tuple(train_ids), tuple(val_ids), tuple(test_ids))

    report = BuildReport(
        stage_counts=stage_counts,
        improved=len(improved_prompts),
        trajectory_pairs=trajectory_pairs,
        splits={
            "train": len(train_ids),
            "validation": len(val_ids),
            "test": len(test_ids),
        },
    )

    write_pairs(out_path / "pairs.jsonl", records)
    with open(out_path / "splits.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(splits.to_dict(), fh, ensure_ascii=False, indent=1)
        fh.write("\n")
    with open(out_path / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_dict(), fh, ensure_ascii=False, indent=1)
        fh.write("\n")
    return records, splits, report


def token_category(text: str) -> str:
    """Deterministic coarse category of one token string."""
    if not text:
        return "other"
    if text.isspace():
        return "whitespace"
    if text.isdigit():
        return "numeral"
    if any(c.isalnum() for c in text):
        return "word"
    if all(c in _PUNCTUATION for c in text):
        return "punctuation"
    if all(c in _PUNCTUATION or c in _SYMBOL for c in text):
        return "symbol"
    return "other"


@dataclass
class CategoryReport:
    all_counts: dict
    removed_counts: dict
    all_freq: dict
    removed_freq: dict
    tv_distance: float | None

    def to_dict(self) -> dict:
        return {
            "all_counts": self.all_counts,
            "removed_counts": self.removed_counts,
            "all_freq": self.all_freq,
            "removed_freq": self.removed_freq,
            "tv_distance": self.tv_distance,
        }


def analyze_token_categories(pairs: list[PromptPair]) -> CategoryReport:
    """Category distribution of all tokens vs removed tokens, plus their
    total-variation distance (null when nothing was removed)."""
    if not pairs:
        raise ConfigError("pairs must be non-empty")
    all_counts = {c: 0 for c in CATEGORIES}
    removed_counts = {c: 0 for c in CATEGORIES}
    for pair in pairs:
        texts = _token_texts(pair)
        for text, bit in zip(texts, pair.mask):
            category = token_category(text)
            all_counts[category] += 1
            if bit == 0:
                removed_counts[category] += 1
    total_all = sum(all_counts.values())
    total_removed = sum(removed_counts.values())
    all_freq = {c: all_counts[c] / total_all for c in CATEGORIES}
    if total_removed == 0:
        return CategoryReport(all_counts, removed_counts, all_freq, {}, None)
    removed_freq = {c: removed_counts[c] / total_removed for c in CATEGORIES}
    tv = 0.5 * sum(abs(all_freq[c] - removed_freq[c]) for c in CATEGORIES)
    return CategoryReport(all_counts, removed_counts, all_freq, removed_freq, tv)


def _token_texts(pair: PromptPair) -> list[str]:
    """Recover token substrings by re-splitting the record text."""
    from maskpress.core.tokenizers import _segment

    spans = _segment(pair.text)
    if len(spans) == len(pair.tokens):
        return [pair.text[a:b] for a, b in spans]
    # byte-level records: one char per token
    if len(pair.text) == len(pair.tokens):
        return list(pair.text)
    raise ConfigError(
        f"cannot recover token boundaries for record {pair.id!r}"
    )
