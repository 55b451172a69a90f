"""Synthetic corpora with exactly identifiable redundancy, plus their scorer.

Each corpus is built from a pool of facts.  A fact pairs a slot word (``s7``)
with a handful of unique code words (``c7a c7b``); one exemplar teaches one
fact.  Exemplars also carry filler words drawn from a small lexicon (the
labeled-redundant tokens) and, optionally, decoy words (``d4``) that
contradict another exemplar's fact.

The deterministic answerer scores a prompt on one query per fact: a query is
answered correctly iff every code word of its fact is present and no decoy
word for it survives.  Redundant tokens are invisible to the answerer by
construction, decoys make a prompt strictly improvable by pruning, and
deleting a code word can only lose queries.  This gives the ground truth
that full-scale evaluation only provides implicitly through an LLM.
"""

from __future__ import annotations

import json
import random
import re
import string
from dataclasses import dataclass, field
from pathlib import Path

from maskpress.core.records import PromptPair
from maskpress.core.segment import segment_shots
from maskpress.core.tokenizers import WordTokenizer
from maskpress.core.types import ShotPrompt, TokenSeq
from maskpress.errors import ConfigError, ScoringError

SHOT_DELIMITER = "\n\n"
QUERY_TRAILER = "now answer the next question ."
STRUCTURE_WORDS = ("maps", "to", "now", "answer", "the", "next", "question")

DEFAULT_FILLER_VOCAB = (
    "basically", "indeed", "actually", "certainly", "note", "well",
    "rather", "quite", "really", "simply", "moreover", "furthermore",
    "likewise", "namely", "also", "thus", "hence", "clearly",
)

REDUNDANCY_KINDS = ("filler_phrase", "duplicate_clause", "verbose_connective")
_KIND_COST = {"filler_phrase": 1, "verbose_connective": 2, "duplicate_clause": 3}

# marker words reserved by the generator: slot s<j>, code c<j><letter>, decoy d<j>
_MARKER = re.compile(r"^[scd]\d+[a-z]*$")


@dataclass(frozen=True)
class SynthCorpusSpec:
    """Parameters of a synthetic corpus; same spec implies identical bytes."""

    n_exemplars: int = 8
    essential_per_shot: int = 2
    redundant_per_shot: int = 3
    vocab: tuple[str, ...] = DEFAULT_FILLER_VOCAB
    seed: int = 0
    redundancy_kinds: tuple[str, ...] = REDUNDANCY_KINDS
    n_prompts: int = 8
    decoys_per_prompt: int = 0
    fact_pool: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        object.__setattr__(self, "redundancy_kinds", tuple(self.redundancy_kinds))
        if self.n_exemplars < 1 or self.n_prompts < 1:
            raise ConfigError("need at least one exemplar and one prompt")
        if self.essential_per_shot < 1:
            raise ConfigError("essential_per_shot must be >= 1")
        if self.redundant_per_shot < 0 or self.decoys_per_prompt < 0:
            raise ConfigError("counts must be non-negative")
        if self.essential_per_shot > 26:
            raise ConfigError("essential_per_shot capped at 26 code words per fact")
        if self.redundant_per_shot > 0 and len(self.vocab) < 2:
            raise ConfigError("vocab too small for redundant token generation")
        for kind in self.redundancy_kinds:
            if kind not in REDUNDANCY_KINDS:
                raise ConfigError(f"unknown redundancy kind {kind!r}")
        if self.redundant_per_shot > 0 and not self.redundancy_kinds:
            raise ConfigError("redundant tokens requested but no kinds enabled")
        for word in self.vocab:
            if _MARKER.match(word) or not re.fullmatch(r"\w+", word):
                raise ConfigError(f"vocab word {word!r} collides with reserved markers")

    def resolved_fact_pool(self) -> int:
        if self.fact_pool is not None:
            if self.fact_pool < self.n_exemplars:
                raise ConfigError("fact_pool smaller than n_exemplars")
            return self.fact_pool
        return max(self.n_exemplars, (self.n_exemplars * 3) // 2)


@dataclass(frozen=True)
class SynthLabel:
    """Token-index sets for one prompt: essential, redundant, decoy."""

    essential: frozenset[int]
    redundant: frozenset[int]
    decoys: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.essential & self.redundant:
            raise ConfigError("essential and redundant sets overlap")

    def removable(self) -> frozenset[int]:
        """Positions the ideal pruned prompt drops."""
        return self.redundant | self.decoys


@dataclass(frozen=True)
class SynthQuery:
    """One evaluation question tied to a fact."""

    fact: int
    slot: str
    required: tuple[str, ...]
    decoy: str


@dataclass(frozen=True)
class Score:
    """Fraction of queries answered correctly, with per-query detail."""

    value: float
    n_queries: int
    detail: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "detail", tuple(int(b) for b in self.detail))
        if self.n_queries != len(self.detail):
            raise ConfigError("n_queries disagrees with detail length")
        if self.n_queries > 0:
            mean = sum(self.detail) / self.n_queries
            if abs(mean - self.value) > 1e-12:
                raise ConfigError("score value is not the mean of detail bits")
        if not 0.0 <= self.value <= 1.0:
            raise ConfigError("score out of [0, 1]")

    @classmethod
    def from_detail(cls, detail: tuple[int, ...]) -> "Score":
        if not detail:
            raise ScoringError("cannot score an empty query set")
        return cls(sum(detail) / len(detail), len(detail), detail)


@dataclass(frozen=True)
class Fact:
    fact: int
    slot: str
    codes: tuple[str, ...]
    decoy: str


@dataclass
class SynthCorpus:
    """Generated prompts, their labels, queries, and the shared tokenizer."""

    spec: SynthCorpusSpec
    prompts: list[ShotPrompt]
    labels: list[SynthLabel]
    queries: list[SynthQuery]
    prompt_facts: list[tuple[int, ...]]
    facts: list[Fact]
    tokenizer: WordTokenizer = field(repr=False)

    def queries_for(self, prompt_index: int) -> tuple[SynthQuery, ...]:
        facts = set(self.prompt_facts[prompt_index])
        return tuple(q for q in self.queries if q.fact in facts)

    def score_prompt(self, prompt_index: int, seq: TokenSeq) -> Score:
        return synth_score(seq, self.labels, self.queries_for(prompt_index))

    def oracle_for(self, prompt_index: int):
        """Performance function f(seq) -> Score for one prompt's queries."""
        queries = self.queries_for(prompt_index)
        labels = self.labels

        def f(seq: TokenSeq) -> Score:
            return synth_score(seq, labels, queries)

        return f

    def ground_truth_pairs(self) -> list[PromptPair]:
        """One pair per prompt with the label-derived ideal retention mask."""
        pairs = []
        for p, (prompt, label) in enumerate(zip(self.prompts, self.labels)):
            removable = label.removable()
            mask = tuple(
                0 if i in removable else 1 for i in range(len(prompt.base))
            )
            pairs.append(
                PromptPair(
                    id=f"synth-{self.spec.seed:08d}-p{p:04d}-labels",
                    text=prompt.base.source_text,
                    tokenizer=self.tokenizer.name,
                    tokens=prompt.base.tokens,
                    mask=mask,
                    stage="ta_final",
                    score=None,
                    source="ground-truth-labels",
                )
            )
        return pairs

    def to_json(self) -> str:
        payload = {
            "spec": {
                "n_exemplars": self.spec.n_exemplars,
                "essential_per_shot": self.spec.essential_per_shot,
                "redundant_per_shot": self.spec.redundant_per_shot,
                "vocab": list(self.spec.vocab),
                "seed": self.spec.seed,
                "redundancy_kinds": list(self.spec.redundancy_kinds),
                "n_prompts": self.spec.n_prompts,
                "decoys_per_prompt": self.spec.decoys_per_prompt,
                "fact_pool": self.spec.fact_pool,
            },
            "lexicon": self.tokenizer.lexicon(),
            "facts": [
                {"fact": f.fact, "slot": f.slot, "codes": list(f.codes), "decoy": f.decoy}
                for f in self.facts
            ],
            "prompt_facts": [list(t) for t in self.prompt_facts],
            "prompts": [p.base.source_text for p in self.prompts],
            "labels": [
                {
                    "essential": sorted(l.essential),
                    "redundant": sorted(l.redundant),
                    "decoys": sorted(l.decoys),
                }
                for l in self.labels
            ],
        }
        return json.dumps(payload, ensure_ascii=False, indent=1)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())
            fh.write("\n")


def load_corpus(path: str | Path) -> SynthCorpus:
    """Parse a corpus file back into prompts, labels, and queries."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    raw = payload["spec"]
    spec = SynthCorpusSpec(
        n_exemplars=raw["n_exemplars"],
        essential_per_shot=raw["essential_per_shot"],
        redundant_per_shot=raw["redundant_per_shot"],
        vocab=tuple(raw["vocab"]),
        seed=raw["seed"],
        redundancy_kinds=tuple(raw["redundancy_kinds"]),
        n_prompts=raw["n_prompts"],
        decoys_per_prompt=raw["decoys_per_prompt"],
        fact_pool=raw["fact_pool"],
    )
    tokenizer = WordTokenizer(tuple(payload["lexicon"]))
    facts = [
        Fact(f["fact"], f["slot"], tuple(f["codes"]), f["decoy"])
        for f in payload["facts"]
    ]
    prompts = [
        segment_shots(text, re.escape(SHOT_DELIMITER), tokenizer)
        for text in payload["prompts"]
    ]
    labels = [
        SynthLabel(
            frozenset(l["essential"]),
            frozenset(l["redundant"]),
            frozenset(l["decoys"]),
        )
        for l in payload["labels"]
    ]
    queries = [SynthQuery(f.fact, f.slot, f.codes, f.decoy) for f in facts]
    return SynthCorpus(
        spec=spec,
        prompts=prompts,
        labels=labels,
        queries=queries,
        prompt_facts=[tuple(t) for t in payload["prompt_facts"]],
        facts=facts,
        tokenizer=tokenizer,
    )


def _make_facts(spec: SynthCorpusSpec) -> list[Fact]:
    facts = []
    for f in range(spec.resolved_fact_pool()):
        codes = tuple(
            f"c{f}{string.ascii_lowercase[j]}" for j in range(spec.essential_per_shot)
        )
        facts.append(Fact(fact=f, slot=f"s{f}", codes=codes, decoy=f"d{f}"))
    return facts


def _shot_words(
    fact: Fact,
    decoy_words: list[str],
    spec: SynthCorpusSpec,
    rng: random.Random,
) -> list[tuple[str, str]]:
    """Build one exemplar as (word, tag) entries; tags drive the labels."""
    words: list[tuple[str, str]] = [(fact.slot, "structure"), ("maps", "structure"),
                                    ("to", "structure")]
    words += [(code, "essential") for code in fact.codes]
    words.append((".", "structure"))

    remaining = spec.redundant_per_shot
    while remaining > 0:
        kind = rng.choice(spec.redundancy_kinds)
        count = min(_KIND_COST[kind], remaining)
        fillers = [(rng.choice(spec.vocab), "redundant") for _ in range(count)]
        pos = rng.randint(1, len(words) - 1)
        words[pos:pos] = fillers
        remaining -= count
    for decoy in decoy_words:
        pos = rng.randint(1, len(words) - 1)
        words.insert(pos, (decoy, "decoy"))
    return words


def _tag_token_indices(
    seq: TokenSeq, tagged_words: list[tuple[str, str]]
) -> dict[str, frozenset[int]]:
    """Map generator word tags onto token indices of the final sequence."""
    buckets: dict[str, set[int]] = {"essential": set(), "redundant": set(), "decoy": set()}
    cursor = 0
    for i in range(len(seq)):
        text = seq.token_text(i)
        if text.isspace():
            continue
        word, tag = tagged_words[cursor]
        if word != text:
            raise ConfigError(
                f"generator desync: expected {word!r}, tokenized {text!r}"
            )
        cursor += 1
        if tag in buckets:
            buckets[tag].add(i)
    if cursor != len(tagged_words):
        raise ConfigError("generator desync: unconsumed words")
    return {k: frozenset(v) for k, v in buckets.items()}


def generate_synth_corpus(spec: SynthCorpusSpec) -> SynthCorpus:
    """Deterministically build prompts, labels, and queries from a spec."""
    rng = random.Random(spec.seed)
    facts = _make_facts(spec)
    queries = [SynthQuery(f.fact, f.slot, f.codes, f.decoy) for f in facts]

    lexicon: list[str] = [" ", SHOT_DELIMITER, "."]
    lexicon += list(STRUCTURE_WORDS)
    lexicon += list(spec.vocab)
    for f in facts:
        lexicon.append(f.slot)
        lexicon.extend(f.codes)
        lexicon.append(f.decoy)
    tokenizer = WordTokenizer(tuple(lexicon))

    prompts: list[ShotPrompt] = []
    labels: list[SynthLabel] = []
    prompt_facts: list[tuple[int, ...]] = []
    for _ in range(spec.n_prompts):
        chosen = rng.sample(range(len(facts)), spec.n_exemplars)
        # decoys contradict a later exemplar of the same prompt: hosting them
        # strictly before their target keeps left-to-right token pruning from
        # discarding the target's code words while its query is still broken
        decoys_by_shot: dict[int, list[str]] = {}
        if spec.n_exemplars > 1 and spec.decoys_per_prompt > 0:
            n_targets = min(spec.decoys_per_prompt, spec.n_exemplars - 1)
            target_shots = rng.sample(range(1, spec.n_exemplars), n_targets)
            for target_shot in target_shots:
                host = rng.randrange(target_shot)
                decoys_by_shot.setdefault(host, []).append(
                    facts[chosen[target_shot]].decoy
                )

        tagged: list[tuple[str, str]] = []
        shot_texts = []
        for shot_index, fact_id in enumerate(chosen):
            words = _shot_words(
                facts[fact_id], decoys_by_shot.get(shot_index, []), spec, rng
            )
            tagged.extend(words)
            shot_texts.append(" ".join(w for w, _ in words))
        tagged.extend((w, "structure") for w in QUERY_TRAILER.split(" "))
        text = SHOT_DELIMITER.join(shot_texts) + SHOT_DELIMITER + QUERY_TRAILER

        prompt = segment_shots(text, re.escape(SHOT_DELIMITER), tokenizer)
        if prompt.shot_count != spec.n_exemplars:
            raise ConfigError("segmentation produced an unexpected shot count")
        buckets = _tag_token_indices(prompt.base, tagged)
        prompts.append(prompt)
        labels.append(
            SynthLabel(buckets["essential"], buckets["redundant"], buckets["decoy"])
        )
        prompt_facts.append(tuple(chosen))

    return SynthCorpus(
        spec=spec,
        prompts=prompts,
        labels=labels,
        queries=queries,
        prompt_facts=prompt_facts,
        facts=facts,
        tokenizer=tokenizer,
    )


def synth_score(
    prompt_tokens: TokenSeq,
    labels: list[SynthLabel] | SynthLabel | None,
    queries: tuple[SynthQuery, ...] | list[SynthQuery],
) -> Score:
    """Deterministic answerer over a (possibly pruned) corpus prompt.

    A query is correct iff all its code words survive and its decoy word
    does not appear.  Labeled-redundant tokens never influence the result.
    """
    if not queries:
        raise ScoringError("cannot score an empty query set")
    words = {
        prompt_tokens.token_text(i)
        for i in range(len(prompt_tokens))
        if not prompt_tokens.token_text(i).isspace()
    }
    referenced: set[str] = set()
    for q in queries:
        referenced.add(q.slot)
        referenced.add(q.decoy)
        referenced.update(q.required)
    for w in words:
        if _MARKER.match(w) and w not in referenced:
            raise ScoringError(f"token {w!r} is foreign to this query set")
    detail = tuple(
        1 if all(r in words for r in q.required) and q.decoy not in words else 0
        for q in queries
    )
    return Score.from_detail(detail)
