"""Synthetic corpus generation and the deterministic answerer."""

from __future__ import annotations

import random

import pytest

from maskpress.core.masks import apply_mask, mask_from_positions
from maskpress.core.types import RetentionMask
from maskpress.errors import ConfigError, ScoringError
from maskpress.oracle.synth import (
    Score,
    SynthCorpusSpec,
    generate_synth_corpus,
    load_corpus,
    synth_score,
)


def _drop(seq, positions):
    mask = mask_from_positions(len(seq), set(positions))
    return apply_mask(seq, mask, "delete")


class TestSpecValidation:
    def test_essential_required(self):
        with pytest.raises(ConfigError):
            SynthCorpusSpec(essential_per_shot=0)

    def test_vocab_too_small(self):
        with pytest.raises(ConfigError):
            SynthCorpusSpec(redundant_per_shot=2, vocab=("only",))

    def test_reserved_marker_words_rejected(self):
        with pytest.raises(ConfigError):
            SynthCorpusSpec(vocab=("s3", "basically"))

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            SynthCorpusSpec(redundancy_kinds=("mystery",))


class TestGeneration:
    def test_deterministic_bytes(self):
        spec = SynthCorpusSpec(seed=9, n_prompts=3, decoys_per_prompt=1)
        a = generate_synth_corpus(spec).to_json()
        b = generate_synth_corpus(spec).to_json()
        assert a == b

    def test_different_seed_differs(self):
        a = generate_synth_corpus(SynthCorpusSpec(seed=1)).to_json()
        b = generate_synth_corpus(SynthCorpusSpec(seed=2)).to_json()
        assert a != b

    def test_counts_exact(self):
        spec = SynthCorpusSpec(
            n_exemplars=5, essential_per_shot=3, redundant_per_shot=4, n_prompts=2
        )
        corpus = generate_synth_corpus(spec)
        for prompt, label in zip(corpus.prompts, corpus.labels):
            assert len(label.essential) == 5 * 3
            assert len(label.redundant) == 5 * 4
            for start, end in prompt.shots:
                ess = [i for i in label.essential if start <= i < end]
                red = [i for i in label.redundant if start <= i < end]
                assert len(ess) == 3
                assert len(red) == 4

    def test_no_redundant_requested(self):
        corpus = generate_synth_corpus(SynthCorpusSpec(redundant_per_shot=0))
        assert all(not label.redundant for label in corpus.labels)

    def test_no_decoys_by_default(self):
        corpus = generate_synth_corpus(SynthCorpusSpec())
        assert all(not label.decoys for label in corpus.labels)

    def test_save_load_roundtrip(self, tmp_path):
        spec = SynthCorpusSpec(seed=3, n_prompts=2, decoys_per_prompt=2)
        corpus = generate_synth_corpus(spec)
        path = tmp_path / "corpus.json"
        corpus.save(path)
        loaded = load_corpus(path)
        assert loaded.to_json() == corpus.to_json()
        assert [p.base for p in loaded.prompts] == [p.base for p in corpus.prompts]

    def test_single_redundant_deletion_never_changes_score(self):
        corpus = generate_synth_corpus(
            SynthCorpusSpec(seed=21, n_prompts=2, decoys_per_prompt=1)
        )
        for p, (prompt, label) in enumerate(zip(corpus.prompts, corpus.labels)):
            f = corpus.oracle_for(p)
            base = f(prompt.base).value
            for position in sorted(label.redundant):
                assert f(_drop(prompt.base, [position])).value == base


class TestSynthScore:
    def setup_method(self):
        self.corpus = generate_synth_corpus(
            SynthCorpusSpec(n_exemplars=4, n_prompts=1, seed=2)
        )
        self.prompt = self.corpus.prompts[0]
        self.label = self.corpus.labels[0]
        self.queries = self.corpus.queries_for(0)

    def test_full_prompt_scores_one_without_decoys(self):
        score = synth_score(self.prompt.base, self.corpus.labels, self.queries)
        assert score.value == 1.0
        assert score.n_queries == 4

    def test_one_exemplar_fully_deleted_gives_three_quarters(self):
        start, end = self.prompt.shots[1]
        essentials = [i for i in self.label.essential if start <= i < end]
        pruned = _drop(self.prompt.base, essentials)
        score = synth_score(pruned, self.corpus.labels, self.queries)
        assert score.value == 0.75

    def test_empty_query_set_rejected(self):
        with pytest.raises(ScoringError):
            synth_score(self.prompt.base, self.corpus.labels, [])

    def test_foreign_marker_tokens_rejected(self):
        other = generate_synth_corpus(
            SynthCorpusSpec(n_exemplars=4, n_prompts=1, seed=2, fact_pool=20)
        )
        # queries covering a disjoint fact subset see foreign markers
        foreign = [q for q in other.queries if q.fact >= 10]
        with pytest.raises(ScoringError):
            synth_score(self.prompt.base, self.corpus.labels, foreign)

    def test_redundant_subset_invariance(self):
        rng = random.Random(0)
        f = self.corpus.oracle_for(0)
        base = f(self.prompt.base).value
        redundant = sorted(self.label.redundant)
        for _ in range(300):
            size = rng.randint(1, len(redundant))
            subset = rng.sample(redundant, size)
            assert f(_drop(self.prompt.base, subset)).value == base

    def test_essential_deletion_monotone(self):
        f = self.corpus.oracle_for(0)
        base = f(self.prompt.base).value
        for position in sorted(self.label.essential):
            dropped = f(_drop(self.prompt.base, [position])).value
            assert dropped <= base
            assert dropped < base  # no decoys: every essential gates a query

    def test_decoy_removal_strictly_improves(self):
        corpus = generate_synth_corpus(
            SynthCorpusSpec(n_exemplars=4, n_prompts=1, seed=8, decoys_per_prompt=2)
        )
        label = corpus.labels[0]
        assert label.decoys
        f = corpus.oracle_for(0)
        base = f(corpus.prompts[0].base).value
        cleaned = f(_drop(corpus.prompts[0].base, sorted(label.decoys))).value
        assert cleaned > base


class TestScoreType:
    def test_mean_consistency_enforced(self):
        with pytest.raises(ConfigError):
            Score(0.9, 2, (1, 0))

    def test_bounds(self):
        with pytest.raises(ConfigError):
            Score(1.5, 0, ())

    def test_from_detail(self):
        score = Score.from_detail((1, 0, 1, 1))
        assert score.value == 0.75
        assert score.n_queries == 4


class TestGroundTruthPairs:
    def test_masks_drop_exactly_removables(self):
        corpus = generate_synth_corpus(
            SynthCorpusSpec(n_prompts=2, decoys_per_prompt=2, seed=4)
        )
        pairs = corpus.ground_truth_pairs()
        assert len(pairs) == 2
        for pair, label, prompt in zip(pairs, corpus.labels, corpus.prompts):
            removed = {i for i, b in enumerate(pair.mask) if b == 0}
            assert removed == set(label.removable())
            assert pair.tokens == prompt.base.tokens

    def test_ideal_mask_scores_perfectly(self):
        corpus = generate_synth_corpus(
            SynthCorpusSpec(n_prompts=2, decoys_per_prompt=2, seed=4)
        )
        for p, pair in enumerate(corpus.ground_truth_pairs()):
            pruned = apply_mask(
                corpus.prompts[p].base, RetentionMask(pair.mask), "delete"
            )
            assert corpus.score_prompt(p, pruned).value == 1.0
