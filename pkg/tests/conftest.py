"""Shared fixtures.

The session-scoped trained model is expensive (about a minute of CPU) and
backs the acceptance suite, the tuner tests, and the CLI compress tests, so
it is built once.  Its corpus/config choices are frozen here: 240 prompts of
6 exemplars with 2 decoys each, a 2-layer width-64 encoder, and the stock
training hyperparameters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

from maskpress.diffusion.loss import TrainConfig
from maskpress.diffusion.model import MaskModel, ModelArch
from maskpress.diffusion.training import train
from maskpress.oracle.synth import SynthCorpusSpec, generate_synth_corpus


@dataclass
class TrainedSetup:
    corpus: object
    model: MaskModel
    metrics: object
    train_pairs: list
    eval_pairs: list
    train_seconds: float
    checkpoint_path: str
    corpus_path: str


SESSION_SPEC = SynthCorpusSpec(
    n_exemplars=6,
    n_prompts=240,
    decoys_per_prompt=2,
    seed=42,
    fact_pool=9,
)
SESSION_ARCH = ModelArch(n_layers=2, d_model=64, n_heads=4, max_seq_len=256)
SESSION_TRAIN = TrainConfig(epochs=20, seed=1, max_seq_len=256)
N_TRAIN_PAIRS = 200


@pytest.fixture(scope="session")
def trained_setup(tmp_path_factory) -> TrainedSetup:
    corpus = generate_synth_corpus(SESSION_SPEC)
    pairs = corpus.ground_truth_pairs()
    train_pairs = pairs[:N_TRAIN_PAIRS]
    eval_pairs = pairs[N_TRAIN_PAIRS:]
    model = MaskModel(
        SESSION_ARCH,
        vocab_size=corpus.tokenizer.vocab_size,
        mask_id=corpus.tokenizer.mask_id,
        seed=1,
    )
    start = time.monotonic()
    model, metrics = train(model, train_pairs, SESSION_TRAIN, eval_pairs=eval_pairs)
    elapsed = time.monotonic() - start

    root = tmp_path_factory.mktemp("trained")
    checkpoint = root / "model.bin"
    model.save(checkpoint)
    corpus_file = root / "corpus.json"
    corpus.save(corpus_file)
    return TrainedSetup(
        corpus=corpus,
        model=model,
        metrics=metrics,
        train_pairs=train_pairs,
        eval_pairs=eval_pairs,
        train_seconds=elapsed,
        checkpoint_path=str(checkpoint),
        corpus_path=str(corpus_file),
    )


@pytest.fixture()
def small_corpus():
    return generate_synth_corpus(
        SynthCorpusSpec(n_exemplars=4, n_prompts=3, decoys_per_prompt=2, seed=5)
    )
