"""Performance functions: synthetic ground-truth scorer and remote evaluator."""

from maskpress.oracle.remote import (
    EndpointConfig,
    answers_match,
    extract_final_answer,
    llm_exact_match,
    normalize_answer,
)
from maskpress.oracle.synth import (
    DEFAULT_FILLER_VOCAB,
    REDUNDANCY_KINDS,
    Fact,
    Score,
    SynthCorpus,
    SynthCorpusSpec,
    SynthLabel,
    SynthQuery,
    generate_synth_corpus,
    load_corpus,
    synth_score,
)

__all__ = [
    "DEFAULT_FILLER_VOCAB",
    "EndpointConfig",
    "Fact",
    "REDUNDANCY_KINDS",
    "Score",
    "SynthCorpus",
    "SynthCorpusSpec",
    "SynthLabel",
    "SynthQuery",
    "answers_match",
    "extract_final_answer",
    "generate_synth_corpus",
    "llm_exact_match",
    "load_corpus",
    "normalize_answer",
    "synth_score",
]
