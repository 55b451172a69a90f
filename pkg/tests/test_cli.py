"""CLI subcommands: exit codes, determinism, config file handling."""

from __future__ import annotations

import json

import pytest

from maskpress.cli import main
from maskpress.core.records import read_pairs
from maskpress.oracle.synth import load_corpus


def _synth(tmp_path, seed=7, extra=()):
    out = tmp_path / f"corpus-{seed}"
    code = main(
        [
            "synth-corpus",
            "--out", str(out),
            "--seed", str(seed),
            "--n-prompts", "4",
            "--n-exemplars", "4",
            "--decoys-per-prompt", "2",
            *extra,
        ]
    )
    assert code == 0
    return out / "corpus.json"


class TestSynthCorpus:
    def test_same_seed_identical_files(self, tmp_path):
        a = _synth(tmp_path / "a", seed=7)
        b = _synth(tmp_path / "b", seed=7)
        assert a.read_bytes() == b.read_bytes()

    def test_missing_out_exits_2(self, capsys):
        assert main(["synth-corpus", "--seed", "1"]) == 2

    def test_loadback(self, tmp_path):
        path = _synth(tmp_path, seed=3)
        corpus = load_corpus(path)
        assert len(corpus.prompts) == 4
        assert corpus.prompts[0].shot_count == 4

    def test_label_pairs_emitted(self, tmp_path):
        pairs_path = tmp_path / "label-pairs.jsonl"
        _synth(tmp_path, seed=5, extra=("--label-pairs", str(pairs_path)))
        pairs = list(read_pairs(pairs_path))
        assert len(pairs) == 4
        assert all(0 in p.mask for p in pairs)


class TestBuildDataset:
    def test_end_to_end_and_reports(self, tmp_path, capsys):
        corpus_file = _synth(tmp_path, seed=11)
        out = tmp_path / "data"
        code = main(
            [
                "build-dataset",
                "--corpus", str(corpus_file),
                "--out", str(out),
                "--strategy", "fixed_k",
                "--k", "3",
                "--seed", "2",
            ]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        splits = json.loads((out / "splits.json").read_text())
        records = list(read_pairs(out / "pairs.jsonl"))
        n_ids = len(splits["train"]) + len(splits["validation"]) + len(splits["test"])
        assert n_ids == len(records)
        assert sum(report["stage_counts"].values()) == len(records)

    def test_bad_strategy_exits_2(self, tmp_path, capsys):
        corpus_file = _synth(tmp_path, seed=11)
        code = main(
            [
                "build-dataset",
                "--corpus", str(corpus_file),
                "--out", str(tmp_path / "x"),
                "--strategy", "bogus",
            ]
        )
        assert code == 2

    def test_missing_corpus_exits_3(self, tmp_path):
        code = main(
            [
                "build-dataset",
                "--corpus", str(tmp_path / "nope.json"),
                "--out", str(tmp_path / "x"),
            ]
        )
        assert code == 3


@pytest.fixture(scope="module")
def tiny_training(tmp_path_factory):
    """corpus + label pairs + a briefly trained checkpoint, shared per module."""
    root = tmp_path_factory.mktemp("cli-train")
    corpus_file = _synth(root, seed=19)
    pairs_path = root / "pairs.jsonl"
    assert main(
        [
            "synth-corpus",
            "--out", str(root / "corpus-19"),
            "--seed", "19",
            "--n-prompts", "4",
            "--n-exemplars", "4",
            "--decoys-per-prompt", "2",
            "--label-pairs", str(pairs_path),
        ]
    ) == 0
    ckpt = root / "model.bin"
    assert main(
        [
            "train",
            "--corpus", str(corpus_file),
            "--pairs", str(pairs_path),
            "--out", str(ckpt),
            "--epochs", "2",
            "--d-model", "16",
            "--n-layers", "1",
            "--n-heads", "2",
            "--max-seq-len", "128",
        ]
    ) == 0
    return root, corpus_file, pairs_path, ckpt


class TestTrainAndCompress:
    def test_checkpoint_written(self, tiny_training):
        _, _, _, ckpt = tiny_training
        assert ckpt.read_bytes()[:4] == b"MPRS"

    def test_compress_ratio_zero_with_unreachable_tau(self, tiny_training, capsys):
        root, corpus_file, _, ckpt = tiny_training
        code = main(
            [
                "compress",
                "--checkpoint", str(ckpt),
                "--corpus", str(corpus_file),
                "--prompt-index", "0",
                "--tau", "1.5",
                "--out", str(root / "compressed.json"),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "compression ratio: 0.0000" in out
        payload = json.loads((root / "compressed.json").read_text())
        assert payload["ratio"] == 0.0
        assert all(b == 1 for b in payload["mask"])

    def test_missing_checkpoint_exits_3(self, tiny_training):
        root, corpus_file, _, _ = tiny_training
        code = main(
            [
                "compress",
                "--checkpoint", str(root / "missing.bin"),
                "--corpus", str(corpus_file),
                "--prompt-index", "0",
            ]
        )
        assert code == 3

    def test_no_input_exits_2(self, tiny_training):
        _, corpus_file, _, ckpt = tiny_training
        code = main(
            [
                "compress",
                "--checkpoint", str(ckpt),
                "--corpus", str(corpus_file),
            ]
        )
        assert code == 2

    def test_grid_search_writes_csv(self, tiny_training):
        root, corpus_file, pairs_path, ckpt = tiny_training
        out = root / "table.csv"
        code = main(
            [
                "grid-search",
                "--checkpoint", str(ckpt),
                "--corpus", str(corpus_file),
                "--pairs", str(pairs_path),
                "--out", str(out),
                "--top-k-values", "2,4",
                "--tau-values", "0.001,0.1",
                "--steps", "3",
            ]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "top_k,tau,accuracy,mean_tokens"
        assert len(lines) == 5

    def test_analyze_writes_report(self, tiny_training):
        root, _, pairs_path, _ = tiny_training
        out = root / "categories.json"
        assert main(["analyze", "--pairs", str(pairs_path), "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert set(payload) == {
            "all_counts", "removed_counts", "all_freq", "removed_freq", "tv_distance",
        }


class TestTrainedCompress:
    def test_trained_model_keeps_essentials(self, trained_setup, tmp_path, capsys):
        code = main(
            [
                "compress",
                "--checkpoint", trained_setup.checkpoint_path,
                "--corpus", trained_setup.corpus_path,
                "--prompt-index", "210",
                "--out", str(tmp_path / "c.json"),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "compression ratio:" in out
        payload = json.loads((tmp_path / "c.json").read_text())
        assert payload["ratio"] > 0.0
        label = trained_setup.corpus.labels[210]
        for position in label.essential:
            assert payload["mask"][position] == 1


class TestConfigFile:
    def test_config_section_applies_and_flags_win(self, tmp_path, capsys):
        ini = tmp_path / "run.ini"
        ini.write_text("[synth-corpus]\nseed = 21\nn-prompts = 3\n")
        out_a = tmp_path / "a"
        code = main(
            ["--config", str(ini), "synth-corpus", "--out", str(out_a)]
        )
        assert code == 0
        resolved = capsys.readouterr().out
        assert "seed=21" in resolved
        assert "n-prompts=3" in resolved
        corpus = load_corpus(out_a / "corpus.json")
        assert len(corpus.prompts) == 3
        # an explicit flag overrides the file
        out_b = tmp_path / "b"
        main(
            ["--config", str(ini), "synth-corpus", "--out", str(out_b), "--n-prompts", "2"]
        )
        assert len(load_corpus(out_b / "corpus.json").prompts) == 2

    def test_unknown_key_rejected(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[synth-corpus]\nwat = 1\n")
        code = main(
            ["--config", str(ini), "synth-corpus", "--out", str(tmp_path / "x")]
        )
        assert code == 2

    def test_missing_config_file_exits_3(self, tmp_path):
        code = main(
            [
                "--config", str(tmp_path / "none.ini"),
                "synth-corpus",
                "--out", str(tmp_path / "x"),
            ]
        )
        assert code == 3
