"""Grid search: table shape, CSV format, selection rule, resumability."""

from __future__ import annotations

import csv

import pytest

from maskpress.diffusion.inference import InferenceConfig
from maskpress.diffusion.model import MaskModel, ModelArch
from maskpress.errors import ConfigError
from maskpress.oracle.synth import SynthCorpusSpec, generate_synth_corpus
from maskpress.tuner import (
    CSV_HEADER,
    GridCell,
    GridSpec,
    ValidationItem,
    grid_search,
    select_cell,
)


@pytest.fixture()
def small_items():
    corpus = generate_synth_corpus(
        SynthCorpusSpec(n_exemplars=3, n_prompts=3, decoys_per_prompt=1, seed=17)
    )
    items = [
        ValidationItem(
            id=f"p{i:04d}", seq=corpus.prompts[i].base, oracle=corpus.oracle_for(i)
        )
        for i in range(3)
    ]
    model = MaskModel(
        ModelArch(n_layers=1, d_model=16, n_heads=2, max_seq_len=128),
        vocab_size=corpus.tokenizer.vocab_size,
        mask_id=corpus.tokenizer.mask_id,
        seed=0,
    )
    return model, items


FAST = InferenceConfig(steps=3)


class TestGridSpec:
    def test_defaults_match_search_grid(self):
        grid = GridSpec()
        assert grid.top_k_values == (2, 3, 4)
        assert grid.tau_values == (1e-4, 1e-3, 1e-2, 1e-1)

    def test_validation(self):
        with pytest.raises(ConfigError):
            GridSpec(top_k_values=())
        with pytest.raises(ConfigError):
            GridSpec(tau_values=(-0.1,))


class TestSelection:
    def test_single_cell(self, small_items):
        model, items = small_items
        grid = GridSpec(top_k_values=(3,), tau_values=(1e-2,))
        table, selected = grid_search(model, items, grid, base_cfg=FAST)
        assert len(table) == 1
        assert (selected.top_k, selected.tau) == (3, 1e-2)

    def test_tie_break_chain(self):
        cells = [
            GridCell(2, 1e-2, 0.9, 50.0),
            GridCell(4, 1e-3, 0.9, 40.0),   # fewer tokens wins at same accuracy
            GridCell(3, 1e-3, 0.8, 10.0),
        ]
        assert select_cell(cells) == cells[1]
        cells = [
            GridCell(4, 1e-3, 0.9, 40.0),
            GridCell(2, 1e-2, 0.9, 40.0),   # same tokens: smaller k wins
        ]
        assert select_cell(cells) == cells[1]
        cells = [
            GridCell(2, 1e-3, 0.9, 40.0),
            GridCell(2, 1e-2, 0.9, 40.0),   # same k: larger tau wins
        ]
        assert select_cell(cells) == cells[1]

    def test_selected_equals_table_argmax(self, small_items):
        model, items = small_items
        table, selected = grid_search(model, items, GridSpec(), base_cfg=FAST)
        best = select_cell(table)
        assert (selected.top_k, selected.tau) == (best.top_k, best.tau)
        # exhaustive re-scan: nothing in the table beats the selected cell
        for cell in table:
            assert (
                (-cell.accuracy, cell.mean_tokens, cell.top_k, -cell.tau)
                >= (-best.accuracy, best.mean_tokens, best.top_k, -best.tau)
            )


class TestCsv:
    def test_row_count_and_format(self, small_items, tmp_path):
        model, items = small_items
        path = tmp_path / "table.csv"
        grid = GridSpec(top_k_values=(2, 3), tau_values=(1e-3, 1e-2))
        table, _ = grid_search(model, items, grid, base_cfg=FAST, csv_path=path)
        assert len(table) == 4
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == CSV_HEADER
        assert len(rows) == 5
        for row in rows[1:]:
            assert "." in row[1] and len(row[1].split(".")[1]) == 6
            assert len(row[2].split(".")[1]) == 6
            assert len(row[3].split(".")[1]) == 6

    def test_resume_skips_existing_cells(self, small_items, tmp_path):
        model, items = small_items
        path = tmp_path / "table.csv"
        grid = GridSpec(top_k_values=(2, 3), tau_values=(1e-3,))
        # pre-seed one cell with a sentinel value the search cannot produce
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            writer.writerow([2, f"{1e-3:.6f}", f"{0.123456:.6f}", f"{9.0:.6f}"])
        table, _ = grid_search(model, items, grid, base_cfg=FAST, csv_path=path)
        preserved = [c for c in table if c.top_k == 2][0]
        assert preserved.accuracy == pytest.approx(0.123456)
        assert preserved.mean_tokens == pytest.approx(9.0)
        computed = [c for c in table if c.top_k == 3][0]
        assert computed.accuracy != pytest.approx(0.123456)

    def test_rerun_identical_bytes(self, small_items, tmp_path):
        model, items = small_items
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        grid = GridSpec(top_k_values=(2, 4), tau_values=(1e-3, 1e-1))
        grid_search(model, items, grid, base_cfg=FAST, csv_path=a)
        grid_search(model, items, grid, base_cfg=FAST, csv_path=b)
        assert a.read_bytes() == b.read_bytes()

    def test_empty_items_rejected(self, small_items):
        model, _ = small_items
        with pytest.raises(ConfigError):
            grid_search(model, [], GridSpec())
