"""Command-line entry point.

Subcommands mirror the pipeline stages: synth-corpus, build-dataset, train,
compress, grid-search, analyze.  Every run resolves its settings from
built-in defaults, then an optional INI config file section named after the
subcommand, then explicit flags (flags win), and prints the resolved
configuration before doing any work.  Outputs are byte-identical for
identical config and seed.

Exit codes: 0 success, 2 configuration error, 3 missing artifact,
4 remote-oracle failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import re
import sys
from pathlib import Path

from maskpress.core.masks import apply_mask
from maskpress.core.records import read_pairs, write_pairs
from maskpress.diffusion.inference import InferenceConfig, compression_ratio, infer_mask
from maskpress.diffusion.loss import TrainConfig
from maskpress.diffusion.model import MaskModel, ModelArch
from maskpress.diffusion.training import train
from maskpress.errors import ConfigError, InvalidInput, MaskpressError, RemoteError
from maskpress.oracle.synth import SynthCorpusSpec, generate_synth_corpus, load_corpus
from maskpress.pipeline import (
    FilterRule,
    ShotConfig,
    analyze_token_categories,
    build_dataset,
)
from maskpress.taprune import TaConfig
from maskpress.tuner import GridSpec, ValidationItem, grid_search

_RECORD_PROMPT = re.compile(r"-p(\d{4})-")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_REMOTE = 4


def _parse_int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(v) for v in raw.split(",") if v.strip())


def _parse_float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(v) for v in raw.split(",") if v.strip())


# option name -> (type, default, help); None default means "required"
_OPTIONS: dict[str, dict[str, tuple]] = {
    "synth-corpus": {
        "out": (str, None, "output directory for corpus.json"),
        "seed": (int, 0, "corpus seed"),
        "n-prompts": (int, 8, "number of full prompts"),
        "n-exemplars": (int, 8, "shots per prompt"),
        "essential-per-shot": (int, 2, "code words per exemplar"),
        "redundant-per-shot": (int, 3, "filler tokens per exemplar"),
        "decoys-per-prompt": (int, 3, "conflicting decoy tokens per prompt"),
        "fact-pool": (int, 0, "fact pool size (0 = auto)"),
        "label-pairs": (str, "", "also write label-derived pairs to this file"),
    },
    "build-dataset": {
        "corpus": (str, None, "corpus.json path"),
        "out": (str, None, "output directory"),
        "strategy": (str, "variable_k", "shot strategy: fixed_k or variable_k"),
        "k": (int, 5, "shots kept by fixed_k"),
        "mean-target": (float, 10.3, "mean shots kept by variable_k"),
        "seed": (int, 0, "pipeline seed"),
        "delta": (float, 0.95, "threshold-accepting tolerance"),
        "max-passes": (int, 50, "max search passes"),
        "min-tokens": (int, 1, "minimum retained tokens"),
        "stride": (int, 2, "trajectory harvest stride"),
        "margin": (float, 0.0, "improvement margin for the filter"),
        "require-beats-full": (int, 1, "1 = pruned must beat the full prompt"),
        "require-beats-fewer": (int, 1, "1 = pruned must beat the fewer-shot prompt"),
        "jobs": (int, 1, "parallel prompt pipelines"),
    },
    "train": {
        "corpus": (str, None, "corpus.json path (provides the vocabulary)"),
        "pairs": (str, None, "pairs.jsonl path"),
        "out": (str, None, "checkpoint output path"),
        "splits": (str, "", "splits.json (train on train ids, eval on validation)"),
        "metrics": (str, "", "per-step metrics JSONL path"),
        "epochs": (int, 20, "training epochs"),
        "lr": (float, 1e-4, "learning rate"),
        "alpha": (float, 0.8, "loss balance ratio"),
        "lambda-mask": (float, 2.0, "anti-mask penalty coefficient"),
        "warmup-steps": (int, 100, "linear warmup steps"),
        "batch-size": (int, 1, "pairs per optimizer step"),
        "max-seq-len": (int, 512, "skip pairs longer than this"),
        "seed": (int, 0, "training seed"),
        "d-model": (int, 64, "model width"),
        "n-layers": (int, 2, "encoder layers"),
        "n-heads": (int, 4, "attention heads"),
    },
    "compress": {
        "checkpoint": (str, None, "model checkpoint path"),
        "corpus": (str, None, "corpus.json path (provides the tokenizer)"),
        "text": (str, "", "prompt text to compress"),
        "text-file": (str, "", "file with prompt text"),
        "prompt-index": (int, -1, "compress this corpus prompt"),
        "out": (str, "", "write pruned text + mask JSON here"),
        "steps": (int, 64, "denoising rounds"),
        "top-k": (int, 4, "rank threshold"),
        "tau": (float, 1e-3, "confidence threshold"),
        "per-step-cap": (int, 0, "max prunes per round (0 = unlimited)"),
    },
    "grid-search": {
        "checkpoint": (str, None, "model checkpoint path"),
        "corpus": (str, None, "corpus.json path"),
        "pairs": (str, None, "pairs.jsonl path"),
        "splits": (str, "", "splits.json; validation ids select the items"),
        "out": (str, None, "CSV table output path"),
        "top-k-values": (str, "2,3,4", "comma-separated k grid"),
        "tau-values": (str, "0.0001,0.001,0.01,0.1", "comma-separated tau grid"),
        "steps": (int, 64, "denoising rounds per cell"),
    },
    "analyze": {
        "pairs": (str, None, "pairs.jsonl path"),
        "out": (str, None, "category report JSON path"),
    },
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskpress",
        description="hierarchical prompt pruning and mask-model toolkit",
    )
    parser.add_argument("--config", default=None, help="INI config file")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, options in _OPTIONS.items():
        sp = sub.add_parser(command)
        for name, (kind, _default, help_text) in options.items():
            sp.add_argument(f"--{name}", type=kind, default=None, help=help_text)
    return parser


def _resolve(command: str, args: argparse.Namespace) -> dict:
    """defaults < config file section < explicit flags; unknown keys rejected."""
    options = _OPTIONS[command]
    resolved = {name: spec[1] for name, spec in options.items()}
    if args.config:
        ini = configparser.ConfigParser()
        read = ini.read(args.config)
        if not read:
            raise FileNotFoundError(f"config file {args.config!r} not found")
        if ini.has_section(command):
            for key, raw in ini.items(command):
                if key not in options:
                    raise ConfigError(
                        f"unknown key {key!r} in config section [{command}]"
                    )
                kind = options[key][0]
                resolved[key] = kind(raw)
    for name in options:
        value = getattr(args, name.replace("-", "_"))
        if value is not None:
            resolved[name] = value
    missing = [name for name, value in resolved.items() if value is None]
    if missing:
        raise ConfigError(f"missing required options: {', '.join(missing)}")
    print(
        "resolved config:",
        " ".join(f"{k}={resolved[k]}" for k in sorted(resolved)),
    )
    return resolved


def _load_corpus(path: str):
    if not Path(path).exists():
        raise FileNotFoundError(f"corpus file {path!r} not found")
    return load_corpus(path)


def cmd_synth_corpus(cfg: dict) -> int:
    spec = SynthCorpusSpec(
        n_exemplars=cfg["n-exemplars"],
        essential_per_shot=cfg["essential-per-shot"],
        redundant_per_shot=cfg["redundant-per-shot"],
        seed=cfg["seed"],
        n_prompts=cfg["n-prompts"],
        decoys_per_prompt=cfg["decoys-per-prompt"],
        fact_pool=cfg["fact-pool"] or None,
    )
    corpus = generate_synth_corpus(spec)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    corpus.save(out / "corpus.json")
    print(f"wrote {out / 'corpus.json'} with {len(corpus.prompts)} prompts")
    if cfg["label-pairs"]:
        n = write_pairs(cfg["label-pairs"], corpus.ground_truth_pairs())
        print(f"wrote {n} label-derived pairs to {cfg['label-pairs']}")
    return EXIT_OK


def cmd_build_dataset(cfg: dict) -> int:
    corpus = _load_corpus(cfg["corpus"])
    records, splits, report = build_dataset(
        corpus,
        cfg["out"],
        shot_cfg=ShotConfig(
            strategy=cfg["strategy"], k=cfg["k"], mean_target=cfg["mean-target"]
        ),
        ta_cfg=TaConfig(
            delta=cfg["delta"],
            max_passes=cfg["max-passes"],
            min_tokens=cfg["min-tokens"],
        ),
        filter_rule=FilterRule(
            require_beats_full=bool(cfg["require-beats-full"]),
            require_beats_fewer=bool(cfg["require-beats-fewer"]),
            margin=cfg["margin"],
        ),
        seed=cfg["seed"],
        stride=cfg["stride"],
        jobs=cfg["jobs"],
    )
    print(
        f"emitted {len(records)} records "
        f"({report.improved} improved prompts, "
        f"{report.trajectory_pairs} trajectory pairs)"
    )
    print(
        "splits:",
        " ".join(f"{k}={v}" for k, v in report.splits.items()),
    )
    return EXIT_OK


def _select_records(pairs_path: str, splits_path: str, split: str):
    if not Path(pairs_path).exists():
        raise FileNotFoundError(f"pairs file {pairs_path!r} not found")
    records = list(read_pairs(pairs_path))
    if not splits_path:
        return [r for r in records if r.stage != "full"], []
    if not Path(splits_path).exists():
        raise FileNotFoundError(f"splits file {splits_path!r} not found")
    with open(splits_path, "r", encoding="utf-8") as fh:
        splits = json.load(fh)
    by_id = {r.id: r for r in records}
    chosen = [by_id[i] for i in splits[split] if i in by_id]
    eval_records = [by_id[i] for i in splits["validation"] if i in by_id]
    return chosen, eval_records


def cmd_train(cfg: dict) -> int:
    corpus = _load_corpus(cfg["corpus"])
    train_records, eval_records = _select_records(cfg["pairs"], cfg["splits"], "train")
    if not train_records:
        raise ConfigError("no trainable records selected")
    arch = ModelArch(
        n_layers=cfg["n-layers"],
        d_model=cfg["d-model"],
        n_heads=cfg["n-heads"],
        max_seq_len=cfg["max-seq-len"],
    )
    model = MaskModel(
        arch,
        vocab_size=corpus.tokenizer.vocab_size,
        mask_id=corpus.tokenizer.mask_id,
        seed=cfg["seed"],
    )
    print(f"model parameters: {model.parameter_count}")
    train_cfg = TrainConfig(
        alpha=cfg["alpha"],
        lambda_mask=cfg["lambda-mask"],
        lr=cfg["lr"],
        warmup_steps=cfg["warmup-steps"],
        epochs=cfg["epochs"],
        max_seq_len=cfg["max-seq-len"],
        batch_size=cfg["batch-size"],
        seed=cfg["seed"],
    )
    _, metrics = train(
        model,
        train_records,
        train_cfg,
        eval_pairs=eval_records or None,
        metrics_path=cfg["metrics"] or None,
    )
    model.save(cfg["out"])
    last = metrics.epochs[-1]
    line = f"trained {train_cfg.epochs} epochs, final loss {last.mean_loss:.4f}"
    if last.mask_f1 is not None:
        line += f", mask F1 {last.mask_f1:.4f}, removed recall {last.removed_recall:.4f}"
    print(line)
    print(f"wrote checkpoint {cfg['out']}")
    return EXIT_OK


def _load_model(path: str) -> MaskModel:
    if not Path(path).exists():
        raise FileNotFoundError(f"checkpoint {path!r} not found")
    return MaskModel.load(path)


def cmd_compress(cfg: dict) -> int:
    model = _load_model(cfg["checkpoint"])
    corpus = _load_corpus(cfg["corpus"])
    if cfg["text"]:
        seq = corpus.tokenizer.encode(cfg["text"])
    elif cfg["text-file"]:
        if not Path(cfg["text-file"]).exists():
            raise FileNotFoundError(f"text file {cfg['text-file']!r} not found")
        seq = corpus.tokenizer.encode(
            Path(cfg["text-file"]).read_text(encoding="utf-8")
        )
    elif cfg["prompt-index"] >= 0:
        try:
            seq = corpus.prompts[cfg["prompt-index"]].base
        except IndexError as exc:
            raise ConfigError(
                f"corpus has no prompt {cfg['prompt-index']}"
            ) from exc
    else:
        raise ConfigError("one of --text, --text-file, --prompt-index is required")
    inference_cfg = InferenceConfig(
        steps=cfg["steps"],
        top_k=cfg["top-k"],
        tau=cfg["tau"],
        per_step_cap=cfg["per-step-cap"] or None,
    )
    mask, trace = infer_mask(model, seq, inference_cfg)
    pruned = apply_mask(seq, mask, "delete")
    ratio = compression_ratio(mask)
    print(f"compression ratio: {ratio:.4f} "
          f"({mask.retained_count()}/{mask.length} tokens retained, "
          f"{trace.rounds_run()} rounds)")
    if cfg["out"]:
        payload = {
            "text": seq.source_text,
            "pruned_text": pruned.source_text,
            "mask": list(mask.bits),
            "ratio": ratio,
            "retained": mask.retained_count(),
            "total": mask.length,
        }
        with open(cfg["out"], "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, ensure_ascii=False, indent=1)
            fh.write("\n")
        print(f"wrote {cfg['out']}")
    return EXIT_OK


def validation_items_from_records(corpus, records) -> list[ValidationItem]:
    """One item per distinct prompt referenced by the records."""
    items = []
    seen = set()
    for record in records:
        match = _RECORD_PROMPT.search(record.id)
        if not match:
            raise ConfigError(f"record id {record.id!r} names no prompt index")
        index = int(match.group(1))
        if index in seen:
            continue
        seen.add(index)
        items.append(
            ValidationItem(
                id=f"p{index:04d}",
                seq=corpus.prompts[index].base,
                oracle=corpus.oracle_for(index),
            )
        )
    return items


def cmd_grid_search(cfg: dict) -> int:
    model = _load_model(cfg["checkpoint"])
    corpus = _load_corpus(cfg["corpus"])
    records, eval_records = _select_records(cfg["pairs"], cfg["splits"], "validation")
    pool = eval_records or records
    if not pool:
        raise ConfigError("no validation records selected")
    items = validation_items_from_records(corpus, pool)
    grid = GridSpec(
        top_k_values=_parse_int_list(cfg["top-k-values"]),
        tau_values=_parse_float_list(cfg["tau-values"]),
    )
    table, selected = grid_search(
        model,
        items,
        grid,
        base_cfg=InferenceConfig(steps=cfg["steps"]),
        csv_path=cfg["out"],
    )
    print(f"evaluated {len(table)} cells over {len(items)} prompts")
    print(
        f"selected top_k={selected.top_k} tau={selected.tau:.6f} "
        f"(wrote {cfg['out']})"
    )
    return EXIT_OK


def cmd_analyze(cfg: dict) -> int:
    if not Path(cfg["pairs"]).exists():
        raise FileNotFoundError(f"pairs file {cfg['pairs']!r} not found")
    records = list(read_pairs(cfg["pairs"]))
    report = analyze_token_categories(records)
    with open(cfg["out"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_dict(), fh, ensure_ascii=False, indent=1)
        fh.write("\n")
    tv = "null" if report.tv_distance is None else f"{report.tv_distance:.4f}"
    print(f"analyzed {len(records)} records, tv distance {tv}")
    print(f"wrote {cfg['out']}")
    return EXIT_OK


_HANDLERS = {
    "synth-corpus": cmd_synth_corpus,
    "build-dataset": cmd_build_dataset,
    "train": cmd_train,
    "compress": cmd_compress,
    "grid-search": cmd_grid_search,
    "analyze": cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args.command, args)
        return _HANDLERS[args.command](cfg)
    except (ConfigError, InvalidInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except RemoteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except MaskpressError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
