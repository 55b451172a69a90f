"""Threshold-accepting token pruning with resumable trajectories.

The search deletes one token at a time.  A deletion that beats the best
score seen so far is accepted into both the working prompt and the optimal
prompt; a deletion whose score stays above ``best * delta`` is accepted into
the working prompt only.  Passes over the remaining tokens repeat until one
full pass accepts nothing.

Within a pass the scan walks the positions retained at pass start from left
to right; deletions never skip or revisit a position.  Checkpoints persist
at pass granularity: an interrupted pass is re-run from its start state,
which reproduces the uninterrupted run exactly because the search is
deterministic for a fixed oracle.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Collection

from maskpress.core.masks import apply_mask
from maskpress.core.types import RetentionMask, TokenSeq
from maskpress.errors import ConfigError, ResumeError, TaError
from maskpress.oracle.synth import Score

ACCEPT_IMPROVE = "accepted_improve"
ACCEPT_THRESHOLD = "accepted_threshold"
PASS_END = "pass_end"

Oracle = Callable[[TokenSeq], Score]


@dataclass(frozen=True)
class TaConfig:
    delta: float = 0.95
    max_passes: int = 50
    min_tokens: int = 1
    protect_query: bool = True

    def __post_init__(self):
        if not (0.0 < self.delta <= 1.0):
            raise ConfigError("delta must lie in (0, 1]")
        if self.min_tokens < 1:
            raise ConfigError("min_tokens must be >= 1")
        if self.max_passes < 1:
            raise ConfigError("max_passes must be >= 1")


@dataclass(frozen=True)
class TaState:
    mask: RetentionMask
    score: Score
    kind: str
    pass_index: int


@dataclass(frozen=True)
class TaTrajectory:
    """Ordered accepted states of one search run."""

    init_mask: RetentionMask
    states: tuple[TaState, ...]
    optimal_index: int  # -1 when no deletion ever improved on the baseline
    baseline: Score
    converged_passes: int

    @property
    def optimal_mask(self) -> RetentionMask:
        if self.optimal_index < 0:
            return self.init_mask
        return self.states[self.optimal_index].mask

    @property
    def optimal_score(self) -> Score:
        if self.optimal_index < 0:
            return self.baseline
        return self.states[self.optimal_index].score

    def improve_states(self) -> list[TaState]:
        return [s for s in self.states if s.kind == ACCEPT_IMPROVE]


def prompt_fingerprint(prompt: TokenSeq) -> str:
    digest = hashlib.sha256()
    digest.update(prompt.source_text.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(",".join(str(t) for t in prompt.tokens).encode("ascii"))
    return digest.hexdigest()


class _CheckpointWriter:
    """Append-only JSONL writer, flushed per line so kills leave a prefix."""

    def __init__(self, path: str | Path | None):
        self._fh = None
        if path is not None:
            self._fh = open(path, "a", encoding="utf-8", newline="\n")

    @classmethod
    def fresh(cls, path: str | Path | None, header: dict) -> "_CheckpointWriter":
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(header) + "\n")
        return cls(path)

    def line(self, record: dict) -> None:
        if self._fh is None:
            return
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class _Search:
    """Mutable search state shared by fresh runs and resumed runs."""

    def __init__(
        self,
        prompt: TokenSeq,
        init_mask: RetentionMask,
        f: Oracle,
        cfg: TaConfig,
        protected: Collection[int],
    ):
        if init_mask.length != len(prompt):
            raise ConfigError("init_mask length does not match prompt")
        self.prompt = prompt
        self.init_mask = init_mask
        self.f = f
        self.cfg = cfg
        self.protected = frozenset(protected) if cfg.protect_query else frozenset()
        self.cache: dict[tuple[int, ...], Score] = {}
        self.states: list[TaState] = []
        self.current = init_mask
        self.baseline = self.evaluate(init_mask)
        self.best = self.baseline
        self.optimal_index = -1
        self.passes_done = 0

    def evaluate(self, mask: RetentionMask) -> Score:
        key = mask.bits
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        try:
            score = self.f(apply_mask(self.prompt, mask, "delete"))
        except Exception as exc:
            raise TaError(
                f"oracle failed while scoring a candidate: {exc}",
                trajectory=self.snapshot(),
            ) from exc
        self.cache[key] = score
        return score

    def snapshot(self) -> TaTrajectory:
        return TaTrajectory(
            init_mask=self.init_mask,
            states=tuple(self.states),
            optimal_index=self.optimal_index,
            baseline=self.baseline,
            converged_passes=self.passes_done,
        )

    def run_pass(self, pass_index: int, writer: _CheckpointWriter) -> bool:
        """One full scan; returns True when something was accepted."""
        accepted_any = False
        for pos in self.current.retained_positions():
            if pos in self.protected:
                continue
            if self.current.retained_count() <= self.cfg.min_tokens:
                break
            candidate = self.current.drop(pos)
            score = self.evaluate(candidate)
            if score.value > self.best.value:
                kind = ACCEPT_IMPROVE
                self.best = score
                self.current = candidate
                self.states.append(TaState(candidate, score, kind, pass_index))
                self.optimal_index = len(self.states) - 1
            elif score.value > self.best.value * self.cfg.delta:
                kind = ACCEPT_THRESHOLD
                self.current = candidate
                self.states.append(TaState(candidate, score, kind, pass_index))
            else:
                continue
            accepted_any = True
            writer.line(
                {
                    "mask": list(candidate.bits),
                    "score": score.value,
                    "kind": kind,
                    "pass": pass_index,
                }
            )
        return accepted_any

    def run(self, first_pass: int, writer: _CheckpointWriter) -> TaTrajectory:
        try:
            pass_index = first_pass
            while pass_index < self.cfg.max_passes:
                accepted = self.run_pass(pass_index, writer)
                current_score = self.evaluate(self.current)
                writer.line(
                    {
                        "mask": list(self.current.bits),
                        "score": current_score.value,
                        "kind": PASS_END,
                        "pass": pass_index,
                    }
                )
                self.passes_done = pass_index + 1
                pass_index += 1
                if not accepted:
                    break
        finally:
            writer.close()
        return self.snapshot()


def ta_prune(
    prompt: TokenSeq,
    init_mask: RetentionMask,
    f: Oracle,
    cfg: TaConfig | None = None,
    protected: Collection[int] = (),
    checkpoint_path: str | Path | None = None,
) -> TaTrajectory:
    """Run the threshold-accepting search from ``init_mask``.

    ``protected`` positions (the query, typically) are never candidates when
    ``cfg.protect_query`` is set.  With a checkpoint path, completed passes
    are persisted and the run can be continued through :func:`resume`.
    """
    cfg = cfg or TaConfig()
    search = _Search(prompt, init_mask, f, cfg, protected)
    header = {
        "prompt_sha256": prompt_fingerprint(prompt),
        "delta": cfg.delta,
        "baseline": search.baseline.value,
    }
    writer = _CheckpointWriter.fresh(checkpoint_path, header)
    return search.run(0, writer)


def _parse_checkpoint(path: str | Path) -> tuple[dict, list[dict]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [json.loads(l) for l in fh if l.strip()]
    except (OSError, ValueError) as exc:
        raise ResumeError(f"unreadable checkpoint: {exc}") from exc
    if not lines or "prompt_sha256" not in lines[0]:
        raise ResumeError("checkpoint has no header line")
    header, records = lines[0], lines[1:]
    for record in records:
        if not {"mask", "score", "kind", "pass"} <= set(record):
            raise ResumeError("checkpoint line missing required fields")
    return header, records


def resume(
    traj_file: str | Path,
    prompt: TokenSeq,
    f: Oracle,
    cfg: TaConfig | None = None,
    protected: Collection[int] = (),
    init_mask: RetentionMask | None = None,
) -> TaTrajectory:
    """Continue a checkpointed run; equivalent to the uninterrupted search.

    Lines after the last completed pass are dropped and that pass is re-run
    from its recorded start state.
    """
    cfg = cfg or TaConfig()
    init_mask = init_mask or RetentionMask.all_ones(len(prompt))
    header, records = _parse_checkpoint(traj_file)
    if header["prompt_sha256"] != prompt_fingerprint(prompt):
        raise ResumeError("checkpoint belongs to a different prompt")
    if abs(header["delta"] - cfg.delta) > 1e-12:
        raise ResumeError("checkpoint was produced with a different delta")

    last_end = -1
    for i, record in enumerate(records):
        if record["kind"] == PASS_END:
            last_end = i
    complete = records[: last_end + 1]

    search = _Search(prompt, init_mask, f, cfg, protected)
    if abs(search.baseline.value - header["baseline"]) > 1e-12:
        raise ResumeError("oracle disagrees with the checkpointed baseline")

    next_pass = 0
    converged = False
    accepted_in_pass = False
    for record in complete:
        mask = RetentionMask(tuple(record["mask"]))
        if record["kind"] == PASS_END:
            converged = not accepted_in_pass
            accepted_in_pass = False
            next_pass = record["pass"] + 1
            continue
        accepted_in_pass = True
        score = Score(record["score"], 0, ())
        search.states.append(TaState(mask, score, record["kind"], record["pass"]))
        search.current = mask
        if record["kind"] == ACCEPT_IMPROVE:
            search.best = score
            search.optimal_index = len(search.states) - 1
    search.passes_done = next_pass

    # rewrite the file without any partial-pass suffix, then continue
    with open(traj_file, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header) + "\n")
        for record in complete:
            fh.write(json.dumps(record) + "\n")
    if converged or next_pass >= cfg.max_passes:
        return search.snapshot()
    writer = _CheckpointWriter(traj_file)
    return search.run(next_pass, writer)


def harvest_intermediates(
    traj: TaTrajectory, stride: int
) -> list[tuple[RetentionMask, Score]]:
    """Every stride-th improving state plus the final optimal one, deduped."""
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    improves = traj.improve_states()
    if not improves:
        return []
    picked = list(range(0, len(improves), stride))
    if picked[-1] != len(improves) - 1:
        picked.append(len(improves) - 1)
    return [(improves[i].mask, improves[i].score) for i in picked]
