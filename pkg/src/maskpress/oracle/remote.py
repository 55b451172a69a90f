"""Remote exact-match evaluator over an OpenAI-compatible chat endpoint.

Requests go to ``{base_url}/v1/chat/completions`` with temperature 0; the
answer is read from ``choices[0].message.content``.  Matching uses a frozen
normalization: trim, lowercase, strip trailing punctuation, and canonicalize
numbers, comparing the last numeric token of the reply (or the whole reply
when it has no number) against the gold answer.
"""

from __future__ import annotations

import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import requests

from maskpress.errors import ConfigError, ProtocolError, RemoteError
from maskpress.oracle.synth import Score

_NUMBER = re.compile(r"-?\d[\d,]*(?:\.\d+)?")
_TRAILING_PUNCT = ".,!?;:"


@dataclass(frozen=True)
class EndpointConfig:
    """Connection and retry settings for the remote evaluator."""

    base_url: str
    api_key: str = ""
    model: str = "default"
    max_tokens: int = 256
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    concurrency: int = 8

    @classmethod
    def from_env(cls, **overrides) -> "EndpointConfig":
        base = os.environ.get("MASKPRESS_API_BASE", "")
        if not base and "base_url" not in overrides:
            raise ConfigError("MASKPRESS_API_BASE is not set")
        kwargs = {
            "base_url": base,
            "api_key": os.environ.get("MASKPRESS_API_KEY", ""),
        }
        kwargs.update(overrides)
        return cls(**kwargs)


def normalize_answer(text: str) -> str:
    """Trim, lowercase, strip trailing punctuation, canonicalize numbers."""
    out = text.strip().lower().rstrip(_TRAILING_PUNCT).strip()
    compact = out.replace(",", "")
    try:
        value = float(compact)
    except ValueError:
        return out
    if value == int(value):
        return str(int(value))
    return repr(value)


def extract_final_answer(content: str) -> str:
    """Last numeric token of the reply, or the whole reply without numbers."""
    matches = _NUMBER.findall(content)
    if matches:
        return matches[-1]
    return content


def answers_match(content: str, gold: str) -> bool:
    return normalize_answer(extract_final_answer(content)) == normalize_answer(gold)


def _post_once(cfg: EndpointConfig, payload: dict) -> requests.Response:
    headers = {"Content-Type": "application/json"}
    if cfg.api_key:
        headers["Authorization"] = f"Bearer {cfg.api_key}"
    url = cfg.base_url.rstrip("/") + "/v1/chat/completions"
    return requests.post(url, json=payload, headers=headers, timeout=cfg.timeout)


def _complete(cfg: EndpointConfig, content: str) -> str:
    payload = {
        "model": cfg.model,
        "messages": [{"role": "user", "content": content}],
        "temperature": 0,
        "max_tokens": cfg.max_tokens,
    }
    attempts = 0
    while True:
        try:
            response = _post_once(cfg, payload)
        except requests.RequestException as exc:
            attempts += 1
            if attempts > cfg.max_retries:
                raise RemoteError(
                    f"endpoint unreachable after {attempts} attempts: {exc}",
                    retries=attempts,
                ) from exc
            time.sleep(cfg.backoff_base * 2 ** (attempts - 1))
            continue
        if response.status_code in (429, 500, 502, 503, 504):
            attempts += 1
            if attempts > cfg.max_retries:
                raise RemoteError(
                    f"endpoint kept failing with {response.status_code} "
                    f"after {attempts} attempts",
                    retries=attempts,
                )
            time.sleep(cfg.backoff_base * 2 ** (attempts - 1))
            continue
        if response.status_code != 200:
            raise ProtocolError(f"unexpected status {response.status_code}")
        try:
            body = response.json()
            return body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed completion payload: {exc}") from exc


def llm_exact_match(
    prompt_text: str,
    eval_set: list[tuple[str, str]],
    endpoint_cfg: EndpointConfig,
) -> Score:
    """Exact-match accuracy of the model on (question, gold) pairs.

    Questions are appended to the prompt and issued with bounded in-flight
    concurrency; aggregation is order-independent, so the score is
    deterministic given the response set.
    """
    if not eval_set:
        raise ConfigError("eval_set must be non-empty")

    def ask(item: tuple[str, str]) -> int:
        question, gold = item
        content = prompt_text + "\n\n" + question
        reply = _complete(endpoint_cfg, content)
        return 1 if answers_match(reply, gold) else 0

    with ThreadPoolExecutor(max_workers=max(1, endpoint_cfg.concurrency)) as pool:
        detail = tuple(pool.map(ask, eval_set))
    return Score.from_detail(detail)
