"""Remote exact-match evaluator against a local OpenAI-compatible stub."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from maskpress.errors import ConfigError, ProtocolError, RemoteError
from maskpress.oracle.remote import (
    EndpointConfig,
    answers_match,
    extract_final_answer,
    llm_exact_match,
    normalize_answer,
)


class _Stub:
    """Scriptable chat-completions endpoint."""

    def __init__(self):
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        self.fail_next = 0  # 500s to serve before answering
        self.malformed = False
        self.answer = lambda content: "42"

    def make_handler(stub):
        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                stub.requests.append({"path": self.path, "body": body})
                stub.headers.append(dict(self.headers))
                if stub.fail_next > 0:
                    stub.fail_next -= 1
                    self.send_response(500)
                    self.end_headers()
                    return
                if stub.malformed:
                    payload = {"nope": True}
                else:
                    content = body["messages"][0]["content"]
                    payload = {
                        "choices": [
                            {"message": {"role": "assistant",
                                         "content": stub.answer(content)}}
                        ]
                    }
                data = json.dumps(payload).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        return Handler


@pytest.fixture()
def stub_server():
    stub = _Stub()
    server = ThreadingHTTPServer(("127.0.0.1", 0), stub.make_handler())
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    cfg = EndpointConfig(
        base_url=f"http://127.0.0.1:{server.server_address[1]}",
        api_key="secret-key",
        model="stub-model",
        backoff_base=0.01,
        concurrency=4,
    )
    yield stub, cfg
    server.shutdown()


class TestNormalization:
    def test_sentence_with_number_matches(self):
        assert answers_match("The answer is 42.", "42")

    def test_wrong_number_no_match(self):
        assert not answers_match("41", "42")

    def test_numeric_canonicalization(self):
        assert normalize_answer("1,234") == "1234"
        assert normalize_answer(" 42. ") == "42"
        assert normalize_answer("42.0") == "42"
        assert normalize_answer("Paris!") == "paris"

    def test_extraction_takes_last_number(self):
        assert extract_final_answer("first 3 then 7, final 21") == "21"
        assert extract_final_answer("no numbers at all") == "no numbers at all"

    def test_case_insensitive_text(self):
        assert answers_match("  PARIS. ", "paris")


class TestWireProtocol:
    def test_scores_and_protocol_shape(self, stub_server):
        stub, cfg = stub_server
        stub.answer = lambda content: "42" if "good" in content else "0"
        score = llm_exact_match(
            "prompt text",
            [("good question", "42"), ("bad question", "42"), ("good again", "42")],
            cfg,
        )
        assert score.n_queries == 3
        assert score.value == pytest.approx(2 / 3)
        body = stub.requests[0]["body"]
        assert stub.requests[0]["path"] == "/v1/chat/completions"
        assert body["model"] == "stub-model"
        assert body["temperature"] == 0
        assert body["messages"][0]["role"] == "user"
        assert "prompt text" in body["messages"][0]["content"]
        auth = stub.headers[0].get("Authorization")
        assert auth == "Bearer secret-key"

    def test_retries_then_succeeds(self, stub_server):
        stub, cfg = stub_server
        stub.fail_next = 2
        score = llm_exact_match("p", [("q", "42")], cfg)
        assert score.value == 1.0
        assert len(stub.requests) == 3

    def test_remote_error_after_max_retries(self, stub_server):
        stub, cfg = stub_server
        stub.fail_next = 99
        with pytest.raises(RemoteError) as err:
            llm_exact_match("p", [("q", "42")], cfg)
        assert err.value.retries == cfg.max_retries + 1

    def test_unreachable_endpoint(self):
        cfg = EndpointConfig(
            base_url="http://127.0.0.1:9",  # discard port, nothing listens
            backoff_base=0.01,
            max_retries=1,
            timeout=0.5,
        )
        with pytest.raises(RemoteError):
            llm_exact_match("p", [("q", "42")], cfg)

    def test_malformed_response(self, stub_server):
        stub, cfg = stub_server
        stub.malformed = True
        with pytest.raises(ProtocolError):
            llm_exact_match("p", [("q", "42")], cfg)

    def test_empty_eval_set_rejected(self, stub_server):
        _, cfg = stub_server
        with pytest.raises(ConfigError):
            llm_exact_match("p", [], cfg)

    def test_env_config(self, monkeypatch):
        monkeypatch.setenv("MASKPRESS_API_BASE", "http://example.test")
        monkeypatch.setenv("MASKPRESS_API_KEY", "abc")
        cfg = EndpointConfig.from_env()
        assert cfg.base_url == "http://example.test"
        assert cfg.api_key == "abc"
        monkeypatch.delenv("MASKPRESS_API_BASE")
        with pytest.raises(ConfigError):
            EndpointConfig.from_env()
