"""Reward-scoring backends: stub fixed points, batching, retries, HTTP wire format."""
import http.server
import json
import math
import socket
import threading

import pytest
from hypothesis import given, strategies as st

from cureval.errors import ConfigError
from cureval.reward import (
    ENV_TOKEN,
    ENV_URL,
    HttpScorer,
    ProtocolError,
    ScoreRequest,
    ScoreResponse,
    ScorerBackend,
    StubScorer,
    TransportError,
    logistic,
    score_batch,
    stub_score,
)


def req(i, question="感冒了怎么办", answer="多喝水"):
    return ScoreRequest(str(i), question, answer)


# -- logistic normalization --

def test_logistic_fixed_points():
    assert logistic(0.0) == 0.5
    assert logistic(1000.0) == 1.0
    assert logistic(-1000.0) == 0.0


@given(st.floats(min_value=-50, max_value=50))
def test_logistic_symmetry(x):
    assert math.isclose(logistic(x) + logistic(-x), 1.0, abs_tol=1e-12)


@given(st.floats(min_value=-50, max_value=50), st.floats(min_value=0, max_value=10))
def test_logistic_monotone(x, step):
    assert logistic(x) <= logistic(x + step)


# -- request/response invariants --

def test_request_rejects_empty_fields():
    with pytest.raises(ValueError):
        ScoreRequest("a", "", "多喝水")
    with pytest.raises(ValueError):
        ScoreRequest("a", "感冒", "")


def test_response_rejects_out_of_range_score():
    with pytest.raises(ValueError):
        ScoreResponse("a", 1.5)
    with pytest.raises(ValueError):
        ScoreResponse("a", -0.1)


def test_response_checks_raw_consistency():
    ScoreResponse("a", 0.5, raw=0.0)
    with pytest.raises(ValueError):
        ScoreResponse("a", 0.7, raw=0.0)


# -- deterministic stub --

def test_stub_identical_and_disjoint_texts():
    assert stub_score("多喝水", "多喝水") == 1.0
    assert stub_score("多喝水", "吃感冒药") == 0.0
    assert stub_score("", "多喝水") == 0.0
    assert stub_score("多喝水", "") == 0.0


def test_stub_hand_computed_f1():
    # overlap 3 of (answer 4, question 3) tokens: F1 = 2*3/(4+3)
    assert stub_score("多喝水", "多喝茶水") == pytest.approx(6 / 7)


@given(st.text(alphabet="水冷热茶药", min_size=1, max_size=12),
       st.text(alphabet="水冷热茶药", min_size=1, max_size=12))
def test_stub_bounded_and_symmetric(q, a):
    s = stub_score(q, a)
    assert 0.0 <= s <= 1.0
    assert s == stub_score(a, q)
    assert stub_score(q, q) == 1.0


def test_stub_scorer_batches():
    out = StubScorer().score([req("a"), req("b", answer="感冒了怎么办")])
    assert [r.id for r in out] == ["a", "b"]
    assert out[0].score == pytest.approx(stub_score("感冒了怎么办", "多喝水"))
    assert out[1].score == 1.0


# -- score_batch: alignment, retries, backoff --

class Flaky(ScorerBackend):
    """Fails the first ``failures`` calls with a transport error."""

    def __init__(self, failures, score=0.9):
        self.failures = failures
        self.fixed = score
        self.calls = 0

    def score(self, batch):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError("synthetic outage")
        return [ScoreResponse(r.id, self.fixed) for r in batch]


class Scripted(ScorerBackend):
    """Replies with a canned response list regardless of the batch."""

    def __init__(self, responses):
        self.responses = responses

    def score(self, batch):
        return list(self.responses)


def test_empty_batch_short_circuits():
    class Bomb(ScorerBackend):
        def score(self, batch):
            raise AssertionError("should not be called")

    assert score_batch([], Bomb()) == []


def test_batch_size_limit():
    backend = StubScorer()
    backend.max_batch_size = 2
    with pytest.raises(ValueError, match="exceeds backend limit"):
        score_batch([req(i) for i in range(3)], backend)


def test_duplicate_request_ids_rejected():
    with pytest.raises(ValueError, match="duplicate ids"):
        score_batch([req("a"), req("a")], StubScorer())


def test_reply_realigned_to_request_order():
    class Reversed(ScorerBackend):
        def score(self, batch):
            return [ScoreResponse(r.id, int(r.id) / 10) for r in reversed(batch)]

    out = score_batch([req(i) for i in range(5)], Reversed())
    assert [r.id for r in out] == ["0", "1", "2", "3", "4"]
    assert [r.score for r in out] == [0.0, 0.1, 0.2, 0.3, 0.4]


def test_reply_missing_id_is_protocol_error():
    backend = Scripted([ScoreResponse("a", 0.5)])
    with pytest.raises(ProtocolError, match="missing ids"):
        score_batch([req("a"), req("b")], backend, backoff_base=0.0)


def test_reply_extra_id_is_protocol_error():
    backend = Scripted([ScoreResponse("a", 0.5), ScoreResponse("ghost", 0.5)])
    with pytest.raises(ProtocolError, match="extra"):
        score_batch([req("a")], backend, backoff_base=0.0)


def test_reply_duplicate_id_is_protocol_error():
    backend = Scripted([ScoreResponse("a", 0.5), ScoreResponse("a", 0.5)])
    with pytest.raises(ProtocolError, match="duplicates id"):
        score_batch([req("a")], backend, backoff_base=0.0)


def test_transient_failures_are_retried():
    backend = Flaky(2)
    out = score_batch([req("a")], backend, backoff_base=0.0)
    assert backend.calls == 3
    assert out[0].score == 0.9


def test_retry_exhaustion_names_the_batch():
    backend = Flaky(99)
    with pytest.raises(TransportError, match=r"after 3 attempts.*'0', '1', '2', '3', '4'"):
        score_batch([req(i) for i in range(7)], backend,
                    max_attempts=3, backoff_base=0.0)
    assert backend.calls == 3


def test_protocol_errors_are_not_retried():
    class BadShape(ScorerBackend):
        calls = 0

        def score(self, batch):
            BadShape.calls += 1
            raise ProtocolError("nonsense reply")

    with pytest.raises(ProtocolError):
        score_batch([req("a")], BadShape(), backoff_base=0.0)
    assert BadShape.calls == 1


def test_backoff_doubles_and_caps(monkeypatch):
    sleeps = []
    monkeypatch.setattr("cureval.reward.time.sleep", sleeps.append)
    score_batch([req("a")], Flaky(3), max_attempts=4)
    assert sleeps == [0.5, 1.0, 2.0]

    sleeps.clear()
    score_batch([req("a")], Flaky(3), max_attempts=4,
                backoff_base=4.0, backoff_cap=6.0)
    assert sleeps == [4.0, 6.0, 6.0]


# -- HTTP backend against a real local server --

class _Handler(http.server.BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        self.server.requests.append((dict(self.headers), body))
        status, payload = self.server.replies.pop(0)
        data = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def scorer_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    server.requests = []
    server.replies = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()


def _url(server):
    return f"http://127.0.0.1:{server.server_address[1]}/score"


def test_http_round_trip_with_token(scorer_server):
    scorer_server.replies.append((200, [{"id": "a", "score": 0.25}]))
    backend = HttpScorer(_url(scorer_server), token="sekrit")
    out = backend.score([ScoreRequest("a", "感冒", "多喝水")])
    assert out == [ScoreResponse("a", 0.25)]
    headers, body = scorer_server.requests[0]
    assert headers["Authorization"] == "Bearer sekrit"
    assert json.loads(body) == [{"id": "a", "question": "感冒", "answer": "多喝水"}]


def test_http_omits_auth_header_without_token(scorer_server):
    scorer_server.replies.append((200, [{"id": "a", "score": 1.0}]))
    HttpScorer(_url(scorer_server)).score([req("a")])
    headers, _ = scorer_server.requests[0]
    assert "Authorization" not in headers


def test_http_normalizes_raw_values(scorer_server):
    scorer_server.replies.append((200, [{"id": "a", "raw": 0}, {"id": "b", "raw": 2.0}]))
    out = score_batch([req("a"), req("b")], HttpScorer(_url(scorer_server)))
    assert out[0].score == 0.5 and out[0].raw == 0.0
    assert out[1].score == pytest.approx(logistic(2.0))


def test_http_non_json_reply(scorer_server):
    scorer_server.replies.append((200, b"<html>oops</html>"))
    with pytest.raises(ProtocolError, match="not JSON"):
        HttpScorer(_url(scorer_server)).score([req("a")])


@pytest.mark.parametrize("payload, message", [
    ({"id": "a", "score": 1}, "must be a list"),
    ([{"score": 1}], "malformed scorer reply item"),
    ([{"id": "a"}], "neither score nor raw"),
    ([{"id": "a", "score": "high"}], "bad scorer reply value"),
    ([{"id": "a", "score": 1.5}], "bad scorer reply value"),
])
def test_http_malformed_replies(scorer_server, payload, message):
    scorer_server.replies.append((200, payload))
    with pytest.raises(ProtocolError, match=message):
        HttpScorer(_url(scorer_server)).score([req("a")])


def test_http_server_errors_retry_then_recover(scorer_server):
    scorer_server.replies.extend([
        (500, {"error": "overloaded"}),
        (500, {"error": "overloaded"}),
        (200, [{"id": "a", "score": 0.75}]),
    ])
    out = score_batch([req("a")], HttpScorer(_url(scorer_server)), backoff_base=0.0)
    assert out[0].score == 0.75
    assert len(scorer_server.requests) == 3


def test_http_unreachable_host_is_transport_error():
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    backend = HttpScorer(f"http://127.0.0.1:{port}/score", timeout=2.0)
    with pytest.raises(TransportError):
        backend.score([req("a")])


def test_http_url_and_token_from_environment(monkeypatch, scorer_server):
    monkeypatch.setenv(ENV_URL, _url(scorer_server))
    monkeypatch.setenv(ENV_TOKEN, "env-token")
    scorer_server.replies.append((200, [{"id": "a", "score": 1.0}]))
    HttpScorer().score([req("a")])
    headers, _ = scorer_server.requests[0]
    assert headers["Authorization"] == "Bearer env-token"


def test_http_requires_url(monkeypatch):
    monkeypatch.delenv(ENV_URL, raising=False)
    with pytest.raises(ConfigError, match=ENV_URL):
        HttpScorer()
