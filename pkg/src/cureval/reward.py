"""Pluggable (question, answer) quality scoring.

Two backends ship: an HTTP client for a remote reward-model service and
a deterministic local stub for tests and dry runs.  Scores are
normalized to [0, 1] at this boundary; when a backend reports raw
(unbounded) values they are mapped through the logistic function, so a
raw value of 0 sits exactly at the 0.5 decision threshold.

Wire protocol of the remote backend: POST a JSON array of
``{"id", "question", "answer"}`` objects; the reply is a JSON array of
``{"id", "score"}`` or ``{"id", "raw"}`` objects, one per request.  The
endpoint URL and optional bearer token come from the environment
(``CUREVAL_SCORER_URL``, ``CUREVAL_SCORER_TOKEN``) so credentials never
land in config files.
"""
from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass

import requests as _requests

from .errors import BackendError, ConfigError
from .tokenization import tokenize

ENV_URL = "CUREVAL_SCORER_URL"
ENV_TOKEN = "CUREVAL_SCORER_TOKEN"


class TransportError(BackendError):
    """Could not reach the backend; retried per policy before surfacing."""


class ProtocolError(BackendError):
    """The backend replied, but not in the expected shape."""


def logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass(frozen=True)
class ScoreRequest:
    id: str
    question: str
    answer: str

    def __post_init__(self):
        if not self.question or not self.answer:
            raise ValueError(f"request {self.id!r}: question and answer must be non-empty")


@dataclass(frozen=True)
class ScoreResponse:
    id: str
    score: float
    raw: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"response {self.id!r}: score {self.score!r} outside [0, 1]")
        if self.raw is not None and self.score != logistic(self.raw):
            raise ValueError(f"response {self.id!r}: score does not equal logistic(raw)")


def stub_score(question: str, answer: str) -> float:
    """Deterministic stand-in score: unigram F1 between the cjk_char
    tokenizations of answer and question.

    Only a test double; makes no claim of fidelity to any real reward
    model.  Precision is computed on the answer side, recall on the
    question side; identical texts score 1.0, disjoint ones 0.0.
    """
    answer_tokens = tokenize(answer).tokens
    question_tokens = tokenize(question).tokens
    if not answer_tokens or not question_tokens:
        return 0.0
    counts: dict[str, int] = {}
    for tok in question_tokens:
        counts[tok] = counts.get(tok, 0) + 1
    overlap = 0
    for tok in answer_tokens:
        left = counts.get(tok, 0)
        if left > 0:
            counts[tok] = left - 1
            overlap += 1
    if overlap == 0:
        return 0.0
    precision = overlap / len(answer_tokens)
    recall = overlap / len(question_tokens)
    return 2.0 * precision * recall / (precision + recall)


class ScorerBackend:
    """Interface: ``score`` maps a request batch to one response each."""
    max_batch_size: int = 64

    def score(self, requests: list[ScoreRequest]) -> list[ScoreResponse]:
        raise NotImplementedError


class StubScorer(ScorerBackend):
    max_batch_size = 1024

    def score(self, requests):
        return [ScoreResponse(r.id, stub_score(r.question, r.answer))
                for r in requests]


class HttpScorer(ScorerBackend):
    def __init__(self, url: str | None = None, token: str | None = None, *,
                 timeout: float = 30.0, max_batch_size: int = 64):
        self.url = url or os.environ.get(ENV_URL)
        if not self.url:
            raise ConfigError(f"remote scorer selected but {ENV_URL} is not set")
        self.token = token if token is not None else os.environ.get(ENV_TOKEN)
        self.timeout = timeout
        self.max_batch_size = max_batch_size

    def score(self, requests):
        body = [{"id": r.id, "question": r.question, "answer": r.answer}
                for r in requests]
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            reply = _requests.post(self.url, json=body, headers=headers,
                                   timeout=self.timeout)
            reply.raise_for_status()
            payload = reply.json()
        except ValueError as exc:  # not JSON
            raise ProtocolError(
                f"scorer reply is not JSON: {reply.text[:200]!r}") from exc
        except _requests.RequestException as exc:
            raise TransportError(f"scorer request failed: {exc}") from exc
        return _parse_reply(payload)


def _parse_reply(payload) -> list[ScoreResponse]:
    excerpt = repr(payload)[:200]
    if not isinstance(payload, list):
        raise ProtocolError(f"scorer reply must be a list, got: {excerpt}")
    responses = []
    for item in payload:
        if not isinstance(item, dict) or "id" not in item:
            raise ProtocolError(f"malformed scorer reply item in: {excerpt}")
        try:
            if "raw" in item:
                raw = float(item["raw"])
                responses.append(ScoreResponse(str(item["id"]), logistic(raw), raw))
            elif "score" in item:
                responses.append(ScoreResponse(str(item["id"]), float(item["score"])))
            else:
                raise ProtocolError(
                    f"scorer reply item has neither score nor raw: {excerpt}")
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"bad scorer reply value ({exc}) in: {excerpt}") from None
    return responses


def score_batch(requests: list[ScoreRequest], backend: ScorerBackend, *,
                max_attempts: int = 4, backoff_base: float = 0.5,
                backoff_cap: float = 8.0) -> list[ScoreResponse]:
    """Score one batch, retrying transport failures with capped
    exponential backoff.

    The returned list is aligned with ``requests`` (matched by id); a
    reply that drops, duplicates or invents ids is a protocol error.
    """
    if len(requests) > backend.max_batch_size:
        raise ValueError(
            f"batch of {len(requests)} exceeds backend limit {backend.max_batch_size}")
    if not requests:
        return []
    ids = [r.id for r in requests]
    if len(set(ids)) != len(ids):
        raise ValueError("request batch contains duplicate ids")

    last_error: TransportError | None = None
    for attempt in range(max_attempts):
        if attempt:
            time.sleep(min(backoff_cap, backoff_base * 2 ** (attempt - 1)))
        try:
            responses = backend.score(requests)
            break
        except TransportError as exc:
            last_error = exc
    else:
        raise TransportError(
            f"scorer unreachable after {max_attempts} attempts "
            f"(ids {ids[:5]}{'...' if len(ids) > 5 else ''}): {last_error}")

    by_id = {}
    for resp in responses:
        if resp.id in by_id:
            raise ProtocolError(f"scorer reply duplicates id {resp.id!r}")
        by_id[resp.id] = resp
    missing = [i for i in ids if i not in by_id]
    if missing or len(by_id) != len(ids):
        extra = sorted(set(by_id) - set(ids))
        raise ProtocolError(
            f"scorer reply misaligned: missing ids {missing[:5]}, extra {extra[:5]}")
    return [by_id[i] for i in ids]
