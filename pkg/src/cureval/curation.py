"""The curation pipeline: ordered, auditable filter/transform stages.

Each stage turns an InstructionRecord into a FilterVerdict (keep,
possibly with a transformed replacement, or discard with a reason), and
every run produces one StageReport per stage whose counts conserve:
input = kept + discarded, with the kept count of stage i feeding stage
i+1.  The default stage order is normalize, pii, length, score, quality;
scoring runs late so the cheap heuristics don't pay scorer cost for
records they would drop anyway.

Processing is chunked: chunks run on a worker pool but results are
merged back in input order, so output and reports are byte-identical
for any worker count.
"""
from __future__ import annotations

import re
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import islice
from typing import Iterable, Iterator, Sequence

from .errors import BackendError, ConfigError
from .pii import DEFAULT_PATTERNS, PiiPattern
from .records import InstructionRecord
from .reward import ScoreRequest, ScorerBackend, score_batch
from .tokenization import DEFAULT_POLICY, token_count

DEFAULT_MIN_TOKENS = 200
DEFAULT_QUALITY_THRESHOLD = 0.5
DEFAULT_STAGE_ORDER = ("normalize", "pii", "length", "score", "quality")


@dataclass(frozen=True)
class FilterVerdict:
    decision: str  # "keep" | "discard"
    reason: str | None = None
    transformed: InstructionRecord | None = None

    def __post_init__(self):
        if self.decision not in ("keep", "discard"):
            raise ValueError(f"decision must be 'keep' or 'discard', got {self.decision!r}")
        if self.decision == "discard" and not self.reason:
            raise ValueError("discard verdicts need a reason")


KEEP = FilterVerdict("keep")


@dataclass
class StageReport:
    """Per-stage accounting: input = kept + discarded, by reason."""
    stage: str
    input_count: int = 0
    kept: int = 0
    discarded: int = 0
    reasons: Counter = field(default_factory=Counter)

    def merge(self, other: "StageReport") -> None:
        assert other.stage == self.stage
        self.input_count += other.input_count
        self.kept += other.kept
        self.discarded += other.discarded
        self.reasons.update(other.reasons)

    def to_obj(self) -> dict:
        return {
            "stage": self.stage,
            "input": self.input_count,
            "kept": self.kept,
            "discarded": self.discarded,
            "reasons": dict(sorted(self.reasons.items())),
        }


def render_stage_table(reports: Sequence[StageReport]) -> str:
    """Human-readable stage accounting table."""
    header = f"{'stage':<12}{'input':>10}{'kept':>10}{'discarded':>10}  reasons"
    lines = [header, "-" * len(header)]
    for rep in reports:
        reasons = ", ".join(f"{k}={v}" for k, v in sorted(rep.reasons.items())) or "-"
        lines.append(f"{rep.stage:<12}{rep.input_count:>10}{rep.kept:>10}"
                     f"{rep.discarded:>10}  {reasons}")
    return "\n".join(lines)


# -- enumeration-marker normalization --

# A list marker is a 1-3 digit number at the start of a line (after
# optional indentation) wrapped or followed by one of the covered marker
# punctuation families.  Dot/comma markers must not be followed by a
# digit, so decimals ("3.5") and thousands groups ("1,305") survive.
_MARKER = re.compile(
    r"(?m)^(?P<indent>[^\S\n]*)"
    r"(?:\((?P<p1>[0-9０-９]{1,3})\)"
    r"|（(?P<p2>[0-9０-９]{1,3})）"
    r"|(?P<p3>[0-9０-９]{1,3})(?:[.．,，](?![0-9０-９])|[、)）]))"
)

_DIGIT_FOLD = str.maketrans("０１２３４５６７８９", "0123456789")


def _rewrite_marker(match: re.Match) -> str:
    number = (match.group("p1") or match.group("p2") or match.group("p3"))
    number = number.translate(_DIGIT_FOLD)
    text = match.string
    end = match.end()
    marker = f"{match.group('indent')}{number}."
    if end < len(text) and text[end] != "\n" and not text[end].isspace():
        return marker + " "
    return marker


def normalize_enumeration(text: str) -> str:
    """Rewrite list-item enumeration markers to the ``N.`` form.

    Covered marker families at list positions (start of text or of a
    line, after optional indentation): ``N,`` ``N、`` ``N，`` ``(N)``
    ``（N）`` ``N)`` ``N）`` ``N.`` ``N．``.  A single space is ensured
    between the marker and following content.  Occurrences elsewhere,
    e.g. a parenthesized number inside a sentence, are left alone; the
    function is idempotent.
    """
    return _MARKER.sub(_rewrite_marker, text)


# -- per-record filter operations --

def filter_pii(rec: InstructionRecord,
               patterns: Sequence[PiiPattern] = DEFAULT_PATTERNS) -> FilterVerdict:
    """Discard the whole record when any enabled PII pattern fires.

    Instruction, input and output are all checked; records are dropped,
    never redacted.
    """
    for text in (rec.instruction, rec.input, rec.output):
        if text and any(p.search(text) for p in patterns):
            return FilterVerdict("discard", reason="pii")
    return KEEP


def filter_length(rec: InstructionRecord, min_tokens: int = DEFAULT_MIN_TOKENS,
                  policy: str = DEFAULT_POLICY) -> FilterVerdict:
    """Discard answers shorter than ``min_tokens`` (strictly fewer)."""
    if min_tokens < 0:
        raise ValueError("min_tokens must be >= 0")
    if token_count(rec.output, policy) < min_tokens:
        return FilterVerdict("discard", reason="too_short")
    return KEEP


def filter_quality(rec: InstructionRecord,
                   threshold: float = DEFAULT_QUALITY_THRESHOLD) -> FilterVerdict:
    """Discard records whose quality score is strictly below ``threshold``.

    A score exactly at the threshold is kept.  Records must already
    carry a score; a missing one is a stage-configuration error.
    """
    if rec.score is None:
        raise ConfigError(
            f"record {rec.id!r} reached the quality stage without a score; "
            "add a score stage before it or use pre-scored input")
    if rec.score < threshold:
        return FilterVerdict("discard", reason="low_quality")
    return KEEP


# -- stages --

class Stage:
    """One pipeline stage; subclasses set ``kind`` to filter/transform/scorer."""
    name: str
    kind: str

    def apply(self, rec: InstructionRecord) -> FilterVerdict:
        raise NotImplementedError

    def apply_chunk(self, records: list[InstructionRecord]) -> list[FilterVerdict]:
        return [self.apply(rec) for rec in records]


class NormalizeStage(Stage):
    """Harmonize enumeration markers in the answer text."""
    name = "normalize"
    kind = "transform"

    def apply(self, rec):
        normalized = normalize_enumeration(rec.output)
        if normalized == rec.output:
            return KEEP
        return FilterVerdict("keep", transformed=replace(rec, output=normalized))


class PiiStage(Stage):
    name = "pii"
    kind = "filter"

    def __init__(self, patterns: Sequence[PiiPattern] = DEFAULT_PATTERNS):
        self.patterns = tuple(patterns)

    def apply(self, rec):
        return filter_pii(rec, self.patterns)


class LengthStage(Stage):
    name = "length"
    kind = "filter"

    def __init__(self, min_tokens: int = DEFAULT_MIN_TOKENS,
                 policy: str = DEFAULT_POLICY):
        self.min_tokens = min_tokens
        self.policy = policy

    def apply(self, rec):
        return filter_length(rec, self.min_tokens, self.policy)


class ScoreStage(Stage):
    """Attach a quality score to each record via a scorer backend.

    The question sent to the scorer is the instruction, with the input
    appended on its own line when present.  Records with an empty
    question or answer are scored 0.0 without a backend call.  Batches
    are sized to the backend limit; in-flight calls across worker
    threads are bounded by ``max_inflight``.  Per-record scorer failure
    after retries either discards with reason ``score_unavailable`` or
    aborts the run, per ``on_failure``.
    """
    name = "score"
    kind = "scorer"

    def __init__(self, backend: ScorerBackend, *, on_failure: str = "discard",
                 max_inflight: int = 4, max_attempts: int = 4,
                 backoff_base: float = 0.5, backoff_cap: float = 8.0):
        if on_failure not in ("discard", "abort"):
            raise ConfigError(f"on_failure must be 'discard' or 'abort', got {on_failure!r}")
        self.backend = backend
        self.on_failure = on_failure
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._gate = threading.Semaphore(max(1, max_inflight))

    def apply_chunk(self, records):
        verdicts: list[FilterVerdict | None] = [None] * len(records)
        pending: list[tuple[int, ScoreRequest]] = []
        for idx, rec in enumerate(records):
            question = rec.instruction if not rec.input \
                else f"{rec.instruction}\n{rec.input}"
            if not question or not rec.output:
                verdicts[idx] = FilterVerdict(
                    "keep", transformed=replace(rec, score=0.0))
            else:
                pending.append((idx, ScoreRequest(rec.id, question, rec.output)))

        limit = self.backend.max_batch_size
        for start in range(0, len(pending), limit):
            batch = pending[start:start + limit]
            try:
                with self._gate:
                    responses = score_batch(
                        [req for _, req in batch], self.backend,
                        max_attempts=self.max_attempts,
                        backoff_base=self.backoff_base,
                        backoff_cap=self.backoff_cap)
            except BackendError:
                if self.on_failure == "abort":
                    raise
                for idx, _ in batch:
                    verdicts[idx] = FilterVerdict("discard", reason="score_unavailable")
                continue
            for (idx, _), resp in zip(batch, responses):
                verdicts[idx] = FilterVerdict(
                    "keep", transformed=replace(records[idx], score=resp.score))
        return verdicts


class QualityStage(Stage):
    name = "quality"
    kind = "filter"

    def __init__(self, threshold: float = DEFAULT_QUALITY_THRESHOLD):
        if not 0.0 <= threshold <= 1.0:
            raise ConfigError(f"quality threshold must lie in [0, 1], got {threshold!r}")
        self.threshold = threshold

    def apply(self, rec):
        return filter_quality(rec, self.threshold)


def validate_stages(stages: Sequence[Stage], *, assume_prescored: bool = False) -> None:
    """Reject invalid stage lists before any input is consumed."""
    if not stages:
        raise ConfigError("stage list is empty")
    seen_scorer = False
    for stage in stages:
        if stage.kind == "scorer":
            seen_scorer = True
        if stage.name == "quality" and not seen_scorer and not assume_prescored:
            raise ConfigError(
                "quality stage needs a score stage before it "
                "(or assume_prescored for pre-scored input)")


# -- pipeline execution --

def _chunks(records: Iterable[InstructionRecord], size: int) -> Iterator[list]:
    it = iter(records)
    while True:
        chunk = list(islice(it, size))
        if not chunk:
            return
        yield chunk


def _run_chunk(stages, chunk):
    """Apply every stage to one chunk; returns (kept records, partial reports)."""
    partials = []
    records = chunk
    for stage in stages:
        verdicts = stage.apply_chunk(records)
        report = StageReport(stage.name, input_count=len(records))
        kept = []
        for rec, verdict in zip(records, verdicts):
            if verdict.decision == "keep":
                report.kept += 1
                if verdict.transformed is not None:
                    if verdict.transformed.id != rec.id:
                        raise RuntimeError(
                            f"stage {stage.name!r} changed record id "
                            f"{rec.id!r} -> {verdict.transformed.id!r}")
                    rec = verdict.transformed
                kept.append(rec)
            else:
                report.discarded += 1
                report.reasons[verdict.reason] += 1
        partials.append(report)
        records = kept
    return records, partials


class PipelineRun:
    """Iterable over kept records; ``reports`` holds the per-stage accounting.

    Reports are complete once iteration finishes (they cover exactly the
    consumed input, so a cooperative early stop still conserves counts).
    """

    def __init__(self, records, stages, *, workers=1, chunk_size=512,
                 stop_event: threading.Event | None = None):
        self._records = records
        self._stages = list(stages)
        self._workers = max(1, workers)
        self._chunk_size = max(1, chunk_size)
        self._stop = stop_event
        self.reports = [StageReport(s.name) for s in self._stages]
        self.interrupted = False

    def _chunk_results(self):
        chunks = _chunks(self._records, self._chunk_size)
        if self._stop is not None:
            chunks = self._stoppable(chunks)
        run = lambda chunk: _run_chunk(self._stages, chunk)
        if self._workers == 1:
            yield from map(run, chunks)
            return
        with ThreadPoolExecutor(max_workers=self._workers) as pool:
            window: list = []
            for chunk in islice(chunks, self._workers + 2):
                window.append(pool.submit(run, chunk))
            while window:
                done = window.pop(0)
                nxt = next(chunks, None)
                if nxt is not None:
                    window.append(pool.submit(run, nxt))
                yield done.result()

    def _stoppable(self, chunks):
        for chunk in chunks:
            if self._stop.is_set():
                self.interrupted = True
                return
            yield chunk

    def __iter__(self):
        for kept, partials in self._chunk_results():
            for report, partial in zip(self.reports, partials):
                report.merge(partial)
            yield from kept


def run_pipeline(records: Iterable[InstructionRecord], stages: Sequence[Stage],
                 *, workers: int = 1, chunk_size: int = 512,
                 assume_prescored: bool = False,
                 stop_event: threading.Event | None = None) -> PipelineRun:
    """Run the stage list over a record stream.

    Returns a PipelineRun; iterate it to drive the pipeline (records
    stream through with bounded memory).  Stage configuration is
    validated up front, before any input is read.
    """
    validate_stages(stages, assume_prescored=assume_prescored)
    return PipelineRun(records, stages, workers=workers,
                       chunk_size=chunk_size, stop_event=stop_event)
