"""Domain records and line-delimited (JSONL, UTF-8) corpus I/O.

Three schemas are understood, one JSON object per line:

instruction
    ``{"id", "instruction", "input", "output", "source", "category", "score"}``
    with ``id``, ``input``, ``category`` and ``score`` optional on read;
    ``source`` is ``"general"`` or ``"medical"`` (default ``"general"``).

benchmark
    Either one record per question, ``{"id", "question", "answers": [...],
    "category"}``, or one record per (question, answer) pair,
    ``{"id", "question", "answer", "category"}``; contiguous pair rows
    sharing an id are grouped into a single example with the answers in
    file order.

predictions
    ``{"id", "prediction"}``.

Records missing an ``id`` get the deterministic synthetic id
``"<filename>:<line>"``.  Unknown fields are ignored on read.  Reading
is streaming (constant memory per record); the optional strict-id mode
additionally keeps a set of seen ids to reject duplicates.
"""
from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Union

from .errors import DataError

log = logging.getLogger(__name__)

SOURCES = ("general", "medical")
SCHEMAS = ("instruction", "benchmark", "predictions")


class CorpusFormatError(DataError):
    """A line that cannot be parsed under the declared schema."""

    def __init__(self, path, line_no: int, byte_offset: int, message: str):
        super().__init__(f"{path}:{line_no} (byte {byte_offset}): {message}")
        self.path = str(path)
        self.line_no = line_no
        self.byte_offset = byte_offset


class DuplicateIdError(DataError):
    pass


@dataclass(frozen=True)
class InstructionRecord:
    """One instruction/answer pair flowing through curation."""
    id: str
    instruction: str
    output: str
    input: str = ""
    source: str = "general"
    category: str | None = None
    score: float | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score!r}")

    def to_obj(self) -> dict:
        obj = {
            "id": self.id,
            "instruction": self.instruction,
            "input": self.input,
            "output": self.output,
            "source": self.source,
        }
        if self.category is not None:
            obj["category"] = self.category
        if self.score is not None:
            obj["score"] = self.score
        return obj


@dataclass(frozen=True)
class EvalExample:
    """A benchmark question with one or more reference answers."""
    id: str
    question: str
    references: tuple[str, ...]
    category: str
    prediction: str | None = None

    def __post_init__(self):
        if not self.references:
            raise ValueError(f"example {self.id!r} has no references")

    def to_obj(self) -> dict:
        obj = {
            "id": self.id,
            "question": self.question,
            "answers": list(self.references),
            "category": self.category,
        }
        if self.prediction is not None:
            obj["prediction"] = self.prediction
        return obj


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    prediction: str

    def to_obj(self) -> dict:
        return {"id": self.id, "prediction": self.prediction}


Record = Union[InstructionRecord, EvalExample, PredictionRecord]


@dataclass(frozen=True)
class Bucket:
    """A (lower, upper] count range; ``upper=None`` means unbounded."""
    lower: int
    upper: int | None
    label: str

    def contains(self, count: int) -> bool:
        return count > self.lower and (self.upper is None or count <= self.upper)


# Size buckets for category-distribution tables.  Ranges are (lower, upper],
# so a boundary count belongs to the bucket it closes: 1000 -> "<1000",
# 5000 -> "1000-5000", 10000 -> "5000-10000".
DEFAULT_BUCKETS = (
    Bucket(10000, None, ">10000"),
    Bucket(5000, 10000, "5000-10000"),
    Bucket(1000, 5000, "1000-5000"),
    Bucket(0, 1000, "<1000"),
)


@dataclass
class CategoryTable:
    """Per-category example counts with bucket assignment."""
    counts: dict[str, int]
    buckets: tuple[Bucket, ...] = DEFAULT_BUCKETS

    def total(self) -> int:
        return sum(self.counts.values())

    def bucket_of(self, count: int) -> Bucket:
        for bucket in self.buckets:
            if bucket.contains(count):
                return bucket
        raise ValueError(f"count {count} falls in no bucket")

    def rows(self) -> list[tuple[str, int, list[str]]]:
        """(bucket label, category count, sorted category names) per bucket."""
        grouped: dict[str, list[str]] = {b.label: [] for b in self.buckets}
        for category in sorted(self.counts):
            grouped[self.bucket_of(self.counts[category]).label].append(category)
        return [(b.label, len(grouped[b.label]), grouped[b.label])
                for b in self.buckets]


def _iter_json_lines(path, on_malformed: str) -> Iterator[tuple[int, int, dict]]:
    offset = 0
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line_offset = offset
            offset += len(raw)
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw.decode("utf-8"))
                if not isinstance(obj, dict):
                    raise ValueError("record is not a JSON object")
            except (UnicodeDecodeError, ValueError) as exc:
                err = CorpusFormatError(path, line_no, line_offset, str(exc))
                if on_malformed == "skip":
                    log.warning("skipping %s", err)
                    continue
                raise err from None
            yield line_no, line_offset, obj


def _require(obj: dict, key: str, path, line_no: int, offset: int) -> object:
    if key not in obj:
        raise CorpusFormatError(path, line_no, offset, f"missing required field {key!r}")
    return obj[key]


def _text(obj: dict, key: str, path, line_no: int, offset: int) -> str:
    value = _require(obj, key, path, line_no, offset)
    if not isinstance(value, str):
        raise CorpusFormatError(path, line_no, offset, f"field {key!r} must be a string")
    return value


def _record_id(obj: dict, path, line_no: int, offset: int) -> str:
    raw = obj.get("id")
    if raw is None:
        return f"{Path(path).name}:{line_no}"
    if isinstance(raw, (int, float)):
        raw = str(raw)
    if not isinstance(raw, str) or not raw:
        raise CorpusFormatError(path, line_no, offset, "field 'id' must be a non-empty string")
    return raw


def _parse_instruction(obj, path, line_no, offset) -> InstructionRecord:
    score = obj.get("score")
    if score is not None and (isinstance(score, bool)
                              or not isinstance(score, (int, float))):
        raise CorpusFormatError(path, line_no, offset, "field 'score' must be a number")
    extra_input = obj.get("input") or ""
    if not isinstance(extra_input, str):
        raise CorpusFormatError(path, line_no, offset, "field 'input' must be a string")
    category = obj.get("category")
    if category is not None and not isinstance(category, str):
        raise CorpusFormatError(path, line_no, offset, "field 'category' must be a string")
    try:
        return InstructionRecord(
            id=_record_id(obj, path, line_no, offset),
            instruction=_text(obj, "instruction", path, line_no, offset),
            output=_text(obj, "output", path, line_no, offset),
            input=extra_input,
            source=obj.get("source", "general"),
            category=category,
            score=float(score) if score is not None else None,
        )
    except ValueError as exc:
        raise CorpusFormatError(path, line_no, offset, str(exc)) from None


def _parse_prediction(obj, path, line_no, offset) -> PredictionRecord:
    return PredictionRecord(
        id=_record_id(obj, path, line_no, offset),
        prediction=_text(obj, "prediction", path, line_no, offset),
    )


def _iter_benchmark(lines, path, strict_ids: bool) -> Iterator[EvalExample]:
    seen: set[str] = set()
    pending: dict | None = None  # accumulating pair-form group

    def flush() -> EvalExample | None:
        nonlocal pending
        if pending is None:
            return None
        example = EvalExample(
            id=pending["id"],
            question=pending["question"],
            references=tuple(pending["answers"]),
            category=pending["category"],
        )
        pending = None
        return example

    def check_unique(example_id: str, line_no: int, offset: int):
        if strict_ids:
            if example_id in seen:
                raise DuplicateIdError(
                    f"{path}:{line_no}: duplicate benchmark id {example_id!r}")
            seen.add(example_id)

    for line_no, offset, obj in lines:
        if "answers" in obj:
            done = flush()
            if done is not None:
                check_unique(done.id, line_no, offset)
                yield done
            answers = obj["answers"]
            if not isinstance(answers, list) or not answers \
                    or not all(isinstance(a, str) for a in answers):
                raise CorpusFormatError(
                    path, line_no, offset,
                    "field 'answers' must be a non-empty list of strings")
            example = EvalExample(
                id=_record_id(obj, path, line_no, offset),
                question=_text(obj, "question", path, line_no, offset),
                references=tuple(answers),
                category=_text(obj, "category", path, line_no, offset),
            )
            check_unique(example.id, line_no, offset)
            yield example
        elif "answer" in obj:
            if "id" not in obj:
                raise CorpusFormatError(
                    path, line_no, offset,
                    "per-answer benchmark rows need an explicit 'id' to group by")
            row_id = _record_id(obj, path, line_no, offset)
            answer = _text(obj, "answer", path, line_no, offset)
            if pending is not None and pending["id"] == row_id:
                pending["answers"].append(answer)
                continue
            done = flush()
            if done is not None:
                check_unique(done.id, line_no, offset)
                yield done
            pending = {
                "id": row_id,
                "question": _text(obj, "question", path, line_no, offset),
                "category": _text(obj, "category", path, line_no, offset),
                "answers": [answer],
            }
        else:
            raise CorpusFormatError(
                path, line_no, offset,
                "benchmark record needs an 'answers' list or an 'answer' field")
    done = flush()
    if done is not None:
        if strict_ids and done.id in seen:
            raise DuplicateIdError(f"{path}: duplicate benchmark id {done.id!r}")
        yield done


def read_corpus(path, schema: str, *, on_malformed: str = "raise",
                strict_ids: bool = False) -> Iterator[Record]:
    """Stream records from a line-delimited corpus file.

    ``on_malformed`` is ``"raise"`` (fail fast, default) or ``"skip"``
    (log the offending line and resume at the next one).  With
    ``strict_ids`` a duplicate explicit id raises DuplicateIdError.
    """
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}, expected one of {SCHEMAS}")
    if on_malformed not in ("raise", "skip"):
        raise ValueError(f"on_malformed must be 'raise' or 'skip', got {on_malformed!r}")

    lines = _iter_json_lines(path, on_malformed)
    if schema == "benchmark":
        yield from _iter_benchmark(lines, path, strict_ids)
        return

    parse = _parse_instruction if schema == "instruction" else _parse_prediction
    seen: set[str] = set()
    for line_no, offset, obj in lines:
        try:
            record = parse(obj, path, line_no, offset)
        except CorpusFormatError as err:
            # skip mode covers schema-invalid lines too, not just bad JSON
            if on_malformed == "skip":
                log.warning("skipping %s", err)
                continue
            raise
        if strict_ids and "id" in obj:
            if record.id in seen:
                raise DuplicateIdError(f"{path}:{line_no}: duplicate id {record.id!r}")
            seen.add(record.id)
        yield record


def atomic_writer(path):
    """Open a temp file next to ``path`` for writing; rename into place on success.

    Returns (file object, commit callable).  On failure the caller should
    close the file and unlink its ``.name``; a partial target file is
    never left behind.
    """
    parent = Path(path).parent
    parent.mkdir(parents=True, exist_ok=True)
    tmp = tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", dir=parent,
        prefix=Path(path).name + ".", suffix=".tmp", delete=False, newline="\n")

    def commit():
        tmp.flush()
        tmp.close()
        os.replace(tmp.name, path)

    return tmp, commit


def write_corpus(records: Iterable[Record], path) -> int:
    """Serialize records to ``path`` (JSONL, UTF-8); returns the count written.

    The file is written to a temporary sibling and atomically renamed, so
    a crashed run never leaves a partial corpus at the destination.
    """
    tmp, commit = atomic_writer(path)
    count = 0
    try:
        for record in records:
            tmp.write(json.dumps(record.to_obj(), ensure_ascii=False) + "\n")
            count += 1
        commit()
    except BaseException:
        tmp.close()
        os.unlink(tmp.name)
        raise
    return count
