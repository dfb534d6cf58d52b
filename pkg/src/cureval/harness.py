"""Benchmark orchestration: join predictions, score, stratify, compare.

A run produces a MetricReport: per-example sentence scores averaged
overall and per category, optionally with mean reward scores, stamped
with the tokenization policy, metric settings and a dataset fingerprint
so two reports are only ever compared over identical data.

Presentation convention: n-gram metrics are printed multiplied by 100
with 2 decimals; reward scores stay on their native [0, 1] scale with 4
decimals.  Machine-readable output keeps full-precision [0, 1] values.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import DataError
from .metrics import METRIC_KEYS, score_example
from .records import (
    Bucket,
    CategoryTable,
    DEFAULT_BUCKETS,
    EvalExample,
    PredictionRecord,
)
from .reward import ScoreRequest, ScorerBackend, score_batch
from .tokenization import DEFAULT_POLICY

REPORT_FORMAT_VERSION = 1

# printed column order and headings, mirroring the benchmark-table shape
TABLE_COLUMNS = (
    ("BLEU-1", "bleu_1"), ("BLEU-2", "bleu_2"), ("BLEU-3", "bleu_3"),
    ("BLEU-4", "bleu_4"), ("GLEU", "gleu"), ("ROUGE-1", "rouge1_f"),
    ("ROUGE-2", "rouge2_f"), ("ROUGE-L", "rougeL_f"),
)


@dataclass(frozen=True)
class JoinResult:
    joined: tuple[EvalExample, ...]
    missing_ids: tuple[str, ...]   # benchmark ids without a prediction
    extra_ids: tuple[str, ...]     # prediction ids without a benchmark row

    @property
    def coverage(self) -> float:
        total = len(self.joined) + len(self.missing_ids)
        return len(self.joined) / total if total else 1.0


def join_predictions(bench: Iterable[EvalExample],
                     preds: Iterable[PredictionRecord], *,
                     coverage_floor: float = 1.0) -> JoinResult:
    """Inner join of benchmark examples with predictions by id.

    Joined examples keep benchmark order.  Duplicate prediction ids are
    an error; coverage (joined / benchmark size) below the floor is an
    error carrying a sample of the missing ids.
    """
    by_id: dict[str, str] = {}
    for pred in preds:
        if pred.id in by_id:
            raise DataError(f"duplicate prediction id {pred.id!r}")
        by_id[pred.id] = pred.prediction
    joined: list[EvalExample] = []
    missing: list[str] = []
    matched: set[str] = set()
    for ex in bench:
        if ex.id in by_id:
            joined.append(EvalExample(ex.id, ex.question, ex.references,
                                      ex.category, by_id[ex.id]))
            matched.add(ex.id)
        else:
            missing.append(ex.id)
    result = JoinResult(tuple(joined), tuple(missing),
                        tuple(i for i in by_id if i not in matched))
    if result.coverage < coverage_floor:
        sample = ", ".join(missing[:5])
        raise DataError(
            f"prediction coverage {result.coverage:.4f} below floor "
            f"{coverage_floor:.4f}; {len(missing)} benchmark ids unmatched "
            f"(e.g. {sample})")
    return result


def stratify(examples: Iterable[EvalExample],
             buckets: Sequence[Bucket] = DEFAULT_BUCKETS, *,
             categories: Sequence[str] | None = None) -> CategoryTable:
    """Count examples per category and assign size buckets.

    When ``categories`` is given (strict mode), an example outside that
    declared set is a data error.
    """
    allowed = set(categories) if categories is not None else None
    counts: dict[str, int] = {}
    for ex in examples:
        if allowed is not None and ex.category not in allowed:
            raise DataError(
                f"example {ex.id!r} has undeclared category {ex.category!r}")
        counts[ex.category] = counts.get(ex.category, 0) + 1
    return CategoryTable(counts, tuple(buckets))


def dataset_fingerprint(bench: Sequence[EvalExample]) -> str:
    """Content hash of the benchmark (ids, questions, references,
    categories; predictions excluded so runs over the same data match)."""
    digest = hashlib.sha256()
    for ex in bench:
        row = json.dumps(
            [ex.id, ex.question, list(ex.references), ex.category],
            ensure_ascii=False, separators=(",", ":"))
        digest.update(row.encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


@dataclass(frozen=True)
class Aggregate:
    """Mean per-example scores for one slice of the dataset."""
    count: int
    means: dict[str, float]          # METRIC_KEYS -> mean in [0, 1]
    reward: float | None = None      # mean reward score, when scored

    def to_obj(self) -> dict:
        return {"count": self.count, "means": dict(self.means),
                "reward": self.reward}


class _Accumulator:
    def __init__(self):
        self.count = 0
        self.sums = dict.fromkeys(METRIC_KEYS, 0.0)
        self.reward_sum = 0.0
        self.reward_count = 0

    def add(self, flat: dict[str, float], reward: float | None):
        self.count += 1
        for key in METRIC_KEYS:
            self.sums[key] += flat[key]
        if reward is not None:
            self.reward_sum += reward
            self.reward_count += 1

    def finish(self) -> Aggregate:
        if self.count == 0:
            return Aggregate(0, dict.fromkeys(METRIC_KEYS, 0.0), None)
        means = {k: v / self.count for k, v in self.sums.items()}
        reward = self.reward_sum / self.reward_count if self.reward_count else None
        return Aggregate(self.count, means, reward)


@dataclass(frozen=True)
class MetricReport:
    model: str
    overall: Aggregate
    per_category: dict[str, Aggregate]   # ordered: count desc, then name
    metadata: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "model": self.model,
            "metadata": dict(self.metadata),
            "overall": self.overall.to_obj(),
            "per_category": {c: a.to_obj() for c, a in self.per_category.items()},
        }


def _aggregate_from_obj(obj: dict, where: str) -> Aggregate:
    try:
        means = {k: float(obj["means"][k]) for k in METRIC_KEYS}
        reward = obj.get("reward")
        return Aggregate(int(obj["count"]), means,
                         None if reward is None else float(reward))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed report aggregate at {where}: {exc}") from None


def report_from_obj(obj: dict) -> MetricReport:
    if not isinstance(obj, dict) or obj.get("format_version") != REPORT_FORMAT_VERSION:
        raise DataError("not a metric report (missing or unsupported format_version)")
    try:
        model = str(obj["model"])
        metadata = dict(obj["metadata"])
        categories = obj["per_category"]
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed metric report: {exc}") from None
    return MetricReport(
        model=model,
        overall=_aggregate_from_obj(obj["overall"], "overall"),
        per_category={c: _aggregate_from_obj(a, f"category {c!r}")
                      for c, a in categories.items()},
        metadata=metadata,
    )


def _reward_scores(examples: Sequence[EvalExample],
                   backend: ScorerBackend) -> list[float]:
    """Mean-reward inputs: score each (question, prediction) pair in
    batches.  Empty predictions score 0.0 without a backend call."""
    scores: list[float] = [0.0] * len(examples)
    batch: list[tuple[int, ScoreRequest]] = []

    def flush():
        if not batch:
            return
        responses = score_batch([req for _, req in batch], backend)
        for (pos, _), resp in zip(batch, responses):
            scores[pos] = resp.score
        batch.clear()

    for pos, ex in enumerate(examples):
        if not ex.question or not ex.prediction:
            continue
        batch.append((pos, ScoreRequest(ex.id, ex.question, ex.prediction)))
        if len(batch) >= backend.max_batch_size:
            flush()
    flush()
    return scores


def evaluate(bench: Iterable[EvalExample],
             preds: Iterable[PredictionRecord], *,
             model: str = "model",
             policy: str = DEFAULT_POLICY,
             max_n: int = 4,
             smoothing: str = "none",
             multi_ref: str = "max",
             coverage_floor: float = 1.0,
             reward_backend: ScorerBackend | None = None,
             workers: int = 1,
             per_example_sink: Callable[[dict], None] | None = None) -> MetricReport:
    """Join, score every example, and aggregate overall and per category.

    Deterministic for fixed inputs and settings: per-example scores are
    accumulated in benchmark order regardless of ``workers``.  When
    ``per_example_sink`` is given it receives one machine-readable dict
    per joined example, in order.
    """
    bench = list(bench)
    fingerprint = dataset_fingerprint(bench)
    join = join_predictions(bench, preds, coverage_floor=coverage_floor)
    examples = join.joined

    def score_one(ex: EvalExample):
        return score_example(ex, policy, max_n=max_n, smoothing=smoothing,
                             multi_ref=multi_ref)

    if workers > 1 and len(examples) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(examples) // (workers * 4))
            scores = list(pool.map(score_one, examples, chunksize=chunk))
    else:
        scores = [score_one(ex) for ex in examples]

    rewards: list[float | None]
    if reward_backend is not None:
        rewards = list(_reward_scores(examples, reward_backend))
    else:
        rewards = [None] * len(examples)

    overall = _Accumulator()
    per_category: dict[str, _Accumulator] = {}
    for ex, sent, reward in zip(examples, scores, rewards):
        flat = sent.flat()
        overall.add(flat, reward)
        per_category.setdefault(ex.category, _Accumulator()).add(flat, reward)
        if per_example_sink is not None:
            per_example_sink({"id": ex.id, "category": ex.category,
                              "scores": flat, "reward": reward})

    ordered = sorted(per_category.items(),
                     key=lambda kv: (-kv[1].count, kv[0]))
    return MetricReport(
        model=model,
        overall=overall.finish(),
        per_category={c: acc.finish() for c, acc in ordered},
        metadata={
            "policy": policy,
            "max_n": max_n,
            "smoothing": smoothing,
            "multi_ref": multi_ref,
            "dataset_fingerprint": fingerprint,
            "example_count": len(examples),
            "benchmark_count": len(bench),
            "unmatched_count": len(join.missing_ids),
        },
    )


SETTINGS_KEYS = ("policy", "max_n", "smoothing", "multi_ref", "dataset_fingerprint")


@dataclass(frozen=True)
class ComparisonReport:
    """Per-metric deltas (run b minus run a), overall and per category."""
    model_a: str
    model_b: str
    overall: dict[str, float]
    per_category: dict[str, dict[str, float]]
    metadata: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {
            "model_a": self.model_a,
            "model_b": self.model_b,
            "metadata": dict(self.metadata),
            "overall": dict(self.overall),
            "per_category": {c: dict(d) for c, d in self.per_category.items()},
        }


def _deltas(a: Aggregate, b: Aggregate) -> dict[str, float]:
    out = {k: b.means[k] - a.means[k] for k in METRIC_KEYS}
    if a.reward is not None and b.reward is not None:
        out["reward"] = b.reward - a.reward
    return out


def compare_runs(a: MetricReport, b: MetricReport) -> ComparisonReport:
    """Delta report between two runs over the same dataset and settings."""
    for key in SETTINGS_KEYS:
        va, vb = a.metadata.get(key), b.metadata.get(key)
        if va != vb:
            raise DataError(
                f"reports are not comparable: {key} differs ({va!r} vs {vb!r})")
    if set(a.per_category) != set(b.per_category):
        raise DataError("reports are not comparable: category sets differ")
    return ComparisonReport(
        model_a=a.model,
        model_b=b.model,
        overall=_deltas(a.overall, b.overall),
        per_category={c: _deltas(a.per_category[c], b.per_category[c])
                      for c in a.per_category},
        metadata={key: a.metadata.get(key) for key in SETTINGS_KEYS},
    )


def _fmt_metric(value: float) -> str:
    return f"{value * 100:.2f}"


def _fmt_reward(value: float | None) -> str:
    return "-" if value is None else f"{value:.4f}"


def _render_rows(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows
              else len(header[i]) for i in range(len(header))]
    lines = []
    for row in [header, *rows]:
        cells = [row[0].ljust(widths[0])]
        cells += [row[i].rjust(widths[i]) for i in range(1, len(row))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def _has_reward(report: MetricReport) -> bool:
    return report.overall.reward is not None or any(
        a.reward is not None for a in report.per_category.values())


def render_report_table(report: MetricReport) -> str:
    """Aligned table: overall row first, then categories by size."""
    with_reward = _has_reward(report)
    header = ["category", "n"] + [h for h, _ in TABLE_COLUMNS]
    if with_reward:
        header.append("reward")

    def row(name: str, agg: Aggregate) -> list[str]:
        cells = [name, str(agg.count)]
        cells += [_fmt_metric(agg.means[key]) for _, key in TABLE_COLUMNS]
        if with_reward:
            cells.append(_fmt_reward(agg.reward))
        return cells

    rows = [row("overall", report.overall)]
    rows += [row(c, a) for c, a in report.per_category.items()]
    meta = report.metadata
    head = (f"model: {report.model}\n"
            f"examples: {meta.get('example_count')}  "
            f"policy: {meta.get('policy')}  multi_ref: {meta.get('multi_ref')}  "
            f"smoothing: {meta.get('smoothing')}\n"
            f"dataset_fingerprint: {meta.get('dataset_fingerprint')}\n")
    return head + _render_rows(header, rows) + "\n"


def render_category_csv(report: MetricReport) -> str:
    """Per-category CSV (one row per category) for external plotting."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["category", "count"] + [key for _, key in TABLE_COLUMNS]
                    + ["reward"])
    for category, agg in report.per_category.items():
        writer.writerow(
            [category, agg.count]
            + [_fmt_metric(agg.means[key]) for _, key in TABLE_COLUMNS]
            + [_fmt_reward(agg.reward)])
    return buf.getvalue()


def render_comparison_table(comp: ComparisonReport) -> str:
    with_reward = any("reward" in d for d in
                      [comp.overall, *comp.per_category.values()])
    header = ["category"] + [h for h, _ in TABLE_COLUMNS]
    if with_reward:
        header.append("reward")

    def row(name: str, deltas: dict[str, float]) -> list[str]:
        cells = [name]
        cells += [f"{deltas[key] * 100:+.2f}" for _, key in TABLE_COLUMNS]
        if with_reward:
            cells.append(f"{deltas['reward']:+.4f}" if "reward" in deltas else "-")
        return cells

    rows = [row("overall", comp.overall)]
    rows += [row(c, d) for c, d in comp.per_category.items()]
    head = (f"delta: {comp.model_b} - {comp.model_a}\n"
            f"dataset_fingerprint: {comp.metadata.get('dataset_fingerprint')}\n")
    return head + _render_rows(header, rows) + "\n"


def render_category_table(table: CategoryTable) -> str:
    """Category-distribution printout: buckets, member categories with
    counts, and the counted total (never a declared or hardcoded size)."""
    lines = ["count range  categories"]
    for label, _, names in table.rows():
        members = ", ".join(f"{n} ({table.counts[n]})" for n in names) or "-"
        lines.append(f"{label:<11}  {members}")
    lines.append(f"total: {table.total()} examples across "
                 f"{len(table.counts)} categories")
    return "\n".join(lines) + "\n"
