"""The ``cureval`` command: curation, evaluation, stratification and
run comparison as subcommands over a shared JSON config.

Flags override config-file keys; the scorer endpoint/credential come
only from environment variables.  Exit codes are a stable contract:
0 success, 1 usage or configuration error, 2 data error, 3 scorer
backend error.  No subcommand leaves a partial output file behind:
everything is written to a temp sibling and atomically renamed.
"""
from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading
from contextlib import contextmanager
from itertools import chain

from . import __version__
from .config import (
    FAILURE_MODES,
    MALFORMED_MODES,
    RunConfig,
    SCORER_KINDS,
    STAGE_NAMES,
    apply_overrides,
    config_from_obj,
    load_config,
)
from .curation import (
    LengthStage,
    NormalizeStage,
    PiiStage,
    QualityStage,
    ScoreStage,
    render_stage_table,
    run_pipeline,
)
from .errors import ConfigError, CurevalError
from .harness import (
    compare_runs,
    evaluate,
    join_predictions,
    render_category_csv,
    render_category_table,
    render_comparison_table,
    render_report_table,
    report_from_obj,
    stratify,
)
from .metrics import MULTI_REF_MODES, SMOOTHING_MODES, corpus_bleu
from .pii import select_patterns
from .records import atomic_writer, read_corpus, write_corpus
from .reward import HttpScorer, ScorerBackend, StubScorer
from .tokenization import POLICIES, tokenize


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the exit-code contract says 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_io_flags(p):
    p.add_argument("--config", metavar="PATH",
                   help="JSON config file; flags below override its keys")
    p.add_argument("--on-malformed", choices=MALFORMED_MODES, default=None,
                   help="fail fast on a malformed input line, or skip it with a log")
    p.add_argument("--strict-ids", action="store_true", default=None,
                   help="reject duplicate explicit record ids")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cureval",
        description="Curate instruction corpora and evaluate QA predictions "
                    "against multi-reference benchmarks.")
    parser.add_argument("--version", action="version",
                        version=f"cureval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser(
        "curate", help="filter and normalize an instruction corpus",
        description="Run the curation pipeline over instruction records and "
                    "write the kept records plus per-stage reports.")
    p.add_argument("inputs", nargs="+", metavar="INPUT",
                   help="instruction corpus files (JSONL)")
    p.add_argument("--output", required=True, metavar="PATH",
                   help="destination for kept records (written atomically)")
    _add_io_flags(p)
    p.add_argument("--stages", metavar="LIST", default=None,
                   help="comma-separated stage order; stages: "
                        + ",".join(STAGE_NAMES))
    p.add_argument("--policy", choices=POLICIES, default=None,
                   help="tokenization policy for the length filter")
    p.add_argument("--min-tokens", type=int, metavar="N", default=None,
                   help="discard answers with fewer than N tokens")
    p.add_argument("--score-threshold", type=float, metavar="X", default=None,
                   help="discard records scored strictly below X")
    p.add_argument("--scorer", choices=SCORER_KINDS, default=None,
                   help="quality-scoring backend for the score stage")
    p.add_argument("--on-scorer-failure", choices=FAILURE_MODES, default=None,
                   help="after retries: discard the records or abort the run")
    p.add_argument("--assume-prescored", action="store_true", default=None,
                   help="allow a quality stage without a score stage")
    p.add_argument("--pii-pattern", action="append", metavar="NAME=on|off",
                   default=None, help="toggle one PII pattern (repeatable)")
    p.add_argument("--workers", type=int, metavar="N", default=None,
                   help="worker threads (output is identical for any count)")
    p.add_argument("--chunk-size", type=int, metavar="N", default=None,
                   help="records per work chunk")
    p.add_argument("--report-json", metavar="PATH", default=None,
                   help="write stage reports as JSON")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser(
        "eval", help="score predictions against a benchmark",
        description="Join predictions with a benchmark by id, score every "
                    "example, and report aggregates overall and per category.")
    p.add_argument("benchmark", metavar="BENCH", help="benchmark file (JSONL)")
    p.add_argument("predictions", metavar="PREDS", help="predictions file (JSONL)")
    _add_io_flags(p)
    p.add_argument("--model", metavar="NAME", default=None,
                   help="model name stamped on the report")
    p.add_argument("--policy", choices=POLICIES, default=None,
                   help="tokenization policy for all metrics")
    p.add_argument("--multi-ref", choices=MULTI_REF_MODES, default=None,
                   help="multi-reference rule recorded in the report")
    p.add_argument("--smoothing", choices=SMOOTHING_MODES, default=None,
                   help="BLEU zero-precision handling")
    p.add_argument("--max-n", type=int, metavar="N", default=None,
                   help="largest n-gram order for GLEU pooling")
    p.add_argument("--coverage-floor", type=float, metavar="X", default=None,
                   help="minimum joined/benchmark ratio, default 1.0")
    p.add_argument("--with-reward", action="store_true", default=None,
                   help="also score (question, prediction) pairs with the scorer")
    p.add_argument("--scorer", choices=SCORER_KINDS, default=None,
                   help="scorer backend used with --with-reward")
    p.add_argument("--workers", type=int, metavar="N", default=None,
                   help="scoring threads (results are order-stable)")
    p.add_argument("--corpus-bleu", action="store_true", default=False,
                   help="also print corpus-level (pooled) BLEU for comparison")
    p.add_argument("--report-table", metavar="PATH", default=None,
                   help="write the aligned table to a file as well")
    p.add_argument("--report-json", metavar="PATH", default=None,
                   help="write the machine-readable report")
    p.add_argument("--report-csv", metavar="PATH", default=None,
                   help="write per-category rows for plotting")
    p.add_argument("--per-example", metavar="PATH", default=None,
                   help="write one score record per example (JSONL)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "stats", help="print a benchmark's category distribution",
        description="Count examples per category and assign size buckets; "
                    "the total is always counted, never declared.")
    p.add_argument("benchmark", metavar="BENCH", help="benchmark file (JSONL)")
    _add_io_flags(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser(
        "compare", help="diff two evaluation reports",
        description="Per-metric deltas (B minus A) between two runs over the "
                    "same dataset fingerprint and metric settings.")
    p.add_argument("report_a", metavar="REPORT_A", help="baseline report JSON")
    p.add_argument("report_b", metavar="REPORT_B", help="candidate report JSON")
    p.add_argument("--output", metavar="PATH", default=None,
                   help="write the comparison as JSON")
    p.set_defaults(func=cmd_compare)
    return parser


def _load_base_config(args) -> RunConfig:
    return load_config(args.config) if args.config else config_from_obj({})


def _overrides(args, keys) -> dict:
    return {key: getattr(args, key) for key in keys}


def _parse_pattern_toggles(pairs) -> dict[str, bool]:
    toggles = {}
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep or value not in ("on", "off"):
            raise ConfigError(
                f"--pii-pattern expects NAME=on or NAME=off, got {pair!r}")
        toggles[name] = value == "on"
    return toggles


def _make_backend(kind: str) -> ScorerBackend:
    return StubScorer() if kind == "stub" else HttpScorer()


def _build_stages(config: RunConfig, backend: ScorerBackend | None):
    patterns = select_patterns(config.pii_patterns)
    stages = []
    for name in config.stages:
        if name == "normalize":
            stages.append(NormalizeStage())
        elif name == "pii":
            stages.append(PiiStage(patterns))
        elif name == "length":
            stages.append(LengthStage(config.min_tokens, config.policy))
        elif name == "score":
            stages.append(ScoreStage(backend,
                                     on_failure=config.on_scorer_failure,
                                     max_inflight=config.max_inflight))
        else:
            stages.append(QualityStage(config.score_threshold))
    return stages


@contextmanager
def _graceful_stop():
    """SIGINT/SIGTERM set a stop event; in-flight chunks still finish."""
    stop = threading.Event()
    previous = {}
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            previous[sig] = signal.signal(sig, lambda *_: stop.set())
        except ValueError:
            pass  # not the main thread (e.g. under a test runner)
    try:
        yield stop
    finally:
        for sig, old in previous.items():
            signal.signal(sig, old)


def _write_text(path, text: str) -> None:
    tmp, commit = atomic_writer(path)
    try:
        tmp.write(text)
        commit()
    except BaseException:
        tmp.close()
        os.unlink(tmp.name)
        raise


def _write_json(path, obj) -> None:
    _write_text(path, json.dumps(obj, ensure_ascii=False, indent=2) + "\n")


def cmd_curate(args) -> int:
    config = _load_base_config(args)
    config = apply_overrides(config, _overrides(args, (
        "policy", "min_tokens", "score_threshold", "scorer",
        "on_scorer_failure", "assume_prescored", "workers", "chunk_size",
        "on_malformed", "strict_ids")))
    if args.stages is not None:
        config = apply_overrides(
            config, {"stages": [s for s in args.stages.split(",") if s]})
    if args.pii_pattern:
        merged = {**config.pii_patterns,
                  **_parse_pattern_toggles(args.pii_pattern)}
        config = apply_overrides(config, {"pii_patterns": merged})

    backend = _make_backend(config.scorer) if "score" in config.stages else None
    stages = _build_stages(config, backend)

    records = chain.from_iterable(
        read_corpus(path, "instruction", on_malformed=config.on_malformed,
                    strict_ids=config.strict_ids)
        for path in args.inputs)

    with _graceful_stop() as stop:
        run = run_pipeline(records, stages, workers=config.workers,
                           chunk_size=config.chunk_size,
                           assume_prescored=config.assume_prescored,
                           stop_event=stop)
        kept = write_corpus(run, args.output)

    total = run.reports[0].input_count if run.reports else 0
    print(render_stage_table(run.reports))
    print(f"kept {kept} of {total} records -> {args.output}")
    if args.report_json:
        _write_json(args.report_json, {
            "input": total, "kept": kept,
            "stages": [r.to_obj() for r in run.reports]})
    if run.interrupted:
        print("cureval: interrupted; consumed input was flushed cleanly",
              file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    config = _load_base_config(args)
    config = apply_overrides(config, _overrides(args, (
        "model", "policy", "multi_ref", "smoothing", "max_n",
        "coverage_floor", "with_reward", "scorer", "workers",
        "on_malformed", "strict_ids", "report_table", "report_json",
        "report_csv", "per_example")))

    backend = _make_backend(config.scorer) if config.with_reward else None
    read = lambda path, schema: read_corpus(
        path, schema, on_malformed=config.on_malformed,
        strict_ids=config.strict_ids)
    bench = list(read(args.benchmark, "benchmark"))
    preds = list(read(args.predictions, "predictions"))

    dump = None
    sink = None
    if config.per_example:
        dump = []
        sink = dump.append

    report = evaluate(
        bench, preds, model=config.model, policy=config.policy,
        max_n=config.max_n, smoothing=config.smoothing,
        multi_ref=config.multi_ref, coverage_floor=config.coverage_floor,
        reward_backend=backend, workers=config.workers,
        per_example_sink=sink)

    if args.corpus_bleu:
        joined = join_predictions(bench, preds,
                                  coverage_floor=config.coverage_floor).joined
        pairs = ((tokenize(ex.prediction, config.policy),
                  [tokenize(r, config.policy) for r in ex.references])
                 for ex in joined)
        scores = corpus_bleu(pairs, smoothing=config.smoothing)
        report.metadata["corpus_bleu"] = list(scores)

    table = render_report_table(report)
    print(table, end="")
    if args.corpus_bleu:
        line = "corpus BLEU-1..4: " + "  ".join(
            f"{s * 100:.2f}" for s in report.metadata["corpus_bleu"])
        print(line)
    if config.report_table:
        _write_text(config.report_table, table)
    if config.report_json:
        _write_json(config.report_json, report.to_obj())
    if config.report_csv:
        _write_text(config.report_csv, render_category_csv(report))
    if config.per_example:
        _write_text(config.per_example, "".join(
            json.dumps(row, ensure_ascii=False) + "\n" for row in dump))
    return 0


def cmd_stats(args) -> int:
    config = _load_base_config(args)
    config = apply_overrides(config, _overrides(args, ("on_malformed", "strict_ids")))
    examples = read_corpus(args.benchmark, "benchmark",
                           on_malformed=config.on_malformed,
                           strict_ids=config.strict_ids)
    table = stratify(examples)
    print(render_category_table(table), end="")
    return 0


def cmd_compare(args) -> int:
    reports = []
    for path in (args.report_a, args.report_b):
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except ValueError as exc:
                raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        reports.append(report_from_obj(obj))
    comparison = compare_runs(reports[0], reports[1])
    print(render_comparison_table(comparison), end="")
    if args.output:
        _write_json(args.output, comparison.to_obj())
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CurevalError as exc:
        print(f"cureval: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"cureval: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
