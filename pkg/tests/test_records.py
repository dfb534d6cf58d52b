import json
import logging
from itertools import islice

import pytest

from cureval.records import (
    Bucket,
    CategoryTable,
    CorpusFormatError,
    DEFAULT_BUCKETS,
    DuplicateIdError,
    EvalExample,
    InstructionRecord,
    PredictionRecord,
    read_corpus,
    write_corpus,
)


def make_rows(n):
    return [{"id": f"r{i}", "instruction": f"问题{i}", "output": f"回答{i}",
             "source": "medical" if i % 2 else "general"}
            for i in range(n)]


def test_instruction_passthrough_in_order(write_jsonl):
    path = write_jsonl("c.jsonl", make_rows(3))
    records = list(read_corpus(path, "instruction"))
    assert [r.id for r in records] == ["r0", "r1", "r2"]
    assert records[1].instruction == "问题1"
    assert records[1].source == "medical"


def test_round_trip_identity(tmp_path, write_jsonl):
    src = write_jsonl("in.jsonl", make_rows(20))
    records = list(read_corpus(src, "instruction"))
    out = tmp_path / "out.jsonl"
    assert write_corpus(iter(records), out) == 20
    assert list(read_corpus(out, "instruction")) == records


def test_write_empty_stream(tmp_path):
    out = tmp_path / "empty.jsonl"
    assert write_corpus(iter([]), out) == 0
    assert out.read_text() == ""
    assert list(read_corpus(out, "instruction")) == []


def test_malformed_line_names_line_and_offset(write_jsonl):
    rows = make_rows(3)
    lines = [json.dumps(rows[0]), '{"id": "r1", "instruction": "截断',
             json.dumps(rows[2])]
    path = write_jsonl("bad.jsonl", lines)
    with pytest.raises(CorpusFormatError) as err:
        list(read_corpus(path, "instruction"))
    assert err.value.line_no == 2
    first = (lines[0] + "\n").encode("utf-8")
    assert err.value.byte_offset == len(first)
    assert "2" in str(err.value)


def test_skip_mode_resumes_and_logs(write_jsonl, caplog):
    rows = make_rows(3)
    lines = [json.dumps(rows[0]), "{not json", json.dumps(rows[2])]
    path = write_jsonl("bad.jsonl", lines)
    with caplog.at_level(logging.WARNING, logger="cureval.records"):
        records = list(read_corpus(path, "instruction", on_malformed="skip"))
    assert [r.id for r in records] == ["r0", "r2"]
    assert any("skipping" in msg for msg in caplog.messages)


def test_skip_mode_covers_schema_errors(write_jsonl):
    path = write_jsonl("bad.jsonl", [
        {"id": "ok", "instruction": "q", "output": "a"},
        {"id": "no_output", "instruction": "q"},
    ])
    records = list(read_corpus(path, "instruction", on_malformed="skip"))
    assert [r.id for r in records] == ["ok"]
    with pytest.raises(CorpusFormatError):
        list(read_corpus(path, "instruction"))


def test_missing_id_synthesized_from_filename_and_line(write_jsonl):
    path = write_jsonl("named.jsonl", [
        {"instruction": "q", "output": "a"},
        {"instruction": "q2", "output": "a2"},
    ])
    records = list(read_corpus(path, "instruction"))
    assert records[0].id == "named.jsonl:1"
    assert records[1].id == "named.jsonl:2"


def test_blank_lines_are_not_records(write_jsonl):
    path = write_jsonl("gaps.jsonl", [
        json.dumps(make_rows(1)[0]), "", "   ",
        json.dumps({"instruction": "q", "output": "a"})])
    records = list(read_corpus(path, "instruction"))
    assert len(records) == 2
    # synthesized id still reflects the physical line number
    assert records[1].id == "gaps.jsonl:4"


def test_invalid_field_values_rejected(write_jsonl):
    for row in (
        {"id": "x", "instruction": "q", "output": "a", "score": 1.5},
        {"id": "x", "instruction": "q", "output": "a", "source": "webcrawl"},
        {"id": "x", "instruction": "q", "output": 3},
        {"id": "x", "instruction": "q", "output": "a", "input": 3},
        {"id": "", "instruction": "q", "output": "a"},
    ):
        path = write_jsonl("bad.jsonl", [row])
        with pytest.raises(CorpusFormatError):
            list(read_corpus(path, "instruction"))


def test_benchmark_answers_form(write_jsonl):
    path = write_jsonl("bench.jsonl", [
        {"id": "q1", "question": "发烧怎么办", "category": "pediatrics",
         "answers": ["a1", "a2", "a3", "a4"]},
    ])
    (example,) = read_corpus(path, "benchmark")
    assert isinstance(example, EvalExample)
    assert example.references == ("a1", "a2", "a3", "a4")
    assert example.category == "pediatrics"


def test_benchmark_pair_form_groups_contiguous_rows(write_jsonl):
    path = write_jsonl("bench.jsonl", [
        {"id": "q1", "question": "甲", "category": "c1", "answer": "a1"},
        {"id": "q1", "question": "甲", "category": "c1", "answer": "a2"},
        {"id": "q2", "question": "乙", "category": "c2", "answer": "b1"},
    ])
    examples = list(read_corpus(path, "benchmark"))
    assert [e.id for e in examples] == ["q1", "q2"]
    assert examples[0].references == ("a1", "a2")
    assert examples[1].references == ("b1",)


def test_benchmark_pair_form_requires_explicit_id(write_jsonl):
    path = write_jsonl("bench.jsonl", [
        {"question": "甲", "category": "c1", "answer": "a1"}])
    with pytest.raises(CorpusFormatError):
        list(read_corpus(path, "benchmark"))


def test_benchmark_empty_answers_rejected(write_jsonl):
    path = write_jsonl("bench.jsonl", [
        {"id": "q1", "question": "甲", "category": "c1", "answers": []}])
    with pytest.raises(CorpusFormatError):
        list(read_corpus(path, "benchmark"))


def test_strict_ids_rejects_duplicates(write_jsonl):
    rows = [{"id": "same", "instruction": "q", "output": "a"}] * 2
    path = write_jsonl("dup.jsonl", rows)
    assert len(list(read_corpus(path, "instruction"))) == 2
    with pytest.raises(DuplicateIdError):
        list(read_corpus(path, "instruction", strict_ids=True))


def test_strict_ids_rejects_duplicate_benchmark_groups(write_jsonl):
    path = write_jsonl("bench.jsonl", [
        {"id": "q1", "question": "甲", "category": "c", "answers": ["a"]},
        {"id": "q2", "question": "乙", "category": "c", "answers": ["a"]},
        {"id": "q1", "question": "甲", "category": "c", "answers": ["a"]},
    ])
    with pytest.raises(DuplicateIdError):
        list(read_corpus(path, "benchmark", strict_ids=True))


def test_predictions_schema(write_jsonl):
    path = write_jsonl("preds.jsonl", [{"id": "q1", "prediction": "回答"}])
    (pred,) = read_corpus(path, "predictions")
    assert pred == PredictionRecord("q1", "回答")


def test_unknown_schema_rejected(tmp_path):
    with pytest.raises(ValueError):
        list(read_corpus(tmp_path / "x.jsonl", "mystery"))


def test_reading_is_streaming(write_jsonl):
    path = write_jsonl("big.jsonl", make_rows(5000))
    stream = read_corpus(path, "instruction")
    head = list(islice(stream, 3))
    assert [r.id for r in head] == ["r0", "r1", "r2"]
    stream.close()  # generator: nothing past the consumed prefix was parsed


def test_write_failure_leaves_no_partial_file(tmp_path):
    out = tmp_path / "out.jsonl"

    def explode():
        yield InstructionRecord("a", "q", "answer")
        raise RuntimeError("mid-stream failure")

    with pytest.raises(RuntimeError):
        write_corpus(explode(), out)
    assert not out.exists()
    assert list(tmp_path.glob("*.tmp")) == []


def test_bucket_boundaries_are_lower_exclusive_upper_inclusive():
    table = CategoryTable({})
    assert table.bucket_of(1000).label == "<1000"
    assert table.bucket_of(1001).label == "1000-5000"
    assert table.bucket_of(5000).label == "1000-5000"
    assert table.bucket_of(10000).label == "5000-10000"
    assert table.bucket_of(10001).label == ">10000"
    assert table.bucket_of(30).label == "<1000"


def test_every_count_falls_in_exactly_one_bucket():
    for count in (1, 999, 1000, 1001, 4999, 5000, 5001, 10000, 10001, 70000):
        hits = [b for b in DEFAULT_BUCKETS if b.contains(count)]
        assert len(hits) == 1, count


def test_category_table_rows_and_total():
    table = CategoryTable({"internal medicine": 17000, "surgery": 8000,
                           "other": 30})
    assert table.total() == 25030
    rows = {label: names for label, _, names in table.rows()}
    assert rows[">10000"] == ["internal medicine"]
    assert rows["5000-10000"] == ["surgery"]
    assert rows["<1000"] == ["other"]


def test_instruction_record_validation():
    with pytest.raises(ValueError):
        InstructionRecord("", "q", "a")
    with pytest.raises(ValueError):
        InstructionRecord("x", "q", "a", score=-0.1)
    with pytest.raises(ValueError):
        InstructionRecord("x", "q", "a", source="scraped")
    rec = InstructionRecord("x", "q", "a", score=0.5)
    assert rec.score == 0.5


def test_eval_example_needs_references():
    with pytest.raises(ValueError):
        EvalExample("q", "question", (), "cat")
