"""Acceptance suite: one test per release criterion, each printing a
[PASS]/[FAIL] line and enforcing its runtime budget."""
from __future__ import annotations

import functools
import json
import math
import random
import time
from pathlib import Path

import pytest

import sepseq.client
from sepseq.attention import cross_segment_ratio, dispersion_curve
from sepseq.cli import main as cli_main
from sepseq.datagen import (
    GenSpec,
    LengthBin,
    TaskType,
    generate,
    load_corpus,
    oracle,
    write_corpus,
)
from sepseq.formatting import (
    BACKSLASH,
    CR,
    CRLF,
    LF,
    FormatConfig,
    FormatMode,
    NumericalSequence,
    format_sepseq,
    format_vanilla,
    parse_formatted,
    separator_count,
)
from sepseq.grading import grade_records, read_graded, write_graded
from sepseq.metrics import (
    accuracy,
    aggregate,
    answer_rate,
    emit_report,
    relative_improvement,
    run_metrics,
)
from sepseq.client import ModelEndpoint, read_transcripts, run_batch
from sepseq.prompting import PromptStrategy, build_prompt

REPO_ROOT = Path(__file__).resolve().parent.parent


def criterion(name: str, budget_s: float | None = None):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            started = time.perf_counter()
            try:
                fn(*args, **kwargs)
                elapsed = time.perf_counter() - started
                if budget_s is not None and elapsed > budget_s:
                    raise AssertionError(f"runtime {elapsed:.2f}s exceeds budget {budget_s}s")
            except BaseException:
                print(f"[FAIL] {name}")
                raise
            print(f"[PASS] {name} ({time.perf_counter() - started:.2f}s)")
        return wrapper
    return decorate


@criterion("formatting: substitution-only, separator count, round-trip, worked string", 5.0)
def test_formatting_suite():
    seq = NumericalSequence.from_ints([0, 1, 0, 1, 0, 1, 0, 0, 0])
    cfg = FormatConfig(separator=LF, segment_size=4, mode=FormatMode.SEPSEQ)
    assert format_sepseq(seq, cfg) == "0 1 0 1\n0 1 0 0\n0"

    rng = random.Random(20240)
    separators = [LF, CR, CRLF, BACKSLASH]
    for _ in range(10_000):
        n = rng.randint(1, 96)
        k = rng.randint(1, 48)
        sep = separators[rng.randrange(4)]
        if rng.random() < 0.5:
            seq = NumericalSequence.from_ints(rng.randint(-99, 999) for _ in range(n))
        else:
            seq = NumericalSequence.from_floats((rng.uniform(-10, 10) for _ in range(n)), 3)
        cfg = FormatConfig(separator=sep, segment_size=k, mode=FormatMode.SEPSEQ)
        vanilla = format_vanilla(seq, cfg.delimiter)
        segmented = format_sepseq(seq, cfg)
        expected = separator_count(n, k)
        assert expected == math.ceil(n / k) - 1
        assert segmented.count(sep.text) == expected
        # substitution-only: undoing the boundary swaps recovers vanilla exactly
        assert segmented.replace(sep.text, cfg.delimiter) == vanilla
        assert parse_formatted(segmented, cfg) == seq


@criterion("oracles: worked reference answers + 10^4 naive re-scan agreement per task", 10.0)
def test_oracle_suite():
    worked = [
        (TaskType.MAX_INT, [3, 2, 2, 0, 3, 0, 2, 5, 0, 0, 1, 0, 1, 0, 1, 2, 0, 1, 4], "7"),
        (TaskType.MIN_INT,
         [6, 9, 7, 6, 7, 7, 6, 6, 6, 7, 9, 8, 7, 6, 6, 8, 8, 8, 9, 2, 9, 9, 6, 9, 6, 8, 6, 9, 6],
         "19"),
        (TaskType.COUNTING, [1, 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0], "4"),
        (TaskType.INDEXING, [1, 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0], "8"),
    ]
    for task, values, expected in worked:
        assert oracle(task, NumericalSequence.from_ints(values)) == expected

    def naive(task: TaskType, numbers: list) -> str:
        if task in (TaskType.MAX_INT, TaskType.MAX_FLOAT):
            return str(numbers.index(max(numbers)))
        if task in (TaskType.MIN_INT, TaskType.MIN_FLOAT):
            return str(numbers.index(min(numbers)))
        if task is TaskType.INDEXING:
            return str(len(numbers) - 1 - list(reversed(numbers)).index(1)) if 1 in numbers else "-1"
        return str(numbers.count(1))

    rng = random.Random(777)
    int_tasks = (TaskType.MAX_INT, TaskType.MIN_INT, TaskType.INDEXING, TaskType.COUNTING)
    for task in int_tasks:
        binary = task in (TaskType.INDEXING, TaskType.COUNTING)
        for _ in range(10_000):
            n = rng.randint(1, 48)
            values = [rng.randint(0, 1 if binary else 9) for _ in range(n)]
            seq = NumericalSequence.from_ints(values)
            assert oracle(task, seq) == naive(task, values)
    for task in (TaskType.MAX_FLOAT, TaskType.MIN_FLOAT):
        for _ in range(10_000):
            n = rng.randint(1, 48)
            seq = NumericalSequence.from_floats((rng.uniform(-10, 10) for _ in range(n)), 3)
            assert oracle(task, seq) == naive(task, seq.as_numbers())


@criterion("suppression ratio: equality, 10^4 boosted configs, worked value, dispersion", 5.0)
def test_theorem_suite():
    assert cross_segment_ratio([1.0, 2.0, 3.0], s_sp=0.7, s_sep=0.7) == 1.0

    worked = cross_segment_ratio([1.0] * 9, s_sp=1.0, s_sep=5.0)
    assert abs(worked - 10 * math.e / (9 * math.e + math.e**5)) < 1e-9

    rng = random.Random(31337)
    for _ in range(10_000):
        context = [rng.uniform(-10, 10) for _ in range(rng.randint(1, 40))]
        s_sp = rng.uniform(-10, 10)
        s_sep = s_sp + rng.uniform(1e-6, 12.0)
        assert cross_segment_ratio(context, s_sp, s_sep) < 1.0

    for gap in (0.0, 1.0, math.log(9.0)):
        curve = dispersion_curve([2**p for p in range(3, 13)], gap)
        weights = [w for _, w in curve]
        assert all(a > b for a, b in zip(weights, weights[1:]))


@criterion("metrics: 62.80% exact, acc <= AR fuzzed, +35.5% and -16.4% arithmetic", 5.0)
def test_metrics_suite(tmp_path):
    from helpers import planted  # the planted-record factory

    table5_overall = planted(157, 93, 0)
    assert len(table5_overall) == 250
    acc = accuracy(table5_overall)
    assert acc == 157 / 250
    assert f"{acc * 100:.2f}%" == "62.80%"

    rng = random.Random(55)
    for _ in range(300):
        records = planted(rng.randint(0, 30), rng.randint(0, 30), rng.randint(0, 30),
                          run_index=rng.randint(0, 3))
        if not records:
            continue
        for _, (run_acc, run_ar) in run_metrics(records).items():
            assert run_acc <= run_ar

    improvement = relative_improvement(0.699, 0.516) * 100
    assert abs(improvement - 35.5) < 0.05
    assert abs(improvement - 35.6) < 0.2

    token_change = relative_improvement(2823.0, 3375.0) * 100
    assert abs(token_change - (-16.4)) < 0.05


@criterion("end-to-end mock run: 200 x 10, error/null rates, byte-identical regrade", 60.0)
def test_end_to_end_mock_run(tmp_path, monkeypatch):
    corpus_path = tmp_path / "counting.jsonl"
    samples = generate(GenSpec(task=TaskType.COUNTING, rng_seed=2024))
    assert len(samples) == 200
    write_corpus(samples, corpus_path)
    fmt = FormatConfig(segment_size=16, mode=FormatMode.SEPSEQ)
    prompts = [build_prompt(s, PromptStrategy.VANILLA, fmt) for s in samples]

    transcripts = tmp_path / "transcripts.jsonl"
    records = run_batch(
        ModelEndpoint(model="mock", mock="oracle?error=0.2"),
        prompts, concurrency=8, runs=10, transcript_path=transcripts,
    )
    assert len(records) == 2000
    graded = grade_records(records)
    assert abs(accuracy(graded) - 0.80) <= 0.04
    assert answer_rate(graded) == 1.0

    null_records = run_batch(
        ModelEndpoint(model="mock", mock="null?rate=0.25"), prompts, concurrency=8, runs=10,
    )
    null_graded = grade_records(null_records)
    assert abs(answer_rate(null_graded) - 0.75) <= 0.03

    # network disabled: any HTTP attempt during regrade would explode
    def no_network(*args, **kwargs):
        raise AssertionError("network access during offline regrade")

    monkeypatch.setattr(sepseq.client.requests, "post", no_network)
    first_graded = write_graded(grade_records(read_transcripts(transcripts)), tmp_path / "g1.jsonl")
    second_graded = write_graded(grade_records(read_transcripts(transcripts)), tmp_path / "g2.jsonl")
    assert first_graded.read_bytes() == second_graded.read_bytes()
    stats = aggregate(read_graded(first_graded))
    report_a = emit_report(stats, tmp_path / "report_a")
    report_b = emit_report(aggregate(read_graded(second_graded)), tmp_path / "report_b")
    for fmt_name in report_a:
        assert report_a[fmt_name].read_bytes() == report_b[fmt_name].read_bytes()


@criterion("strict repetition: 250-sample corpus, collapse shape beyond threshold", 60.0)
def test_repetition_corpus_and_collapse(tmp_path):
    samples = generate(GenSpec(task=TaskType.REPETITION, rng_seed=9))
    assert len(samples) == 250
    bins = {bin_: 0 for bin_ in (LengthBin.S, LengthBin.M, LengthBin.L, LengthBin.XL, LengthBin.XXL)}
    for sample in samples:
        bins[sample.bin] += 1
        for value in sample.sequence.values:
            assert len(value.split(".")[1]) == 3
            assert -10.0 <= float(value) <= 10.0
    assert all(count == 50 for count in bins.values())

    corpus_path = write_corpus(samples, tmp_path / "repetition.jsonl")
    assert load_corpus(corpus_path) == samples

    prompts = [build_prompt(s, PromptStrategy.VANILLA, FormatConfig()) for s in samples]
    records = run_batch(
        ModelEndpoint(model="mock", mock="repeat-corruptor?threshold=256"),
        prompts, concurrency=8, runs=1, temperature=0.0,
    )
    graded = grade_records(records)
    by_bin = {}
    for record in graded:
        by_bin.setdefault(record.bin, []).append(record)
    for name in ("S", "M", "L"):
        assert accuracy(by_bin[name]) == 1.0, f"bin {name} below corruption threshold"
    for name in ("XL", "XXL"):
        assert accuracy(by_bin[name]) <= 0.14, f"bin {name} above corruption threshold"


@criterion("paper-scale grid is documented as a recipe, not asserted", 5.0)
def test_headline_results_replaced_by_recipe():
    readme = (REPO_ROOT / "README.md").read_text(encoding="utf-8")
    assert "Reproducing the full grid" in readme
    assert "LLM_API_KEY" in readme
    # the CLI pieces the recipe relies on all exist
    from sepseq.cli import build_parser

    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices  # noqa: SLF001 - introspection in tests
    assert {"gen", "run", "grade", "report", "sweep", "repeat", "attn-math", "probe-report"} <= set(sub)
