"""Shared factories for graded-record fixtures."""
from __future__ import annotations

from sepseq.grading import GradedRecord


def rec(
    sample_id="s0", run_index=0, correct=True, valid=True, task="counting",
    strategy="vanilla", format_mode="vanilla", bin=None,
    completion_tokens=10, total_tokens=50,
) -> GradedRecord:
    return GradedRecord(
        sample_id=sample_id, run_index=run_index, task=task, gold="1", bin=bin,
        strategy=strategy, format_mode=format_mode, k=16, separator="LF",
        payload_chars=5, payload_chars_vanilla=5,
        content="Answer: 1" if valid else "",
        completion_tokens=completion_tokens, total_tokens=total_tokens,
        extracted_kind="integer" if valid else "none",
        extracted_value="1" if valid else None,
        valid=valid, correct=correct,
        reason="matched" if correct else ("wrong_value" if valid else "no_answer"),
    )


def planted(n_correct: int, n_wrong: int, n_null: int, run_index: int = 0) -> list[GradedRecord]:
    records = []
    for i in range(n_correct):
        records.append(rec(sample_id=f"c{i}", run_index=run_index))
    for i in range(n_wrong):
        records.append(rec(sample_id=f"w{i}", run_index=run_index, correct=False))
    for i in range(n_null):
        records.append(rec(sample_id=f"n{i}", run_index=run_index, correct=False, valid=False))
    return records
