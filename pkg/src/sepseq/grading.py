"""Answer extraction and grading.

Extraction precedence: the last "Answer:"-prefixed line whose payload parses
as the task's expected kind; otherwise the last standalone token of that kind
(integer for index/count tasks, uppercase letter A-H for choice tasks, a
bracketed array for verbatim repetition). Absence is encoded as kind=none,
never as an exception, so Answer Rate falls straight out of the records.

Repetition is graded strictly: the extracted array must equal the canonical
rendering byte for byte; whitespace-only differences count as format
violations, not matches. A response that is nothing but the array (plus at
most one trailing newline) is taken whole.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Iterable

from .client import RunRecord
from .datagen import TaskType
from .errors import ExecutionFailed
from .formatting import render_decimal
from .prompting import ExecSpec, PromptStrategy, extract_program, run_program


class AnswerKind(Enum):
    INTEGER = "integer"
    DECIMAL = "decimal"
    OPTION_LETTER = "option_letter"
    ARRAY_TEXT = "array_text"
    NONE = "none"


EXPECTED_KIND = {
    TaskType.MAX_INT: AnswerKind.INTEGER,
    TaskType.MIN_INT: AnswerKind.INTEGER,
    TaskType.MAX_FLOAT: AnswerKind.INTEGER,
    TaskType.MIN_FLOAT: AnswerKind.INTEGER,
    TaskType.INDEXING: AnswerKind.INTEGER,
    TaskType.COUNTING: AnswerKind.INTEGER,
    TaskType.NUMBER_STRING: AnswerKind.INTEGER,
    TaskType.REPETITION: AnswerKind.ARRAY_TEXT,
    TaskType.NUMBER_LIST: AnswerKind.OPTION_LETTER,
    TaskType.STOCK: AnswerKind.OPTION_LETTER,
    TaskType.WEATHER: AnswerKind.OPTION_LETTER,
}


@dataclass(frozen=True)
class ExtractedAnswer:
    kind: AnswerKind
    value: str | None
    start: int = -1
    end: int = -1

    def __post_init__(self) -> None:
        if (self.kind is AnswerKind.NONE) != (self.value is None):
            raise ValueError("kind=none iff value is absent")


NO_ANSWER = ExtractedAnswer(AnswerKind.NONE, None)


@dataclass(frozen=True)
class GradeResult:
    valid: bool
    correct: bool
    reason: str  # matched / wrong_value / no_answer / format_violation / execution_failed

    def __post_init__(self) -> None:
        if self.correct and not self.valid:
            raise ValueError("correct implies valid")


_ANSWER_LINE_RE = re.compile(r"^[ \t>*_`#-]*answer\s*:\s*(.*?)\s*$", re.IGNORECASE | re.MULTILINE)
_INT_RE = re.compile(r"[-+]?\d+")
_DEC_RE = re.compile(r"[-+]?\d+\.\d+")
_LETTER_RE = re.compile(r"[A-Ha-h]")
_ARRAY_RE = re.compile(r"\[[^\]]*\]")
_TOKEN_TRIM = "()[]{}.,;:!?*'\"`"


def _parse_as(kind: AnswerKind, text: str) -> str | None:
    text = text.strip().strip("*`_").strip()
    if kind is AnswerKind.INTEGER:
        return text if _INT_RE.fullmatch(text) else None
    if kind is AnswerKind.DECIMAL:
        return text if _DEC_RE.fullmatch(text) else None
    if kind is AnswerKind.OPTION_LETTER:
        return text.upper() if _LETTER_RE.fullmatch(text) else None
    if kind is AnswerKind.ARRAY_TEXT:
        return text if _ARRAY_RE.fullmatch(text) else None
    return None


def _fallback_token(kind: AnswerKind, text: str) -> ExtractedAnswer:
    if kind is AnswerKind.ARRAY_TEXT:
        matches = list(_ARRAY_RE.finditer(text))
        if matches:
            m = matches[-1]
            return ExtractedAnswer(kind, m.group(0), m.start(), m.end())
        return NO_ANSWER
    best: ExtractedAnswer = NO_ANSWER
    for m in re.finditer(r"\S+", text):
        token = m.group(0)
        stripped = token.strip(_TOKEN_TRIM)
        if not stripped:
            continue
        if kind is AnswerKind.INTEGER and _INT_RE.fullmatch(stripped):
            value = stripped
        elif kind is AnswerKind.DECIMAL and _DEC_RE.fullmatch(stripped):
            value = stripped
        elif kind is AnswerKind.OPTION_LETTER and re.fullmatch(r"[A-H]", stripped):
            # bare-letter fallback is uppercase-only so prose ("a value") stays null
            value = stripped
        else:
            continue
        start = m.start() + token.index(stripped)
        best = ExtractedAnswer(kind, value, start, start + len(stripped))
    return best


def extract_answer(response: str, task: TaskType) -> ExtractedAnswer:
    """Deterministically pull the final answer out of model output."""
    kind = EXPECTED_KIND[task]
    if task is TaskType.REPETITION:
        # strict path: the response is the array itself, at most one trailing newline
        whole = response[:-1] if response.endswith("\n") else response
        if _ARRAY_RE.fullmatch(whole):
            return ExtractedAnswer(kind, whole, 0, len(whole))
    for m in reversed(list(_ANSWER_LINE_RE.finditer(response))):
        value = _parse_as(kind, m.group(1))
        if value is not None:
            return ExtractedAnswer(kind, value, m.start(1), m.end(1))
    return _fallback_token(kind, response)


def _squash_ws(text: str) -> str:
    return re.sub(r"\s+", "", text)


def grade(extracted: ExtractedAnswer, gold: str, task: TaskType) -> GradeResult:
    """Compare an extracted answer against gold under the task's rule."""
    if extracted.kind is AnswerKind.NONE:
        return GradeResult(valid=False, correct=False, reason="no_answer")
    value = extracted.value or ""
    try:
        if task is TaskType.REPETITION:
            if value == gold:
                return GradeResult(True, True, "matched")
            reason = "format_violation" if _squash_ws(value) == _squash_ws(gold) else "wrong_value"
            return GradeResult(True, False, reason)
        if EXPECTED_KIND[task] is AnswerKind.OPTION_LETTER:
            correct = value.strip().upper() == gold.strip().upper()
        elif extracted.kind is AnswerKind.DECIMAL:
            correct = render_decimal(float(value)) == render_decimal(float(gold))
        else:
            correct = int(value) == int(gold)
    except ValueError:
        return GradeResult(True, False, "format_violation")
    return GradeResult(True, correct, "matched" if correct else "wrong_value")


def grade_response(response: str, gold: str, task: TaskType) -> GradeResult:
    return grade(extract_answer(response, task), gold, task)


# ---------------------------------------------------------------------------
# Record pipeline: RunRecord -> GradedRecord
# ---------------------------------------------------------------------------

@dataclass
class GradedRecord(RunRecord):
    extracted_kind: str = AnswerKind.NONE.value
    extracted_value: str | None = None
    valid: bool = False
    correct: bool = False
    reason: str = "no_answer"

    @classmethod
    def from_dict(cls, record: dict) -> "GradedRecord":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in record.items() if k in names})


def grade_record(record: RunRecord, runner: ExecSpec | None = None) -> GradedRecord:
    """Grade one transcript record; runs the program first for pot records."""
    base = record.to_dict()
    task = TaskType(record.task)
    text = record.content
    if record.error is not None:
        return GradedRecord(**base, reason="no_answer")
    if record.strategy == PromptStrategy.POT.value:
        try:
            text = run_program(extract_program(record.content), runner or ExecSpec())
        except ExecutionFailed:
            return GradedRecord(**base, reason="execution_failed")
    extracted = extract_answer(text, task)
    result = grade(extracted, record.gold, task)
    return GradedRecord(
        **base,
        extracted_kind=extracted.kind.value,
        extracted_value=extracted.value,
        valid=result.valid,
        correct=result.correct,
        reason=result.reason,
    )


def grade_records(
    records: Iterable[RunRecord], runner: ExecSpec | None = None
) -> list[GradedRecord]:
    ordered = sorted(records, key=lambda r: (r.sample_id, r.run_index))
    return [grade_record(r, runner) for r in ordered]


def write_graded(records: Iterable[GradedRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    return path


def read_graded(path: str | Path) -> list[GradedRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(GradedRecord.from_dict(json.loads(line)))
    return records
