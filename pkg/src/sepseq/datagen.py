"""Benchmark corpus generation, loading, and brute-force answer oracles.

Seven task types are generated deterministically from a seed; four are loaded
from structured files. Every generated sample carries a gold answer produced
by an exhaustive-scan oracle, so the whole pipeline can be verified closed
loop without any model.
"""
from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

from .errors import DataError, UsageError
from .formatting import NumberKind, NumericalSequence, render_decimal


class TaskType(Enum):
    MAX_INT = "max_int"
    MIN_INT = "min_int"
    MAX_FLOAT = "max_float"
    MIN_FLOAT = "min_float"
    INDEXING = "indexing"
    COUNTING = "counting"
    REPETITION = "repetition"
    NUMBER_STRING = "number_string"
    NUMBER_LIST = "number_list"
    STOCK = "stock"
    WEATHER = "weather"


GENERATED_TASKS = frozenset(
    {
        TaskType.MAX_INT,
        TaskType.MIN_INT,
        TaskType.MAX_FLOAT,
        TaskType.MIN_FLOAT,
        TaskType.INDEXING,
        TaskType.COUNTING,
        TaskType.REPETITION,
    }
)
REAL_TASKS = frozenset(
    {TaskType.NUMBER_STRING, TaskType.NUMBER_LIST, TaskType.STOCK, TaskType.WEATHER}
)
DECIMAL_TASKS = frozenset({TaskType.MAX_FLOAT, TaskType.MIN_FLOAT, TaskType.REPETITION})
BINARY_TASKS = frozenset({TaskType.INDEXING, TaskType.COUNTING})
CHOICE_TASKS = frozenset({TaskType.NUMBER_LIST, TaskType.STOCK, TaskType.WEATHER})


class LengthBin(Enum):
    """Sequence-length intervals; bounds are inclusive on both ends here
    because lengths are integers ((32,128] == [33,128])."""

    S = (2, 32)
    M = (33, 128)
    L = (129, 256)
    XL = (257, 512)
    XXL = (513, 1024)

    @property
    def lo(self) -> int:
        return self.value[0]

    @property
    def hi(self) -> int:
        return self.value[1]

    def contains(self, n: int) -> bool:
        return self.lo <= n <= self.hi


DEFAULT_BINS = (LengthBin.S, LengthBin.M, LengthBin.L, LengthBin.XL)
REPETITION_BINS = DEFAULT_BINS + (LengthBin.XXL,)

QUESTIONS = {
    TaskType.MAX_INT: "Identify the index (0-based) of the maximum integer in the sequence.",
    TaskType.MIN_INT: "Identify the index (0-based) of the minimum integer in the sequence.",
    TaskType.MAX_FLOAT: "Identify the index (0-based) of the maximum floating-point number in the sequence.",
    TaskType.MIN_FLOAT: "Identify the index (0-based) of the minimum floating-point number in the sequence.",
    TaskType.INDEXING: "Identify the index (0-based) of the last occurrence of 1 in the binary sequence.",
    TaskType.COUNTING: "How many 1's are in the sequence?",
    TaskType.REPETITION: (
        "Reproduce the given numerical sequence exactly, without any additions, "
        "omissions, or alterations."
    ),
}

_NUMBER_RUN_RE = re.compile(r"[0-9]+")


@dataclass(frozen=True)
class Sample:
    """One benchmark item. Exactly one of sequence / struct_data is set."""

    id: str
    task: TaskType
    question: str
    gold_answer: str
    bin: LengthBin | None = None
    sequence: NumericalSequence | None = None
    struct_data: Any = None
    seed: int = 0

    def __post_init__(self) -> None:
        if (self.sequence is None) == (self.struct_data is None):
            raise UsageError("sample needs exactly one of sequence / struct_data")


@dataclass(frozen=True)
class GenSpec:
    """Deterministic recipe for one generated sub-corpus."""

    task: TaskType
    bins: tuple[LengthBin, ...] | None = None
    per_bin: int = 50
    rng_seed: int = 0
    int_range: tuple[int, int] = (0, 9)
    float_range: tuple[float, float] = (-10.0, 10.0)
    float_precision: int = 3
    one_density: float = 0.25

    def __post_init__(self) -> None:
        if self.per_bin < 1:
            raise UsageError("per_bin must be >= 1")

    def effective_bins(self) -> tuple[LengthBin, ...]:
        if self.bins is None:
            return REPETITION_BINS if self.task is TaskType.REPETITION else DEFAULT_BINS
        if LengthBin.XXL in self.bins and self.task is not TaskType.REPETITION:
            raise UsageError("the XXL bin is reserved for the repetition task")
        return self.bins

    def echo(self) -> dict[str, Any]:
        """Generation metadata recorded alongside a corpus."""
        return {
            "task": self.task.value,
            "bins": [b.name for b in self.effective_bins()],
            "per_bin": self.per_bin,
            "rng_seed": self.rng_seed,
            "int_range": list(self.int_range),
            "float_range": list(self.float_range),
            "float_precision": self.float_precision,
            "one_density": self.one_density,
        }


def derive_seed(*parts: Any) -> int:
    """Stable 64-bit seed from arbitrary parts (platform-independent)."""
    blob = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def oracle(task: TaskType, seq: NumericalSequence) -> str:
    """Exhaustive-scan gold answer for a generated task.

    Extremum tasks return the index of the first occurrence; indexing returns
    the last index holding 1 (or "-1" on an all-zero input); counting returns
    the number of 1s; repetition returns the strict array rendering.
    """
    if task not in GENERATED_TASKS:
        raise UsageError(f"no oracle for task {task.value}")
    if task is TaskType.REPETITION:
        return strict_array(seq)
    numbers = seq.as_numbers()
    if task in (TaskType.MAX_INT, TaskType.MAX_FLOAT):
        best = 0
        for i, v in enumerate(numbers):
            if v > numbers[best]:
                best = i
        return str(best)
    if task in (TaskType.MIN_INT, TaskType.MIN_FLOAT):
        best = 0
        for i, v in enumerate(numbers):
            if v < numbers[best]:
                best = i
        return str(best)
    if task is TaskType.INDEXING:
        last = -1
        for i, v in enumerate(numbers):
            if v == 1:
                last = i
        return str(last)
    # counting
    return str(sum(1 for v in numbers if v == 1))


def strict_array(seq: NumericalSequence) -> str:
    """Canonical strict rendering used to grade verbatim repetition."""
    return "[" + ", ".join(seq.values) + "]"


def count_number_runs(text: str) -> int:
    """Count maximal runs of consecutive digits; 'a243b' counts once."""
    return len(_NUMBER_RUN_RE.findall(text))


def _gen_sequence(task: TaskType, n: int, rng: random.Random, spec: GenSpec) -> NumericalSequence:
    if task in (TaskType.MAX_INT, TaskType.MIN_INT):
        lo, hi = spec.int_range
        return NumericalSequence.from_ints(rng.randint(lo, hi) for _ in range(n))
    if task in DECIMAL_TASKS:
        lo, hi = spec.float_range
        return NumericalSequence.from_floats(
            (rng.uniform(lo, hi) for _ in range(n)), precision=spec.float_precision
        )
    # binary tasks
    values = [1 if rng.random() < spec.one_density else 0 for _ in range(n)]
    if task is TaskType.INDEXING and 1 not in values:
        values[rng.randrange(n)] = 1
    return NumericalSequence.from_ints(values)


def generate(spec: GenSpec) -> list[Sample]:
    """Produce per_bin samples per bin; a pure function of the GenSpec."""
    if spec.task not in GENERATED_TASKS:
        raise UsageError(f"task {spec.task.value} is loaded from files, not generated")
    samples: list[Sample] = []
    for length_bin in spec.effective_bins():
        for i in range(spec.per_bin):
            seed = derive_seed(spec.rng_seed, spec.task.value, length_bin.name, i)
            rng = random.Random(seed)
            n = rng.randint(length_bin.lo, length_bin.hi)
            seq = _gen_sequence(spec.task, n, rng, spec)
            samples.append(
                Sample(
                    id=f"{spec.task.value}-{length_bin.name}-{i:03d}",
                    task=spec.task,
                    question=QUESTIONS[spec.task],
                    gold_answer=oracle(spec.task, seq),
                    bin=length_bin,
                    sequence=seq,
                    seed=seed,
                )
            )
    return samples


# ---------------------------------------------------------------------------
# Corpus files: one self-contained JSON record per line.
# ---------------------------------------------------------------------------

def _record_for(sample: Sample) -> dict[str, Any]:
    record: dict[str, Any] = {
        "id": sample.id,
        "task_type": sample.task.value,
        "bin": sample.bin.name if sample.bin else None,
        "question": sample.question,
        "answer": sample.gold_answer,
        "seed": sample.seed,
    }
    if sample.sequence is not None:
        seq = sample.sequence
        if seq.kind is NumberKind.DECIMAL:
            record["ts"] = [float(v) for v in seq.values]
            record["precision"] = seq.precision
        else:
            record["ts"] = [int(v) for v in seq.values]
    else:
        record["struct_data"] = sample.struct_data
    return record


def write_corpus(samples: Iterable[Sample], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(_record_for(sample), ensure_ascii=False) + "\n")
    return path


def _sample_from_record(record: dict[str, Any], where: str) -> Sample:
    try:
        task = TaskType(record["task_type"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{where}: bad or missing task_type") from exc
    rid = str(record.get("id") or where)
    question = record.get("question") or QUESTIONS.get(task)
    if not question:
        raise DataError(f"record {rid}: missing question")
    if "answer" not in record:
        raise DataError(f"record {rid}: missing answer")
    answer = record["answer"]
    bin_name = record.get("bin")
    length_bin = LengthBin[bin_name] if bin_name else None
    if "ts" in record:
        values = record["ts"]
        if not isinstance(values, list) or not values:
            raise DataError(f"record {rid}: ts must be a non-empty array")
        if task in DECIMAL_TASKS:
            precision = int(record.get("precision", 3))
            seq = NumericalSequence.from_floats((float(v) for v in values), precision)
        else:
            seq = NumericalSequence.from_ints(int(v) for v in values)
        return Sample(
            id=rid,
            task=task,
            question=str(question),
            gold_answer=str(answer),
            bin=length_bin,
            sequence=seq,
            seed=int(record.get("seed", 0)),
        )
    if "struct_data" not in record:
        raise DataError(f"record {rid}: needs one of ts / struct_data")
    return Sample(
        id=rid,
        task=task,
        question=str(question),
        gold_answer=str(answer),
        bin=length_bin,
        struct_data=record["struct_data"],
        seed=int(record.get("seed", 0)),
    )


def load_corpus(path: str | Path) -> list[Sample]:
    """Read a corpus file (generated or real records, possibly mixed)."""
    path = Path(path)
    samples: list[Sample] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path.name}:{lineno}: invalid JSON") from exc
            samples.append(_sample_from_record(record, f"{path.name}:{lineno}"))
    return samples


_OPTION_LETTER_RE = re.compile(r"^[A-Ha-h]$")


def load_real(path: str | Path, task: TaskType) -> list[Sample]:
    """Load one of the file-backed tasks, enforcing its record schema."""
    if task not in REAL_TASKS:
        raise UsageError(f"task {task.value} is generated, not loaded")
    samples = load_corpus(path)
    for sample in samples:
        if sample.task is not task:
            raise DataError(f"record {sample.id}: task_type {sample.task.value!r}, expected {task.value!r}")
        if task is TaskType.NUMBER_STRING:
            if not isinstance(sample.struct_data, str) or not sample.struct_data:
                raise DataError(f"record {sample.id}: struct_data must be a non-empty string")
            if not sample.gold_answer.lstrip("-").isdigit():
                raise DataError(f"record {sample.id}: answer must be an integer count")
        else:
            if not isinstance(sample.struct_data, list) or not sample.struct_data:
                raise DataError(f"record {sample.id}: struct_data must be a non-empty array")
            if not _OPTION_LETTER_RE.match(sample.gold_answer):
                raise DataError(f"record {sample.id}: answer must be an option letter A-H")
            if "Options:" not in sample.question:
                raise DataError(f"record {sample.id}: question must carry lettered options")
    return samples


def fixture_path(task: TaskType) -> Path:
    """Shipped fixture file for a file-backed task."""
    return Path(__file__).parent / "data" / f"{task.value}.jsonl"


def exemplar_for(task: TaskType, exemplar_seed: int = 20_240_101) -> Sample:
    """One fixed, reserved demonstration sample, disjoint from any corpus.

    Generated tasks draw from a dedicated seed namespace; file-backed tasks
    use the shipped exemplar fixtures. Ids carry an "exemplar-" prefix so
    disjointness from evaluation corpora is checkable.
    """
    if task in GENERATED_TASKS:
        spec = GenSpec(task=task, bins=(LengthBin.S,), per_bin=1, rng_seed=exemplar_seed)
        sample = generate(spec)[0]
        return Sample(
            id=f"exemplar-{sample.id}",
            task=sample.task,
            question=sample.question,
            gold_answer=sample.gold_answer,
            bin=sample.bin,
            sequence=sample.sequence,
            seed=sample.seed,
        )
    path = Path(__file__).parent / "data" / "real_exemplars.jsonl"
    for sample in load_corpus(path):
        if sample.task is task:
            return sample
    raise UsageError(f"no exemplar available for task {task.value}")
