"""Prompt rendering for the four prompting strategies, plus the sandboxed
program runner used by the program-of-thought path.

Templates are plain text files shipped with the package, one per
(task, strategy), with {question}/{payload}/{exemplar} placeholders. The
numerical payload is rendered by the formatting module, so strategy changes
never touch payload bytes.
"""
from __future__ import annotations

import json
import os
import re
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any

from .datagen import Sample, TaskType, exemplar_for
from .errors import ExecutionFailed, UsageError
from .formatting import FormatConfig, FormatMode, join_segmented, render

SYSTEM_TEXT = "You are a precise assistant for numerical sequence analysis."


class PromptStrategy(Enum):
    VANILLA = "vanilla"
    COT = "cot"
    ICL = "icl"
    POT = "pot"


@dataclass(frozen=True)
class RenderedPrompt:
    """A complete prompt plus the metadata needed to reproduce and audit it.

    metadata includes the payload's character span inside user_text, both
    character counts (as-rendered and the plain-delimiter equivalent), and
    the sample's task/gold so offline mocks and re-grading need no corpus
    lookups. It is never sent to a live endpoint.
    """

    system_text: str
    user_text: str
    metadata: dict[str, Any]

    @property
    def payload(self) -> str:
        return self.user_text[self.metadata["payload_start"]:self.metadata["payload_end"]]


@lru_cache(maxsize=None)
def _template(task: TaskType, strategy: PromptStrategy) -> str:
    path = Path(__file__).parent / "templates" / f"{task.value}__{strategy.value}.txt"
    if not path.is_file():
        raise UsageError(f"no template for ({task.value}, {strategy.value})")
    text = path.read_text(encoding="utf-8")
    if text.count("{payload}") != 1:
        raise UsageError(f"template {path.name} must contain exactly one {{payload}}")
    return text


def _struct_items(data: Any) -> list[str]:
    items: list[str] = []
    for element in data:
        if isinstance(element, dict):
            items.append(json.dumps(element, ensure_ascii=False))
        else:
            items.append(json.dumps(element))
    return items


def render_payload(sample: Sample, fmt: FormatConfig) -> str:
    """The formatted data block: sequences via render(), structured lists via
    the same boundary rule, raw strings untouched."""
    if sample.sequence is not None:
        return render(sample.sequence, fmt)
    if isinstance(sample.struct_data, str):
        return sample.struct_data
    return join_segmented(_struct_items(sample.struct_data), fmt)


def _answer_demo(sample: Sample) -> str:
    if sample.task is TaskType.REPETITION:
        return sample.gold_answer
    return f"Answer: {sample.gold_answer}"


def build_prompt(
    sample: Sample,
    strategy: PromptStrategy,
    fmt: FormatConfig,
    exemplar: Sample | None = None,
) -> RenderedPrompt:
    """Render one sample under a strategy; the payload bytes depend only on fmt."""
    template = _template(sample.task, strategy)
    payload = render_payload(sample, fmt)
    payload_vanilla = render_payload(sample, fmt.replace(mode=FormatMode.VANILLA))

    fields: dict[str, str] = {"question": sample.question, "payload": payload}
    if strategy is PromptStrategy.ICL:
        exemplar = exemplar or exemplar_for(sample.task)
        if exemplar.id == sample.id:
            raise UsageError("exemplar must be disjoint from the evaluated sample")
        fields["exemplar"] = "\n\n".join(
            [exemplar.question, render_payload(exemplar, fmt), _answer_demo(exemplar)]
        )

    prefix, suffix = template.split("{payload}")
    head = prefix.format(**fields)
    user_text = head + payload + suffix.format(**fields)

    metadata: dict[str, Any] = {
        "sample_id": sample.id,
        "task": sample.task.value,
        "gold": sample.gold_answer,
        "bin": sample.bin.name if sample.bin else None,
        "strategy": strategy.value,
        "format_mode": fmt.mode.value,
        "k": fmt.segment_size,
        "separator": fmt.separator.name,
        "delimiter": fmt.delimiter,
        "n": len(sample.sequence) if sample.sequence is not None else (
            len(sample.struct_data) if isinstance(sample.struct_data, list) else None
        ),
        "payload_start": len(head),
        "payload_end": len(head) + len(payload),
        "payload_chars": len(payload),
        "payload_chars_vanilla": len(payload_vanilla),
    }
    return RenderedPrompt(system_text=SYSTEM_TEXT, user_text=user_text, metadata=metadata)


# ---------------------------------------------------------------------------
# Program-of-thought execution
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```(?:python\w*|py)?\s*\n(.*?)```", re.DOTALL | re.IGNORECASE)


def extract_program(response: str) -> str:
    """The program body: last fenced code block if any, else the raw text."""
    blocks = _FENCE_RE.findall(response)
    return (blocks[-1] if blocks else response).strip()


@dataclass(frozen=True)
class ExecSpec:
    """How to run a generated program: interpreter argv plus hard limits."""

    argv: tuple[str, ...] = (sys.executable, "-I")
    timeout_s: float = 10.0
    max_output_bytes: int = 65536
    memory_limit_mb: int | None = 512

    def __post_init__(self) -> None:
        if not self.argv:
            raise UsageError("program runner not configured (empty argv); pot is disabled")


def _limit_resources(memory_limit_mb: int | None, cpu_s: int):
    def apply() -> None:
        import resource

        if memory_limit_mb is not None:
            limit = memory_limit_mb * 1024 * 1024
            resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
        resource.setrlimit(resource.RLIMIT_CPU, (cpu_s, cpu_s))

    return apply


def run_program(code: str, runner: ExecSpec) -> str:
    """Run a generated program in a separate process confined to a scratch
    directory and return its captured stdout (truncated to the cap).

    Isolation is process-level: fresh temp cwd, stripped environment, CPU
    time and address-space limits. This is a trust boundary, not a container;
    callers must treat generated code as untrusted.
    """
    with tempfile.TemporaryDirectory(prefix="sepseq-pot-") as scratch:
        path = Path(scratch) / "program.py"
        path.write_text(code, encoding="utf-8")
        env = {"PATH": os.defpath, "HOME": scratch}
        try:
            proc = subprocess.run(
                [*runner.argv, str(path)],
                cwd=scratch,
                env=env,
                capture_output=True,
                timeout=runner.timeout_s,
                preexec_fn=_limit_resources(runner.memory_limit_mb, int(runner.timeout_s) + 1),
            )
        except subprocess.TimeoutExpired as exc:
            raise ExecutionFailed(f"program timed out after {runner.timeout_s}s") from exc
        except OSError as exc:
            raise ExecutionFailed(f"could not run program: {exc}") from exc
    if proc.returncode != 0:
        stderr = proc.stderr.decode(errors="replace")[-500:]
        raise ExecutionFailed(f"program exited {proc.returncode}: {stderr}")
    return proc.stdout[: runner.max_output_bytes].decode(errors="replace")
