"""Separator-insertion formatting and an oracle-verified evaluation harness
for long numerical sequence tasks."""

from .attention import cross_segment_ratio, dispersion_curve, softmax_attention
from .client import ModelEndpoint, RetryPolicy, RunRecord, complete, run_batch
from .datagen import GenSpec, LengthBin, Sample, TaskType, generate, load_real, oracle
from .errors import (
    DataError,
    ExecutionFailed,
    ParseError,
    SepseqError,
    TransportError,
    UsageError,
)
from .formatting import (
    FormatConfig,
    FormatMode,
    NumericalSequence,
    SeparatorSymbol,
    format_sepseq,
    format_vanilla,
    parse_formatted,
)
from .grading import extract_answer, grade, grade_records
from .metrics import accuracy, aggregate, answer_rate, emit_report, relative_improvement
from .prompting import ExecSpec, PromptStrategy, RenderedPrompt, build_prompt, run_program

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "ExecSpec",
    "ExecutionFailed",
    "FormatConfig",
    "FormatMode",
    "GenSpec",
    "LengthBin",
    "ModelEndpoint",
    "NumericalSequence",
    "ParseError",
    "PromptStrategy",
    "RenderedPrompt",
    "RetryPolicy",
    "RunRecord",
    "Sample",
    "SepseqError",
    "SeparatorSymbol",
    "TaskType",
    "TransportError",
    "UsageError",
    "accuracy",
    "aggregate",
    "answer_rate",
    "build_prompt",
    "complete",
    "cross_segment_ratio",
    "dispersion_curve",
    "emit_report",
    "extract_answer",
    "format_sepseq",
    "format_vanilla",
    "generate",
    "grade",
    "grade_records",
    "load_real",
    "oracle",
    "parse_formatted",
    "relative_improvement",
    "run_batch",
    "run_program",
    "softmax_attention",
    "__version__",
]
