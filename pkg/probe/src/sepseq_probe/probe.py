"""Measures how a causal language model attends to boundary symbols.

The same random integer sequence is rendered twice: plain (numbers joined by
a delimiter) and segmented (the delimiter after every k-th number replaced by
a separator). For each trial the probe records

  (a) attention from tokens in later segments toward the boundary slots,
      under both renderings (separator slot vs the matching delimiter slot);
  (b) cross-segment attention: from each segment's tokens toward all numbers
      in preceding segments, under both renderings;

aggregated per layer (mean over heads and token pairs, mean/std across
trials) and per head (mean over layers and trials).

Conventions: number positions are 1-based in the emitted report. Attention
"to" a number or boundary sums over its constituent model tokens; attention
"from" a position reads the row of its last constituent token. When a
tokenizer merges a boundary character into the following number token (
common for space-prefixed BPE vocabularies), the slot measurement includes
that merged token; this is unavoidable at the text level and is applied
identically to both renderings.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import torch


class ProbeError(Exception):
    """Base class for probe failures."""


class CapabilityError(ProbeError):
    """Model or tokenizer cannot support the measurement."""


class AlignmentError(ProbeError):
    """Number positions do not map to comparable token spans."""


@dataclass(frozen=True)
class ProbeSpec:
    """What to probe; defaults: 10 trials of 20 integers in 0-9, space
    delimiters, a newline separator every 8 values."""

    model: str
    trials: int = 10
    sequence_length: int = 20
    segment_size: int = 8
    separator_text: str = "\n"
    delimiter_text: str = " "
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ProbeError("trials must be >= 1")
        if self.sequence_length < 2:
            raise ProbeError("sequence_length must be >= 2")
        if self.segment_size < 1:
            raise ProbeError("segment_size must be >= 1")
        if not self.separator_text or not self.delimiter_text:
            raise ProbeError("separator and delimiter texts must be non-empty")

    def echo(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "trials": self.trials,
            "sequence_length": self.sequence_length,
            "segment_size": self.segment_size,
            "separator_text": self.separator_text,
            "delimiter_text": self.delimiter_text,
            "seed": self.seed,
        }


@dataclass
class AttentionStats:
    spec: dict[str, Any]
    per_layer: list[dict[str, Any]]
    per_head: list[dict[str, Any]]
    cross_segment: list[dict[str, Any]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "position_convention": "1-based",
            "spec": self.spec,
            "per_layer": self.per_layer,
            "per_head": self.per_head,
            "cross_segment": self.cross_segment,
        }


def schema_path() -> Path:
    return Path(__file__).parent / "data" / "attention_stats.schema.json"


def validate_stats(body: dict[str, Any]) -> None:
    import jsonschema

    schema = json.loads(schema_path().read_text(encoding="utf-8"))
    try:
        jsonschema.validate(body, schema)
    except jsonschema.ValidationError as exc:
        raise ProbeError(f"stats violate the schema: {exc.message}") from exc


def emit(stats: AttentionStats, path: str | Path) -> Path:
    """Write schema-validated stats JSON (validated on every emit)."""
    body = stats.to_dict()
    validate_stats(body)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        path.write_text(json.dumps(body, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ProbeError(f"cannot write stats to {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------------------
# Rendering and token alignment
# ---------------------------------------------------------------------------

def render_with_spans(
    values: Sequence[int], spec: ProbeSpec, segmented: bool
) -> tuple[str, list[tuple[int, int]], list[tuple[int, int]]]:
    """Text plus char spans of every number and every inter-number boundary."""
    parts: list[str] = []
    number_spans: list[tuple[int, int]] = []
    boundary_spans: list[tuple[int, int]] = []
    pos = 0
    last = len(values) - 1
    for i, value in enumerate(values):
        text = str(value)
        number_spans.append((pos, pos + len(text)))
        parts.append(text)
        pos += len(text)
        if i < last:
            at_boundary = segmented and (i + 1) % spec.segment_size == 0
            boundary = spec.separator_text if at_boundary else spec.delimiter_text
            boundary_spans.append((pos, pos + len(boundary)))
            parts.append(boundary)
            pos += len(boundary)
    return "".join(parts), number_spans, boundary_spans


def _token_spans(
    offsets: list[tuple[int, int]], char_spans: list[tuple[int, int]], what: str
) -> list[list[int]]:
    spans: list[list[int]] = []
    for a, b in char_spans:
        tokens = [t for t, (s, e) in enumerate(offsets) if e > s and s < b and e > a]
        if not tokens:
            raise AlignmentError(f"{what} span [{a},{b}) maps to no token; offsets={offsets}")
        spans.append(tokens)
    return spans


def _check_alignment(
    tok_texts_plain: list[list[str]],
    tok_texts_seg: list[list[str]],
    spec: ProbeSpec,
) -> None:
    """Numbers at identical positions must map to identical token content in
    both renderings, except right after a boundary, where only whitespace or
    boundary characters may differ."""
    strippable = spec.delimiter_text + spec.separator_text
    for i, (plain, seg) in enumerate(zip(tok_texts_plain, tok_texts_seg)):
        after_boundary = i > 0 and i % spec.segment_size == 0
        joined_plain, joined_seg = "".join(plain), "".join(seg)
        if after_boundary:
            joined_plain = joined_plain.lstrip(strippable)
            joined_seg = joined_seg.lstrip(strippable)
        if joined_plain != joined_seg:
            raise AlignmentError(
                f"number position {i + 1} tokenizes differently: "
                f"plain={plain!r} segmented={seg!r}"
            )


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------

@dataclass
class _TrialMeasurement:
    boundary: np.ndarray  # (layers, heads) mean attention to measured boundary slots
    cross: np.ndarray     # (layers, heads) mean cross-segment attention
    token_texts: list[list[str]]


def _measure_rendering(
    model, tokenizer, text: str,
    number_spans: list[tuple[int, int]],
    boundary_spans: list[tuple[int, int]],
    spec: ProbeSpec,
) -> _TrialMeasurement:
    enc = tokenizer(
        text, return_offsets_mapping=True, return_tensors="pt", add_special_tokens=False
    )
    offsets = [tuple(pair) for pair in enc["offset_mapping"][0].tolist()]
    number_tokens = _token_spans(offsets, number_spans, "number")
    boundary_tokens = _token_spans(offsets, boundary_spans, "boundary")
    token_texts = [
        [text[offsets[t][0]:offsets[t][1]] for t in span] for span in number_tokens
    ]

    device = next(model.parameters()).device
    with torch.no_grad():
        out = model(input_ids=enc["input_ids"].to(device), output_attentions=True)
    attentions = getattr(out, "attentions", None)
    if not attentions:
        raise CapabilityError("model did not expose attention weights")
    # (layers, heads, seq, seq)
    attn = torch.stack([layer[0] for layer in attentions]).cpu().numpy()

    n = len(number_spans)
    k = spec.segment_size
    measured_slots = [j - 1 for j in range(k, n, k)]  # slot j-1 sits after number j

    boundary_values: list[np.ndarray] = []
    for slot in measured_slots:
        target_cols = boundary_tokens[slot]
        for source in range(slot + 1, n):  # numbers strictly after the boundary
            source_row = number_tokens[source][-1]
            if source_row <= max(target_cols):
                continue
            boundary_values.append(attn[:, :, source_row, target_cols].sum(axis=-1))

    cross_values: list[np.ndarray] = []
    for segment_start in range(k, n, k):  # sources in segment 2, 3, ...
        segment_end = min(segment_start + k, n)
        for source in range(segment_start, segment_end):
            source_row = number_tokens[source][-1]
            for target in range(segment_start):  # every number in earlier segments
                target_cols = number_tokens[target]
                if source_row <= max(target_cols):
                    continue
                cross_values.append(attn[:, :, source_row, target_cols].sum(axis=-1))

    if not boundary_values or not cross_values:
        raise ProbeError(
            "sequence too short to measure: need at least one full segment boundary"
        )
    return _TrialMeasurement(
        boundary=np.mean(boundary_values, axis=0),
        cross=np.mean(cross_values, axis=0),
        token_texts=token_texts,
    )


def _load(spec: ProbeSpec):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(spec.model)
        model = AutoModelForCausalLM.from_pretrained(spec.model, attn_implementation="eager")
    except Exception as exc:  # hub / file / config errors all end up here
        raise CapabilityError(f"cannot load model {spec.model!r}: {exc}") from exc
    return model, tokenizer


def probe(spec: ProbeSpec, model=None, tokenizer=None) -> AttentionStats:
    """Run the full measurement; deterministic for a fixed spec and model."""
    if (model is None) != (tokenizer is None):
        raise ProbeError("pass both model and tokenizer, or neither")
    if model is None:
        model, tokenizer = _load(spec)
    if not getattr(tokenizer, "is_fast", False):
        raise CapabilityError("a fast tokenizer with offset mapping is required")
    model.eval()

    rng = random.Random(spec.seed)
    sep_runs: list[np.ndarray] = []   # per trial: (layers, heads)
    sp_runs: list[np.ndarray] = []
    cross_seg_runs: list[np.ndarray] = []
    cross_van_runs: list[np.ndarray] = []
    for _ in range(spec.trials):
        values = [rng.randint(0, 9) for _ in range(spec.sequence_length)]
        plain_text, plain_nums, plain_bounds = render_with_spans(values, spec, segmented=False)
        seg_text, seg_nums, seg_bounds = render_with_spans(values, spec, segmented=True)
        plain = _measure_rendering(model, tokenizer, plain_text, plain_nums, plain_bounds, spec)
        seg = _measure_rendering(model, tokenizer, seg_text, seg_nums, seg_bounds, spec)
        _check_alignment(plain.token_texts, seg.token_texts, spec)
        sp_runs.append(plain.boundary)
        sep_runs.append(seg.boundary)
        cross_van_runs.append(plain.cross)
        cross_seg_runs.append(seg.cross)

    sep = np.stack(sep_runs)          # (trials, layers, heads)
    sp = np.stack(sp_runs)
    cross_seg = np.stack(cross_seg_runs)
    cross_van = np.stack(cross_van_runs)
    layers, heads = sep.shape[1], sep.shape[2]

    per_layer = [
        {
            "layer": layer,
            "mean_attn_to_sep": float(sep[:, layer].mean()),
            "std_sep": float(sep[:, layer].mean(axis=1).std()),
            "mean_attn_to_sp": float(sp[:, layer].mean()),
            "std_sp": float(sp[:, layer].mean(axis=1).std()),
        }
        for layer in range(layers)
    ]
    per_head = [
        {
            "head": head,
            "mean_sep": float(sep[:, :, head].mean()),
            "mean_sp": float(sp[:, :, head].mean()),
        }
        for head in range(heads)
    ]
    cross_segment = [
        {
            "layer": layer,
            "mean_vanilla": float(cross_van[:, layer].mean()),
            "mean_sepseq": float(cross_seg[:, layer].mean()),
            "std_vanilla": float(cross_van[:, layer].mean(axis=1).std()),
            "std_sepseq": float(cross_seg[:, layer].mean(axis=1).std()),
        }
        for layer in range(layers)
    ]
    return AttentionStats(
        spec=spec.echo(),
        per_layer=per_layer,
        per_head=per_head,
        cross_segment=cross_segment,
    )


def direction_summary(stats: AttentionStats) -> dict[str, int]:
    """How many layers show the boundary-attraction and suppression directions."""
    return {
        "layers_total": len(stats.per_layer),
        "layers_sep_above_sp": sum(
            1 for row in stats.per_layer if row["mean_attn_to_sep"] > row["mean_attn_to_sp"]
        ),
        "layers_suppressed": sum(
            1 for row in stats.cross_segment if row["mean_sepseq"] < row["mean_vanilla"]
        ),
    }
