"""Aggregation of graded records into accuracy / answer-rate tables and
plot-data files.

Accuracy counts invalid responses as incorrect, so per-run accuracy can never
exceed per-run answer rate. Aggregation computes per-run metrics first, then
mean and sample standard deviation across runs within each group; with fewer
than two runs the std is reported as absent, not zero.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import UsageError
from .grading import GradedRecord


def accuracy(records: Sequence[GradedRecord]) -> float:
    """N_correct / N over all graded records (invalid counts as incorrect)."""
    if not records:
        raise UsageError("cannot compute accuracy of an empty record set")
    return sum(1 for r in records if r.correct) / len(records)


def answer_rate(records: Sequence[GradedRecord]) -> float:
    """N_valid / N: the fraction of responses with an extractable answer."""
    if not records:
        raise UsageError("cannot compute answer rate of an empty record set")
    return sum(1 for r in records if r.valid) / len(records)


def relative_improvement(value: float, baseline: float) -> float:
    """(value - baseline) / baseline."""
    if baseline == 0:
        raise UsageError("relative improvement undefined for a zero baseline")
    return (value - baseline) / baseline


def run_metrics(records: Sequence[GradedRecord]) -> dict[int, tuple[float, float]]:
    """Per-run (accuracy, answer_rate), keyed by run index."""
    runs: dict[int, list[GradedRecord]] = {}
    for record in records:
        runs.setdefault(record.run_index, []).append(record)
    return {
        run: (accuracy(batch), answer_rate(batch))
        for run, batch in sorted(runs.items())
    }


@dataclass(frozen=True)
class AggregateStats:
    group: dict[str, str]
    n_records: int
    n_runs: int
    accuracy_mean: float
    accuracy_std: float | None
    answer_rate_mean: float
    answer_rate_std: float | None
    mean_completion_tokens: float | None
    mean_total_tokens: float | None
    accuracy_ci95: tuple[float, float] | None = None  # sample-level bootstrap, optional

    def as_dict(self) -> dict[str, Any]:
        return {
            **self.group,
            "n_records": self.n_records,
            "n_runs": self.n_runs,
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "answer_rate_mean": self.answer_rate_mean,
            "answer_rate_std": self.answer_rate_std,
            "mean_completion_tokens": self.mean_completion_tokens,
            "mean_total_tokens": self.mean_total_tokens,
            "accuracy_ci95": list(self.accuracy_ci95) if self.accuracy_ci95 else None,
        }


def _mean_or_none(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def bootstrap_accuracy_ci(
    records: Sequence[GradedRecord], n_boot: int = 1000, seed: int = 0
) -> tuple[float, float]:
    """Sample-level 95% percentile bootstrap interval for accuracy."""
    if not records:
        raise UsageError("cannot bootstrap an empty record set")
    outcomes = np.array([1.0 if r.correct else 0.0 for r in records])
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, len(outcomes), size=(n_boot, len(outcomes)))
    means = outcomes[draws].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return float(lo), float(hi)


def aggregate(
    records: Iterable[GradedRecord],
    group_by: Sequence[str] = ("task", "strategy", "format_mode"),
    bootstrap: int = 0,
) -> list[AggregateStats]:
    """Group records, compute per-run metrics, then mean/std across runs.

    bootstrap > 0 adds a sample-level 95% CI column with that many resamples.
    """
    groups: dict[tuple[str, ...], list[GradedRecord]] = {}
    for record in records:
        key = tuple(str(getattr(record, field) or "") for field in group_by)
        groups.setdefault(key, []).append(record)
    stats: list[AggregateStats] = []
    for key in sorted(groups):
        batch = groups[key]
        per_run = run_metrics(batch)
        accs = [acc for acc, _ in per_run.values()]
        rates = [rate for _, rate in per_run.values()]
        multi = len(per_run) >= 2
        stats.append(
            AggregateStats(
                group=dict(zip(group_by, key)),
                n_records=len(batch),
                n_runs=len(per_run),
                accuracy_mean=float(np.mean(accs)),
                accuracy_std=float(np.std(accs, ddof=1)) if multi else None,
                answer_rate_mean=float(np.mean(rates)),
                answer_rate_std=float(np.std(rates, ddof=1)) if multi else None,
                mean_completion_tokens=_mean_or_none(
                    [r.completion_tokens for r in batch if r.completion_tokens is not None]
                ),
                mean_total_tokens=_mean_or_none(
                    [r.total_tokens for r in batch if r.total_tokens is not None]
                ),
                accuracy_ci95=(
                    bootstrap_accuracy_ci(batch, n_boot=bootstrap) if bootstrap else None
                ),
            )
        )
    return stats


def per_bin_counts(records: Sequence[GradedRecord]) -> list[dict[str, Any]]:
    """Correct counts and accuracy per length bin, plus an Overall row."""
    order = {"S": 0, "M": 1, "L": 2, "XL": 3, "XXL": 4}
    bins: dict[str, list[GradedRecord]] = {}
    for record in records:
        bins.setdefault(record.bin or "", []).append(record)
    rows = []
    for name in sorted(bins, key=lambda b: order.get(b, 99)):
        batch = bins[name]
        rows.append(
            {
                "bin": name,
                "total": len(batch),
                "correct": sum(1 for r in batch if r.correct),
                "accuracy": accuracy(batch),
            }
        )
    rows.append(
        {
            "bin": "Overall",
            "total": len(records),
            "correct": sum(1 for r in records if r.correct),
            "accuracy": accuracy(list(records)),
        }
    )
    return rows


def improvement_rows(
    stats: Sequence[AggregateStats], field: str = "format_mode", baseline: str = "vanilla"
) -> list[dict[str, Any]]:
    """Relative improvement of every non-baseline condition over the baseline,
    within groups that differ only in `field`."""
    by_rest: dict[tuple[tuple[str, str], ...], dict[str, AggregateStats]] = {}
    for stat in stats:
        if field not in stat.group:
            continue
        rest = tuple(sorted((k, v) for k, v in stat.group.items() if k != field))
        by_rest.setdefault(rest, {})[stat.group[field]] = stat
    rows: list[dict[str, Any]] = []
    for rest, conditions in sorted(by_rest.items()):
        base = conditions.get(baseline)
        if base is None:
            continue
        for condition, stat in sorted(conditions.items()):
            if condition == baseline:
                continue
            row: dict[str, Any] = dict(rest)
            row[field] = condition
            row["baseline"] = baseline
            row["accuracy_improvement"] = (
                relative_improvement(stat.accuracy_mean, base.accuracy_mean)
                if base.accuracy_mean else None
            )
            row["answer_rate_improvement"] = (
                relative_improvement(stat.answer_rate_mean, base.answer_rate_mean)
                if base.answer_rate_mean else None
            )
            if stat.mean_total_tokens and base.mean_total_tokens:
                row["total_tokens_change"] = relative_improvement(
                    stat.mean_total_tokens, base.mean_total_tokens
                )
            rows.append(row)
    return rows


def consistency_flags(stats: Sequence[AggregateStats]) -> list[str]:
    """Anomalies worth surfacing instead of silently resolving."""
    flags = []
    for stat in stats:
        if stat.accuracy_mean > stat.answer_rate_mean + 1e-12:
            flags.append(f"group {stat.group}: accuracy exceeds answer rate")
    return flags


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

_COLUMNS = (
    "n_records", "n_runs",
    "accuracy_mean", "accuracy_std",
    "answer_rate_mean", "answer_rate_std",
    "mean_completion_tokens", "mean_total_tokens",
)


def _pct(value: float | None) -> str:
    return "n/a" if value is None else f"{100 * value:.2f}"


def _markdown_table(stats: Sequence[AggregateStats], group_fields: Sequence[str]) -> str:
    header = [*group_fields, "n", "runs", "AR % (mean+-std)", "Acc % (mean+-std)",
              "resp tokens", "total tokens"]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(" --- " for _ in header) + "|"]
    for stat in stats:
        ar = _pct(stat.answer_rate_mean) + ("" if stat.answer_rate_std is None else f" +- {_pct(stat.answer_rate_std)}")
        acc = _pct(stat.accuracy_mean) + ("" if stat.accuracy_std is None else f" +- {_pct(stat.accuracy_std)}")
        row = [
            *(stat.group.get(f, "") for f in group_fields),
            str(stat.n_records), str(stat.n_runs), ar, acc,
            "n/a" if stat.mean_completion_tokens is None else f"{stat.mean_completion_tokens:.1f}",
            "n/a" if stat.mean_total_tokens is None else f"{stat.mean_total_tokens:.1f}",
        ]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def emit_report(
    stats: Sequence[AggregateStats],
    out_dir: str | Path,
    formats: Sequence[str] = ("md", "csv", "json"),
) -> dict[str, Path]:
    """Write report.{md,csv,json}; all three are deterministic functions of
    the stats, so regenerated reports are byte-identical."""
    unknown = set(formats) - {"md", "csv", "json"}
    if unknown:
        raise UsageError(f"unknown report formats: {sorted(unknown)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    group_fields: list[str] = []
    for stat in stats:
        for field in stat.group:
            if field not in group_fields:
                group_fields.append(field)
    written: dict[str, Path] = {}

    if "md" in formats:
        path = out_dir / "report.md"
        path.write_text(_markdown_table(stats, group_fields), encoding="utf-8")
        written["md"] = path
    if "csv" in formats:
        path = out_dir / "report.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([*group_fields, *_COLUMNS, "accuracy_ci95_lo", "accuracy_ci95_hi"])
            for stat in stats:
                record = stat.as_dict()
                ci = stat.accuracy_ci95 or ("", "")
                writer.writerow(
                    [record.get(f, "") for f in group_fields]
                    + [("" if record[c] is None else repr(record[c])) for c in _COLUMNS]
                    + [repr(v) if v != "" else "" for v in ci]
                )
        written["csv"] = path
    if "json" in formats:
        path = out_dir / "report.json"
        body = {
            "groups": [stat.as_dict() for stat in stats],
            "improvements": improvement_rows(stats),
            "flags": consistency_flags(stats),
        }
        path.write_text(json.dumps(body, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        written["json"] = path
    return written


def token_bars(
    stats: Sequence[AggregateStats],
    value_field: str = "mean_completion_tokens",
    split_field: str = "format_mode",
) -> dict[str, Any]:
    """Per-task token bars, one series per condition (response-length view)."""
    tasks: list[str] = []
    conditions: list[str] = []
    values: dict[tuple[str, str], float | None] = {}
    for stat in stats:
        task = stat.group.get("task", "")
        condition = stat.group.get(split_field, "")
        if task not in tasks:
            tasks.append(task)
        if condition not in conditions:
            conditions.append(condition)
        values[(task, condition)] = getattr(stat, value_field)
    series = {
        condition: [values.get((task, condition)) for task in tasks]
        for condition in sorted(conditions)
    }
    return make_plot(tasks, series, xlabel="task", ylabel=value_field)


def make_plot(
    x: Sequence[Any], series: dict[str, Sequence[Any]], xlabel: str, ylabel: str
) -> dict[str, Any]:
    for name, ys in series.items():
        if len(ys) != len(x):
            raise UsageError(f"series {name!r} length does not match x")
    return {
        "x": list(x),
        "series": {name: list(ys) for name, ys in series.items()},
        "xlabel": xlabel,
        "ylabel": ylabel,
    }


def write_plot(plot: dict[str, Any], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(plot, indent=2) + "\n", encoding="utf-8")
    return path
