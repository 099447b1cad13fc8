"""Command-line entry point exposing the full pipeline.

Every run directory is self-contained: resolved config, corpus hash,
transcripts, graded records, and report are all written there, so any report
can be re-derived offline, byte for byte. Exit codes: 0 ok, 1 usage,
2 transport, 3 data error; errors go to stderr as one JSON object per line.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import attention
from .client import ModelEndpoint, RetryPolicy, read_transcripts, run_batch
from .datagen import (
    GenSpec,
    LengthBin,
    TaskType,
    generate,
    load_corpus,
    write_corpus,
)
from .errors import DataError, SepseqError, UsageError
from .formatting import FormatConfig, FormatMode, SeparatorSymbol
from .grading import grade_records, read_graded, write_graded
from .metrics import (
    aggregate,
    emit_report,
    make_plot,
    per_bin_counts,
    token_bars,
    write_plot,
)
from .prompting import ExecSpec, PromptStrategy, build_prompt

DEFAULTS: dict[str, Any] = {
    "endpoint": {"model": "mock-oracle", "mock": "oracle"},
    "strategy": "vanilla",
    "format": {"mode": "vanilla", "k": 16, "separator": "LF", "delimiter": " "},
    "runs": 10,
    "concurrency": 8,
    "temperature": 0.0,
    "max_tokens": 4096,
    "seed": 0,
    "out_dir": "runs/exp",
    "pot": {"argv": [sys.executable, "-I"], "timeout_s": 10.0,
            "max_output_bytes": 65536, "memory_limit_mb": 512},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # map argparse failures onto exit code 1
        raise UsageError(message)


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        elif value is not None:
            merged[key] = value
    return merged


def load_config(path: str | Path | None) -> dict[str, Any]:
    if path is None:
        return dict(DEFAULTS)
    try:
        body = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise DataError(f"config file is not valid YAML: {exc}") from exc
    if not isinstance(body, dict):
        raise DataError("config file must hold a mapping")
    return _deep_merge(DEFAULTS, body)


def _flag_overrides(args: argparse.Namespace) -> dict[str, Any]:
    fmt: dict[str, Any] = {}
    if getattr(args, "k", None) is not None:
        fmt["k"] = args.k
    if getattr(args, "sep", None) is not None:
        fmt["separator"] = args.sep
    if getattr(args, "delimiter", None) is not None:
        fmt["delimiter"] = args.delimiter
    if getattr(args, "format_mode", None) is not None:
        fmt["mode"] = args.format_mode
    endpoint: dict[str, Any] = {}
    if getattr(args, "mock", None) is not None:
        endpoint["mock"] = args.mock
        endpoint["base_url"] = None
    if getattr(args, "base_url", None) is not None:
        endpoint["base_url"] = args.base_url
        endpoint["mock"] = None
    if getattr(args, "model", None) is not None:
        endpoint["model"] = args.model
    overrides: dict[str, Any] = {
        "strategy": getattr(args, "strategy", None),
        "runs": getattr(args, "runs", None),
        "concurrency": getattr(args, "concurrency", None),
        "temperature": getattr(args, "temperature", None),
        "max_tokens": getattr(args, "max_tokens", None),
        "dataset": getattr(args, "dataset", None),
        "out_dir": getattr(args, "out", None),
        "seed": getattr(args, "seed", None),
    }
    if fmt:
        overrides["format"] = fmt
    if endpoint:
        overrides["endpoint"] = endpoint
    return {k: v for k, v in overrides.items() if v is not None}


def resolve_format(cfg: dict[str, Any]) -> FormatConfig:
    fmt = cfg["format"]
    if "separator_text" in fmt and fmt["separator_text"]:
        separator = SeparatorSymbol.custom(str(fmt["separator_text"]))
    else:
        separator = SeparatorSymbol.from_name(str(fmt.get("separator", "LF")))
    try:
        mode = FormatMode(str(fmt.get("mode", "vanilla")))
    except ValueError as exc:
        raise UsageError(f"unknown format mode {fmt.get('mode')!r}") from exc
    return FormatConfig(
        delimiter=str(fmt.get("delimiter", " ")),
        separator=separator,
        segment_size=int(fmt.get("k", 16)),
        mode=mode,
    )


def resolve_strategy(cfg: dict[str, Any]) -> tuple[PromptStrategy, dict[str, Any]]:
    """`sepseq` as a strategy name means vanilla prompting + segmented format."""
    name = str(cfg["strategy"])
    if name == "sepseq":
        cfg = dict(cfg)
        cfg["format"] = {**cfg["format"], "mode": "sepseq"}
        return PromptStrategy.VANILLA, cfg
    try:
        return PromptStrategy(name), cfg
    except ValueError as exc:
        raise UsageError(f"unknown strategy {name!r}") from exc


def resolve_endpoint(cfg: dict[str, Any]) -> ModelEndpoint:
    spec = cfg["endpoint"]
    return ModelEndpoint(
        model=str(spec.get("model", "unnamed")),
        base_url=spec.get("base_url"),
        mock=spec.get("mock"),
        api_key_env=str(spec.get("api_key_env", "LLM_API_KEY")),
        timeout_s=float(spec.get("timeout_s", 120.0)),
    )


def resolve_runner(cfg: dict[str, Any]) -> ExecSpec:
    pot = cfg.get("pot", DEFAULTS["pot"])
    return ExecSpec(
        argv=tuple(str(a) for a in pot.get("argv", DEFAULTS["pot"]["argv"])),
        timeout_s=float(pot.get("timeout_s", 10.0)),
        max_output_bytes=int(pot.get("max_output_bytes", 65536)),
        memory_limit_mb=pot.get("memory_limit_mb", 512),
    )


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _echo_config(cfg: dict[str, Any], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.yaml").write_text(
        yaml.safe_dump(cfg, sort_keys=True), encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args: argparse.Namespace) -> int:
    try:
        task = TaskType(args.task)
    except ValueError as exc:
        raise UsageError(f"unknown task {args.task!r}") from exc
    bins = None
    if args.bins:
        try:
            bins = tuple(LengthBin[name.strip().upper()] for name in args.bins.split(","))
        except KeyError as exc:
            raise UsageError(f"unknown bin in {args.bins!r}") from exc
    kwargs: dict[str, Any] = {}
    if args.one_density is not None:
        kwargs["one_density"] = args.one_density
    if args.int_range is not None:
        try:
            lo, hi = (int(v) for v in args.int_range.split(","))
        except ValueError as exc:
            raise UsageError("--int-range expects lo,hi") from exc
        kwargs["int_range"] = (lo, hi)
    spec = GenSpec(task=task, bins=bins, per_bin=args.per_bin, rng_seed=args.seed, **kwargs)
    samples = generate(spec)
    path = write_corpus(samples, args.out)
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    meta_path.write_text(json.dumps(spec.echo(), indent=2) + "\n", encoding="utf-8")
    print(json.dumps({
        "corpus": str(path), "samples": len(samples),
        "sha256": _sha256(path), "meta": str(meta_path),
    }))
    return 0


def _run_pipeline(cfg: dict[str, Any], out_dir: Path) -> dict[str, Any]:
    strategy, cfg = resolve_strategy(cfg)
    fmt = resolve_format(cfg)
    endpoint = resolve_endpoint(cfg)
    dataset = cfg.get("dataset")
    if not dataset:
        raise UsageError("no dataset configured (set dataset: or pass --dataset)")
    samples = load_corpus(dataset)
    if not samples:
        raise DataError(f"dataset {dataset} holds no samples")
    prompts = [build_prompt(sample, strategy, fmt) for sample in samples]
    _echo_config(cfg, out_dir)
    transcript_path = out_dir / "transcripts.jsonl"
    if transcript_path.exists():
        transcript_path.unlink()  # a run directory holds exactly one batch
    records = run_batch(
        endpoint,
        prompts,
        concurrency=int(cfg["concurrency"]),
        runs=int(cfg["runs"]),
        temperature=float(cfg["temperature"]),
        max_tokens=int(cfg["max_tokens"]),
        transcript_path=transcript_path,
    )
    provenance = {
        "dataset": str(dataset),
        "corpus_sha256": _sha256(Path(dataset)),
        "samples": len(samples),
        "records": len(records),
        "strategy": strategy.value,
        "format_mode": fmt.mode.value,
        "k": fmt.segment_size,
        "separator": fmt.separator.name,
    }
    (out_dir / "provenance.json").write_text(json.dumps(provenance, indent=2) + "\n")
    return provenance


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _deep_merge(load_config(args.config), _flag_overrides(args))
    out_dir = Path(cfg["out_dir"])
    provenance = _run_pipeline(cfg, out_dir)
    print(json.dumps({"run_dir": str(out_dir), **provenance}))
    return 0


def cmd_grade(args: argparse.Namespace) -> int:
    run_dir = Path(args.runs)
    transcripts = run_dir / "transcripts.jsonl" if run_dir.is_dir() else run_dir
    if not transcripts.is_file():
        raise UsageError(f"no transcripts found at {transcripts}")
    config_path = transcripts.parent / "resolved_config.yaml"
    runner = resolve_runner(
        yaml.safe_load(config_path.read_text()) if config_path.is_file() else {}
    )
    records = read_transcripts(transcripts)
    graded = grade_records(records, runner=runner)
    out = Path(args.out) if args.out else transcripts.parent / "graded.jsonl"
    write_graded(graded, out)
    print(json.dumps({"graded": str(out), "records": len(graded)}))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    records = read_graded(args.graded)
    group_by = tuple(f.strip() for f in args.group_by.split(",") if f.strip())
    stats = aggregate(records, group_by=group_by, bootstrap=args.bootstrap)
    formats = tuple(f.strip() for f in args.format.split(",") if f.strip())
    paths = emit_report(stats, args.out, formats=formats)
    modes = {record.format_mode for record in records}
    if len(modes) > 1:  # token-accounting comparison needs both conditions
        by_task_mode = aggregate(records, group_by=("task", "format_mode"))
        paths["token_bars"] = write_plot(
            token_bars(by_task_mode), Path(args.out) / "plots" / "token_bars.json"
        )
    print(json.dumps({fmt: str(path) for fmt, path in paths.items()}))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _deep_merge(load_config(args.config), _flag_overrides(args))
    out_root = Path(args.out or cfg["out_dir"])
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("sweep needs at least one value")
    xs: list[Any] = []
    acc_series: list[float] = []
    ar_series: list[float] = []
    for value in values:
        point_cfg = json.loads(json.dumps(cfg))  # deep copy
        point_cfg["format"]["mode"] = "sepseq"
        if args.param == "k":
            point_cfg["format"]["k"] = int(value)
        elif args.param == "separator":
            point_cfg["format"]["separator"] = value
            point_cfg["format"].pop("separator_text", None)
        else:
            raise UsageError(f"unknown sweep parameter {args.param!r}")
        out_dir = out_root / f"{args.param}={value}"
        _run_pipeline(point_cfg, out_dir)
        graded = grade_records(
            read_transcripts(out_dir / "transcripts.jsonl"), runner=resolve_runner(point_cfg)
        )
        write_graded(graded, out_dir / "graded.jsonl")
        stats = aggregate(graded, group_by=("format_mode",))
        xs.append(int(value) if args.param == "k" else value)
        acc_series.append(stats[0].accuracy_mean)
        ar_series.append(stats[0].answer_rate_mean)
    plot = make_plot(
        xs,
        {"accuracy": acc_series, "answer_rate": ar_series},
        xlabel="segment size k" if args.param == "k" else "separator symbol",
        ylabel="metric value",
    )
    name = "interval_sweep.json" if args.param == "k" else "separator_bars.json"
    path = write_plot(plot, out_root / "plots" / name)
    print(json.dumps({"plot": str(path), "x": xs, "accuracy": acc_series}))
    return 0


def cmd_repeat(args: argparse.Namespace) -> int:
    cfg = _deep_merge(load_config(args.config), _flag_overrides(args))
    cfg["temperature"] = 0.0  # strict repetition protocol decodes greedily
    out_dir = Path(cfg["out_dir"])
    corpus_path = Path(cfg.get("dataset") or out_dir / "repetition_corpus.jsonl")
    if not corpus_path.exists():
        samples = generate(
            GenSpec(task=TaskType.REPETITION, per_bin=int(cfg.get("per_bin", 50)),
                    rng_seed=int(cfg["seed"]))
        )
        write_corpus(samples, corpus_path)
    tasks = {sample.task for sample in load_corpus(corpus_path)}
    if tasks != {TaskType.REPETITION}:
        raise UsageError(
            f"repeat needs a repetition corpus; {corpus_path} holds {sorted(t.value for t in tasks)}"
        )
    cfg["dataset"] = str(corpus_path)
    _run_pipeline(cfg, out_dir)
    graded = grade_records(read_transcripts(out_dir / "transcripts.jsonl"))
    write_graded(graded, out_dir / "graded.jsonl")
    rows = per_bin_counts(graded)
    lines = ["| Size | Total | Correct | Accuracy |", "| --- | --- | --- | --- |"]
    for row in rows:
        lines.append(
            f"| {row['bin']} | {row['total']} | {row['correct']} | {100 * row['accuracy']:.2f}% |"
        )
    (out_dir / "repeat_report.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out_dir / "repeat_report.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"run_dir": str(out_dir), "rows": rows}))
    return 0


def cmd_attn_math(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    ns = [2**p for p in range(3, 13)]
    curve_series = {
        f"gap={gap:g}": [w for _, w in attention.dispersion_curve(ns, gap)]
        for gap in (0.0, math.log(9.0), 5.0)
    }
    curve = make_plot(ns, curve_series, xlabel="context length N", ylabel="relevant-key weight")
    curve_path = write_plot(curve, out_dir / "dispersion_curve.json")

    context_sizes = (4, 9, 64)
    boosts = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)
    table = []
    for size in context_sizes:
        for boost in boosts:
            ratio = attention.cross_segment_ratio([1.0] * size, s_sp=1.0, s_sep=1.0 + boost)
            table.append({"context_size": size, "logit_boost": boost, "weight_ratio": ratio})
    ratio_path = out_dir / "suppression_ratios.json"
    ratio_path.write_text(json.dumps(table, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"dispersion_curve": str(curve_path), "ratios": str(ratio_path)}))
    return 0


def load_probe_stats(path: str | Path) -> dict[str, Any]:
    """Read and schema-validate an attention-probe stats file."""
    import jsonschema

    schema_path = Path(__file__).parent / "data" / "attention_stats.schema.json"
    schema = json.loads(schema_path.read_text(encoding="utf-8"))
    try:
        stats = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise UsageError(f"probe stats file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"probe stats file is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(stats, schema)
    except jsonschema.ValidationError as exc:
        raise DataError(f"probe stats violate the schema: {exc.message}") from exc
    return stats


def cmd_probe_report(args: argparse.Namespace) -> int:
    stats = load_probe_stats(args.probe)
    out_dir = Path(args.out)
    plots_dir = out_dir / "plots"

    layers = [row["layer"] for row in stats["per_layer"]]
    layer_plot = make_plot(
        layers,
        {
            "attn_to_separator": [row["mean_attn_to_sep"] for row in stats["per_layer"]],
            "attn_to_delimiter": [row["mean_attn_to_sp"] for row in stats["per_layer"]],
            "std_separator": [row["std_sep"] for row in stats["per_layer"]],
            "std_delimiter": [row["std_sp"] for row in stats["per_layer"]],
        },
        xlabel="layer",
        ylabel="mean attention",
    )
    heads = [row["head"] for row in stats["per_head"]]
    head_plot = make_plot(
        heads,
        {
            "attn_to_separator": [row["mean_sep"] for row in stats["per_head"]],
            "attn_to_delimiter": [row["mean_sp"] for row in stats["per_head"]],
        },
        xlabel="head",
        ylabel="mean attention",
    )
    cross_layers = [row["layer"] for row in stats["cross_segment"]]
    cross_plot = make_plot(
        cross_layers,
        {
            "vanilla": [row["mean_vanilla"] for row in stats["cross_segment"]],
            "sepseq": [row["mean_sepseq"] for row in stats["cross_segment"]],
            "std_vanilla": [row["std_vanilla"] for row in stats["cross_segment"]],
            "std_sepseq": [row["std_sepseq"] for row in stats["cross_segment"]],
        },
        xlabel="layer",
        ylabel="mean cross-segment attention",
    )
    paths = {
        "layers": write_plot(layer_plot, plots_dir / "probe_layers.json"),
        "heads": write_plot(head_plot, plots_dir / "probe_heads.json"),
        "cross_segment": write_plot(cross_plot, plots_dir / "probe_cross_segment.json"),
    }
    summary = {
        "model": stats["spec"]["model"],
        "layers_sep_above_sp": sum(
            1 for row in stats["per_layer"] if row["mean_attn_to_sep"] > row["mean_attn_to_sp"]
        ),
        "layers_total": len(stats["per_layer"]),
        "layers_suppressed": sum(
            1 for row in stats["cross_segment"] if row["mean_sepseq"] < row["mean_vanilla"]
        ),
        "cross_layers_total": len(stats["cross_segment"]),
    }
    (out_dir / "probe_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps({**{k: str(v) for k, v in paths.items()}, "summary": summary}))
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file; flags override its keys")
    parser.add_argument("--mock", help="mock endpoint spec (e.g. oracle?error=0.2)")
    parser.add_argument("--base-url", dest="base_url", help="live endpoint base URL")
    parser.add_argument("--model", help="model id sent with each request")
    parser.add_argument("--strategy", choices=["vanilla", "cot", "icl", "pot", "sepseq"])
    parser.add_argument("--format-mode", dest="format_mode", choices=["vanilla", "sepseq"])
    parser.add_argument("--k", type=int, help="segment size")
    parser.add_argument("--sep", help="separator name (LF, CR, CRLF, BACKSLASH)")
    parser.add_argument("--delimiter", help="delimiter text (default single space)")
    parser.add_argument("--runs", type=int)
    parser.add_argument("--concurrency", type=int)
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--max-tokens", dest="max_tokens", type=int)
    parser.add_argument("--dataset", help="corpus file to evaluate")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sepseq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic corpus")
    gen.add_argument("--task", required=True)
    gen.add_argument("--bins", help="comma-separated bins, e.g. S,M,L,XL")
    gen.add_argument("--per-bin", dest="per_bin", type=int, default=50)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--one-density", dest="one_density", type=float,
                     help="P(value=1) for binary tasks (default 0.25)")
    gen.add_argument("--int-range", dest="int_range", help="lo,hi for integer tasks")
    gen.add_argument("--out", required=True)
    gen.set_defaults(fn=cmd_gen)

    run = sub.add_parser("run", help="render prompts and query the endpoint")
    _add_run_flags(run)
    run.set_defaults(fn=cmd_run)

    grade = sub.add_parser("grade", help="grade stored transcripts (offline)")
    grade.add_argument("--runs", required=True, help="run directory or transcripts file")
    grade.add_argument("--out", help="graded records file")
    grade.set_defaults(fn=cmd_grade)

    report = sub.add_parser("report", help="aggregate graded records into tables")
    report.add_argument("--graded", required=True)
    report.add_argument("--format", default="md,csv,json")
    report.add_argument("--out", required=True)
    report.add_argument("--group-by", dest="group_by", default="task,strategy,format_mode")
    report.add_argument("--bootstrap", type=int, default=0,
                        help="add a sample-level 95%% accuracy CI with N resamples")
    report.set_defaults(fn=cmd_report)

    sweep = sub.add_parser("sweep", help="grid over k or separator symbol")
    sweep.add_argument("--param", required=True, choices=["k", "separator"])
    sweep.add_argument("--values", required=True)
    _add_run_flags(sweep)
    sweep.set_defaults(fn=cmd_sweep)

    repeat = sub.add_parser("repeat", help="strict-repetition experiment end to end")
    _add_run_flags(repeat)
    repeat.set_defaults(fn=cmd_repeat)

    attn = sub.add_parser("attn-math", help="dispersion curve and suppression ratios")
    attn.add_argument("--out", required=True)
    attn.set_defaults(fn=cmd_attn_math)

    probe = sub.add_parser("probe-report", help="ingest attention-probe stats")
    probe.add_argument("--probe", required=True)
    probe.add_argument("--out", required=True)
    probe.set_defaults(fn=cmd_probe_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SepseqError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
