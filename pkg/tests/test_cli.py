from __future__ import annotations

import json
from pathlib import Path

import pytest
import yaml

from sepseq.cli import main
from sepseq.grading import read_graded
from sepseq.metrics import accuracy, answer_rate


def run_cli(capsys, *argv: str) -> tuple[int, dict]:
    code = main(list(argv))
    captured = capsys.readouterr()
    out = captured.out.strip().splitlines()
    body = json.loads(out[-1]) if out else {}
    if code != 0:
        body = json.loads(captured.err.strip().splitlines()[-1])
    return code, body


def write_config(path: Path, **overrides) -> Path:
    cfg = {
        "endpoint": {"model": "mock", "mock": "oracle"},
        "strategy": "vanilla",
        "format": {"mode": "vanilla", "k": 16, "separator": "LF"},
        "runs": 1,
        "concurrency": 4,
        "out_dir": str(path.parent / "run"),
        **overrides,
    }
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_gen_produces_corpus(tmp_path, capsys):
    out = tmp_path / "counting.jsonl"
    code, body = run_cli(
        capsys, "gen", "--task", "counting", "--bins", "S,M,L,XL",
        "--per-bin", "50", "--seed", "7", "--out", str(out),
    )
    assert code == 0
    assert body["samples"] == 200
    assert len(out.read_text().splitlines()) == 200
    meta = json.loads(Path(body["meta"]).read_text())
    assert meta["one_density"] == 0.25 and meta["per_bin"] == 50


def test_gen_unknown_task_is_usage_error(tmp_path, capsys):
    code, body = run_cli(capsys, "gen", "--task", "sorting", "--out", str(tmp_path / "x.jsonl"))
    assert code == 1
    assert body["error"] == "UsageError"


def test_run_grade_report_closed_loop(tmp_path, capsys):
    corpus = tmp_path / "corpus.jsonl"
    run_cli(capsys, "gen", "--task", "max_int", "--bins", "S", "--per-bin", "10",
            "--seed", "3", "--out", str(corpus))
    config = write_config(tmp_path / "cfg.yaml", dataset=str(corpus), runs=2)

    code, body = run_cli(capsys, "run", "--config", str(config))
    assert code == 0
    run_dir = Path(body["run_dir"])
    assert (run_dir / "transcripts.jsonl").is_file()
    assert (run_dir / "resolved_config.yaml").is_file()
    assert json.loads((run_dir / "provenance.json").read_text())["corpus_sha256"]

    code, body = run_cli(capsys, "grade", "--runs", str(run_dir))
    assert code == 0
    graded = read_graded(body["graded"])
    assert len(graded) == 20
    assert accuracy(graded) == 1.0 and answer_rate(graded) == 1.0

    code, body = run_cli(capsys, "report", "--graded", str(run_dir / "graded.jsonl"),
                         "--out", str(run_dir / "report"))
    assert code == 0
    report = json.loads(Path(body["json"]).read_text())
    assert report["groups"][0]["accuracy_mean"] == 1.0


def test_flags_override_config(tmp_path, capsys):
    corpus = tmp_path / "corpus.jsonl"
    run_cli(capsys, "gen", "--task", "counting", "--bins", "S", "--per-bin", "4",
            "--seed", "1", "--out", str(corpus))
    config = write_config(tmp_path / "cfg.yaml", dataset=str(corpus))
    out_dir = tmp_path / "override-run"
    code, _ = run_cli(capsys, "run", "--config", str(config), "--strategy", "sepseq",
                      "--k", "4", "--runs", "1", "--out", str(out_dir))
    assert code == 0
    resolved = yaml.safe_load((out_dir / "resolved_config.yaml").read_text())
    assert resolved["format"]["mode"] == "sepseq"
    assert resolved["format"]["k"] == 4
    records = [json.loads(line) for line in (out_dir / "transcripts.jsonl").read_text().splitlines()]
    assert all(r["format_mode"] == "sepseq" and r["k"] == 4 for r in records)
    # sepseq strategy sugar keeps vanilla prompting
    assert all(r["strategy"] == "vanilla" for r in records)


def test_run_without_dataset_is_usage_error(tmp_path, capsys):
    config = write_config(tmp_path / "cfg.yaml")
    code, _ = run_cli(capsys, "run", "--config", str(config))
    assert code == 1


def test_grade_missing_transcripts_is_usage_error(tmp_path, capsys):
    code, _ = run_cli(capsys, "grade", "--runs", str(tmp_path / "nowhere"))
    assert code == 1


def test_sweep_k_is_monotone_under_dispersion_mock(tmp_path, capsys):
    corpus = tmp_path / "corpus.jsonl"
    run_cli(capsys, "gen", "--task", "counting", "--bins", "M", "--per-bin", "30",
            "--seed", "5", "--out", str(corpus))
    config = write_config(
        tmp_path / "cfg.yaml", dataset=str(corpus),
        endpoint={"model": "mock", "mock": "dispersion?base=0.03"},
    )
    code, body = run_cli(
        capsys, "sweep", "--param", "k", "--values", "2,4,8,16,32",
        "--config", str(config), "--out", str(tmp_path / "sweep"),
    )
    assert code == 0
    accs = body["accuracy"]
    assert all(a >= b for a, b in zip(accs, accs[1:]))
    assert accs[0] > accs[-1]
    plot = json.loads((tmp_path / "sweep" / "plots" / "interval_sweep.json").read_text())
    assert plot["x"] == [2, 4, 8, 16, 32]


def test_sweep_separator_symbols(tmp_path, capsys):
    corpus = tmp_path / "corpus.jsonl"
    run_cli(capsys, "gen", "--task", "counting", "--bins", "S", "--per-bin", "5",
            "--seed", "5", "--out", str(corpus))
    config = write_config(tmp_path / "cfg.yaml", dataset=str(corpus))
    code, body = run_cli(
        capsys, "sweep", "--param", "separator", "--values", "LF,CR,CRLF,BACKSLASH",
        "--config", str(config), "--out", str(tmp_path / "sepsweep"),
    )
    assert code == 0
    assert (tmp_path / "sepsweep" / "plots" / "separator_bars.json").is_file()
    assert body["accuracy"] == [1.0, 1.0, 1.0, 1.0]


def test_repeat_collapse_shape(tmp_path, capsys):
    config = write_config(
        tmp_path / "cfg.yaml",
        endpoint={"model": "mock", "mock": "repeat-corruptor?threshold=256"},
        out_dir=str(tmp_path / "repeat-run"),
        per_bin=4,
        strategy="vanilla",
    )
    code, body = run_cli(capsys, "repeat", "--config", str(config))
    assert code == 0
    rows = {row["bin"]: row for row in body["rows"]}
    assert rows["S"]["accuracy"] == 1.0
    assert rows["M"]["accuracy"] == 1.0
    assert rows["L"]["accuracy"] == 1.0
    assert rows["XL"]["accuracy"] <= 0.14
    assert rows["XXL"]["accuracy"] <= 0.14
    assert (tmp_path / "repeat-run" / "repeat_report.md").is_file()


def test_report_emits_token_bars_for_mixed_modes(tmp_path, capsys):
    from helpers import rec
    from sepseq.grading import write_graded

    records = []
    for mode, tokens in (("vanilla", 60), ("sepseq", 40)):
        records += [
            rec(sample_id=f"{mode}-{i}", format_mode=mode, completion_tokens=tokens)
            for i in range(4)
        ]
    graded = write_graded(records, tmp_path / "graded.jsonl")
    code, body = run_cli(capsys, "report", "--graded", str(graded),
                         "--out", str(tmp_path / "rep"))
    assert code == 0
    plot = json.loads(Path(body["token_bars"]).read_text())
    assert plot["series"]["vanilla"] == [60]
    assert plot["series"]["sepseq"] == [40]


def test_repeat_rejects_non_repetition_dataset(tmp_path, capsys):
    corpus = tmp_path / "counting.jsonl"
    run_cli(capsys, "gen", "--task", "counting", "--bins", "S", "--per-bin", "2",
            "--seed", "1", "--out", str(corpus))
    config = write_config(tmp_path / "cfg.yaml", dataset=str(corpus),
                          out_dir=str(tmp_path / "rep"))
    code, body = run_cli(capsys, "repeat", "--config", str(config))
    assert code == 1
    assert "repetition corpus" in body["message"]


def test_attn_math_emits_plot_data(tmp_path, capsys):
    code, body = run_cli(capsys, "attn-math", "--out", str(tmp_path / "attn"))
    assert code == 0
    curve = json.loads(Path(body["dispersion_curve"]).read_text())
    for series in curve["series"].values():
        assert all(a > b for a, b in zip(series, series[1:]))
    ratios = json.loads(Path(body["ratios"]).read_text())
    assert all(r["weight_ratio"] <= 1.0 for r in ratios)
    assert any(r["weight_ratio"] == 1.0 for r in ratios if r["logit_boost"] == 0.0)


def probe_stats_body() -> dict:
    return {
        "schema_version": 1,
        "position_convention": "1-based",
        "spec": {"model": "tiny", "trials": 10, "sequence_length": 20,
                 "segment_size": 8, "separator_text": "\n", "delimiter_text": " ",
                 "seed": 0},
        "per_layer": [
            {"layer": 0, "mean_attn_to_sep": 0.30, "std_sep": 0.02,
             "mean_attn_to_sp": 0.10, "std_sp": 0.01},
            {"layer": 1, "mean_attn_to_sep": 0.40, "std_sep": 0.03,
             "mean_attn_to_sp": 0.12, "std_sp": 0.02},
        ],
        "per_head": [
            {"head": 0, "mean_sep": 0.35, "mean_sp": 0.11},
            {"head": 1, "mean_sep": 0.28, "mean_sp": 0.09},
        ],
        "cross_segment": [
            {"layer": 0, "mean_vanilla": 0.22, "mean_sepseq": 0.10,
             "std_vanilla": 0.02, "std_sepseq": 0.01},
            {"layer": 1, "mean_vanilla": 0.25, "mean_sepseq": 0.12,
             "std_vanilla": 0.02, "std_sepseq": 0.01},
        ],
    }


def test_probe_report_ingests_valid_stats(tmp_path, capsys):
    stats_path = tmp_path / "stats.json"
    stats_path.write_text(json.dumps(probe_stats_body()))
    code, body = run_cli(capsys, "probe-report", "--probe", str(stats_path),
                         "--out", str(tmp_path / "probe"))
    assert code == 0
    layer_plot = json.loads((tmp_path / "probe" / "plots" / "probe_layers.json").read_text())
    assert layer_plot["series"]["attn_to_separator"] == [0.30, 0.40]
    assert body["summary"]["layers_sep_above_sp"] == 2
    assert body["summary"]["layers_suppressed"] == 2


def test_probe_report_rejects_schema_violation(tmp_path, capsys):
    broken = probe_stats_body()
    broken["per_layer"][0]["mean_attn_to_sep"] = 1.7  # out of [0, 1]
    stats_path = tmp_path / "bad.json"
    stats_path.write_text(json.dumps(broken))
    code, _ = run_cli(capsys, "probe-report", "--probe", str(stats_path),
                      "--out", str(tmp_path / "probe"))
    assert code == 3


def test_unknown_subcommand_is_usage_error(capsys):
    code, _ = run_cli(capsys, "frobnicate")
    assert code == 1
