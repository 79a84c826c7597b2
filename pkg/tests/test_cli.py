"""End-to-end tests for the command line front end."""
from __future__ import annotations

import json
from pathlib import Path

from shiplab.cli import build_parser, main


def run_dir_with_one_board(tmp_path: Path, levels: str = "L1") -> Path:
    out = tmp_path / "run"
    code = main(
        [
            "run",
            "--levels",
            levels,
            "--boards",
            "1",
            "--seeds-per-board",
            "1",
            "--particles",
            "100",
            "--sweeps",
            "5",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    return out


def test_run_subcommand_writes_artifacts_and_prints_summary(tmp_path, capsys):
    out = run_dir_with_one_board(tmp_path)
    stdout = capsys.readouterr().out
    assert "level" in stdout and "winRate" in stdout
    assert "L1" in stdout
    assert f"artifacts written to {out}" in stdout
    assert (out / "games.csv").exists()
    assert (out / "summary.csv").exists()
    assert (out / "summary.json").exists()
    assert (out / "traces" / "L1_B01_0.jsonl").exists()
    config_payload = json.loads((out / "config.json").read_text())
    assert config_payload["config"]["particles"] == 100
    assert config_payload["spec"]["boards"] == 1


def test_config_file_provides_defaults_that_flags_override(tmp_path, capsys):
    config_file = tmp_path / "config.json"
    config_file.write_text(
        json.dumps(
            {
                "particles": 100,
                "sweeps": 5,
                "epsilon": 0.05,
                "budgets": {"shots": 30, "questions": 6},
            }
        )
    )
    out = tmp_path / "run"
    code = main(
        [
            "run",
            "--config",
            str(config_file),
            "--sweeps",
            "4",
            "--levels",
            "L1",
            "--boards",
            "1",
            "--seeds-per-board",
            "1",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    capsys.readouterr()
    stored = json.loads((out / "config.json").read_text())["config"]
    assert stored["particles"] == 100, "file value survives"
    assert stored["sweeps"] == 4, "flag wins over file"
    assert stored["epsilon"] == 0.05
    assert stored["budgets"] == {"shots": 30, "questions": 6}


def test_sweep_subcommand_writes_the_sweep_table(tmp_path, capsys):
    mock = tmp_path / "mock.json"
    mock.write_text(json.dumps(["not json"] * 32))
    out = tmp_path / "sweep"
    code = main(
        [
            "sweep",
            "--taus",
            "0.0",
            "--boards",
            "1",
            "--seeds-per-board",
            "1",
            "--particles",
            "100",
            "--sweeps",
            "5",
            "--llm-mock-file",
            str(mock),
            "--out",
            str(out),
        ]
    )
    assert code == 0
    stdout = capsys.readouterr().out
    assert "no-LLM basin" in stdout
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("scope,tau,")
    assert len(lines) == 2


def test_ablate_subcommand_prints_paired_deltas(tmp_path, capsys):
    out = tmp_path / "ablate"
    code = main(
        [
            "ablate",
            "--level-a",
            "L2",
            "--level-b",
            "L1",
            "--boards",
            "1",
            "--seeds-per-board",
            "1",
            "--particles",
            "100",
            "--sweeps",
            "5",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    stdout = capsys.readouterr().out
    assert "winRate delta (L2 minus L1):" in stdout
    assert "B01" in stdout


def test_lens_reports_read_a_run_directory(tmp_path, capsys):
    out = run_dir_with_one_board(tmp_path, levels="L1,L3on")
    capsys.readouterr()

    assert main(["lens", "table2", "--run", str(out)]) == 0
    table2 = capsys.readouterr().out
    assert "L1" in table2 and "L3on" in table2

    assert (
        main(
            [
                "lens",
                "deltas",
                "--run",
                str(out),
                "--level-a",
                "L3on",
                "--level-b",
                "L1",
            ]
        )
        == 0
    )
    deltas = capsys.readouterr().out
    assert deltas.startswith("B01,")

    assert main(["lens", "trace", "B01", "0", "--run", str(out)]) == 0
    trace = capsys.readouterr().out.strip()
    assert trace == "no revisions" or trace.startswith("Turn ")


def test_lens_events_filters_and_aggregates(tmp_path, capsys):
    out = run_dir_with_one_board(tmp_path)
    capsys.readouterr()

    assert main(["lens", "events", "--run", str(out), "--kind", "shot"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines
    assert all(json.loads(line)["kind"] == "shot" for line in lines)

    assert (
        main(
            [
                "lens",
                "events",
                "--run",
                str(out),
                "--kind",
                "shot",
                "--agg",
                "rate",
                "--field",
                "observedHit",
            ]
        )
        == 0
    )
    rate = float(capsys.readouterr().out.strip())
    assert 0.0 <= rate <= 1.0

    trace = next((out / "traces").glob("*.jsonl"))
    assert main(["lens", "events", str(trace), "--agg", "count"]) == 0
    count = int(capsys.readouterr().out.strip())
    assert count > 0

    # an empty filter result is a successful empty report
    assert main(["lens", "events", "--run", str(out), "--phase", "reflect"]) == 0
    assert capsys.readouterr().out == ""


def test_oracle_subcommand_reports_worst_distance(capsys):
    code = main(
        [
            "oracle",
            "--width",
            "3",
            "--height",
            "3",
            "--fleet",
            "2",
            "--epsilons",
            "0.0",
            "--histories",
            "2",
            "--max-length",
            "3",
            "--particles",
            "300",
            "--sweeps",
            "10",
            "--master-seed",
            "5",
        ]
    )
    assert code == 0
    stdout = capsys.readouterr().out
    assert "worst Linf" in stdout
    assert stdout.count("eps=") == 2


def test_oracle_subcommand_fails_on_an_unreachable_tolerance(capsys):
    code = main(
        [
            "oracle",
            "--width",
            "3",
            "--height",
            "3",
            "--fleet",
            "2,2",
            "--epsilons",
            "0.0",
            "--histories",
            "2",
            "--max-length",
            "3",
            "--particles",
            "50",
            "--sweeps",
            "2",
            "--master-seed",
            "5",
            "--tol",
            "1e-9",
        ]
    )
    assert code == 1
    captured = capsys.readouterr()
    assert "FAIL" in captured.err


def test_cli_surfaces_clean_errors_for_bad_requests(tmp_path, capsys):
    code = main(
        [
            "run",
            "--levels",
            "L9",
            "--boards",
            "1",
            "--seeds-per-board",
            "1",
            "--out",
            str(tmp_path / "x"),
        ]
    )
    assert code == 1
    assert "error:" in capsys.readouterr().err

    code = main(["lens", "events", "--kind", "shot"])
    assert code == 1
    assert "error:" in capsys.readouterr().err

    code = main(["lens", "table3", "--run", str(tmp_path)])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_parser_exposes_the_five_subcommands():
    parser = build_parser()
    args = parser.parse_args(["oracle"])
    assert args.command == "oracle"
    args = parser.parse_args(["run", "--out", "x", "--tau", "0.5"])
    assert args.tau == 0.5
    args = parser.parse_args(["lens", "trace", "B17", "0", "--run", "x"])
    assert args.board == "B17" and args.seed == 0
