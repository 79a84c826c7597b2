"""Tests for suite running, summary artifacts, and the trace lens."""
from __future__ import annotations

import json
import math
import statistics
import tempfile
from pathlib import Path

import pytest

from shiplab.harness import ConfigError, RunConfig
from shiplab.lab import (
    EmptySample,
    MalformedLog,
    SuiteMismatch,
    SuiteSpec,
    aggregate,
    board_config_for,
    default_suite_path,
    filter_events,
    generate_board_suite,
    layer_delta,
    load_summary,
    oracle_check,
    read_logs,
    render_trace_report,
    report_deltas,
    report_table2,
    report_table3,
    report_trace,
    run_suite,
    suite_boards,
    threshold_sweep,
    trace_label,
    verify_rate_identities,
    wilson_ci,
)
from shiplab.revision import ScriptedClient
from shiplab.world import load_board_suite


def failing_client_factory(config):
    return ScriptedClient(["not json"] * 128)


_CACHE: dict[str, object] = {}


def tiny_spec() -> SuiteSpec:
    return SuiteSpec(boards=2, seeds_per_board=1, levels=("L1", "L3on"), master_seed=11)


def tiny_config() -> RunConfig:
    return RunConfig(level="L1", particles=100, sweeps=5)


def tiny_suite_run() -> Path:
    """One shared small suite run; several tests read its artifacts."""
    if "suite" not in _CACHE:
        out = Path(tempfile.mkdtemp(prefix="shiplab_suite_"))
        run_suite(tiny_spec(), tiny_config(), out)
        _CACHE["suite"] = out
    return _CACHE["suite"]


def tiny_sweep_run() -> tuple[Path, list[dict]]:
    if "sweep" not in _CACHE:
        out = Path(tempfile.mkdtemp(prefix="shiplab_sweep_"))
        spec = SuiteSpec(
            boards=2,
            seeds_per_board=1,
            levels=("L4",),
            taus=(0.0, 1.0),
            master_seed=11,
        )
        rows = threshold_sweep(spec, tiny_config(), out, failing_client_factory)
        _CACHE["sweep"] = (out, rows)
    return _CACHE["sweep"]


def test_wilson_interval_matches_reference_tuples():
    for successes, n, lo, hi in [
        (27, 54, 0.371, 0.629),
        (0, 54, 0.000, 0.066),
        (40, 54, 0.611, 0.839),
    ]:
        got_lo, got_hi = wilson_ci(successes, n)
        assert abs(got_lo - lo) <= 0.001
        assert abs(got_hi - hi) <= 0.001
    lo, hi = wilson_ci(54, 54)
    assert hi == 1.0 and lo > 0.9


def test_wilson_interval_rejects_empty_and_out_of_range_samples():
    with pytest.raises(EmptySample):
        wilson_ci(0, 0)
    with pytest.raises(ValueError):
        wilson_ci(-1, 10)
    with pytest.raises(ValueError):
        wilson_ci(11, 10)


def test_wilson_interval_narrows_at_lower_confidence_levels():
    wide = wilson_ci(30, 60, level=0.99)
    mid = wilson_ci(30, 60, level=0.95)
    narrow = wilson_ci(30, 60, level=0.80)
    assert wide[0] < mid[0] < narrow[0]
    assert narrow[1] < mid[1] < wide[1]
    # the tabulated z for 0.95 agrees with the analytic quantile
    z = statistics.NormalDist().inv_cdf(0.975)
    assert math.isclose(1.959964, z, abs_tol=5e-6)


def test_generated_board_suite_is_deterministic_and_disjoint():
    first = generate_board_suite(count=4, master_seed=7)
    second = generate_board_suite(count=4, master_seed=7)
    assert [b["placement"] for b in first] == [b["placement"] for b in second]
    assert [b["id"] for b in first] == ["B01", "B02", "B03", "B04"]
    for board in first:
        placement = board["placement"]
        cells = list(placement.occupied)
        assert len(cells) == len(set(cells))
        for r, c in cells:
            assert 0 <= r < board["height"] and 0 <= c < board["width"]
    shifted = generate_board_suite(count=4, master_seed=8)
    assert [b["placement"] for b in shifted] != [b["placement"] for b in first]


def test_packaged_board_file_matches_the_generator():
    entries = load_board_suite(default_suite_path())
    fresh = generate_board_suite(count=18, master_seed=7)
    assert len(entries) == 18
    assert [e["id"] for e in entries] == [b["id"] for b in fresh]
    assert [e["placement"] for e in entries] == [b["placement"] for b in fresh]


def test_suite_spec_round_trips_through_json():
    spec = SuiteSpec(
        boards=6,
        seeds_per_board=2,
        levels=("L1", "L4"),
        taus=(0.5, 1.0),
        master_seed=3,
    )
    again = SuiteSpec.from_json_dict(spec.to_json_dict())
    assert again == spec
    assert spec.n_games == 12
    assert SuiteSpec.from_json_dict({}) == SuiteSpec()


def test_suite_spec_validates_its_fields():
    with pytest.raises(ConfigError):
        SuiteSpec(boards=0)
    with pytest.raises(ConfigError):
        SuiteSpec(seeds_per_board=0)
    with pytest.raises(ConfigError):
        SuiteSpec(levels=())
    with pytest.raises(ConfigError):
        SuiteSpec(levels=("L1", "L9"))
    with pytest.raises(ConfigError):
        SuiteSpec(taus=(1.5,))
    with pytest.raises(SuiteMismatch):
        suite_boards(SuiteSpec(boards=99))


def test_board_config_for_preserves_fleet_order_and_budgets():
    entry = suite_boards(SuiteSpec(boards=1))[0]
    config = RunConfig(level="L1", shot_budget=33, question_budget=9, epsilon=0.2)
    board_cfg = board_config_for(entry, config)
    assert board_cfg.fleet == tuple(s.length for s in entry["placement"].ships)
    assert board_cfg.shot_budget == 33
    assert board_cfg.question_budget == 9
    assert board_cfg.noise_epsilon == 0.2


def test_trace_labels_carry_tau_only_on_multi_tau_runs():
    assert trace_label("L3on", 0.72, (0.72,)) == "L3on"
    assert trace_label("L4", 0.5, (0.0, 0.5, 1.0)) == "L4_t0.5"
    assert trace_label("L4", 0.0, (0.0, 1.0)) == "L4_t0"


def test_run_suite_writes_the_artifact_bundle():
    out = tiny_suite_run()
    spec = tiny_spec()
    traces = sorted(p.name for p in (out / "traces").glob("*.jsonl"))
    assert traces == ["L1_B01_0.jsonl", "L1_B02_0.jsonl", "L3on_B01_0.jsonl", "L3on_B02_0.jsonl"]
    games_lines = (out / "games.csv").read_text().splitlines()
    assert games_lines[0] == (
        "level,tau,board,seed,win,f1,turns,questions,llmCalls,revisions,provenanceCounts"
    )
    assert len(games_lines) == 1 + spec.n_games * len(spec.levels)
    summary = load_summary(out)
    assert [row.level for row in summary.rows] == ["L1", "L3on"]
    for row in summary.rows:
        assert row.games == spec.n_games
        assert 0.0 <= row.win_rate <= 1.0
        assert row.ci_low <= row.win_rate <= row.ci_high
        assert row.llm_rate == 0.0
        assert set(row.per_board_f1) == {"B01", "B02"}
    assert summary.row("L1").avg_questions == 0.0
    config_payload = json.loads((out / "config.json").read_text())
    assert SuiteSpec.from_json_dict(config_payload["spec"]) == spec
    assert RunConfig.from_json_dict(config_payload["config"]).particles == 100
    verify_rate_identities(out)


def test_summary_row_lookup_requires_an_unambiguous_key():
    summary = load_summary(tiny_suite_run())
    assert summary.row("L1", 0.72).level == "L1"
    with pytest.raises(KeyError):
        summary.row("L2")
    _, rows = tiny_sweep_run()
    sweep_summary = load_summary(tiny_sweep_run()[0])
    with pytest.raises(KeyError):
        sweep_summary.row("L4")
    assert sweep_summary.row("L4", 1.0).tau == 1.0


def test_rerunning_a_suite_reproduces_identical_artifact_bytes():
    first = tiny_suite_run()
    with tempfile.TemporaryDirectory() as td:
        run_suite(tiny_spec(), tiny_config(), td)
        second = Path(td)
        names = sorted(
            str(p.relative_to(first)) for p in first.rglob("*") if p.is_file()
        )
        again = sorted(
            str(p.relative_to(second)) for p in second.rglob("*") if p.is_file()
        )
        assert names == again
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_layer_delta_pairs_per_board_differences():
    summary = load_summary(tiny_suite_run())
    delta = layer_delta(summary.row("L3on"), summary.row("L1"), metric="f1")
    assert set(delta.per_board) == {"B01", "B02"}
    mean_of_boards = sum(delta.per_board.values()) / len(delta.per_board)
    assert abs(mean_of_boards - delta.total) < 1e-9
    ordered = delta.sorted_deltas()
    assert [d for _, d in ordered] == sorted(
        (d for _, d in ordered), reverse=True
    )
    win_delta = layer_delta(summary.row("L3on"), summary.row("L1"))
    assert win_delta.metric == "winRate"
    with pytest.raises(ValueError):
        layer_delta(summary.row("L1"), summary.row("L3on"), metric="turns")


def test_layer_delta_refuses_mismatched_suites():
    summary = load_summary(tiny_suite_run())
    import dataclasses

    other = dataclasses.replace(summary.row("L1"), games=99)
    with pytest.raises(SuiteMismatch):
        layer_delta(summary.row("L3on"), other)
    renamed = dataclasses.replace(
        summary.row("L1"), per_board_win={"B07": 1.0, "B08": 0.0}
    )
    with pytest.raises(SuiteMismatch):
        layer_delta(summary.row("L3on"), renamed)


def test_threshold_sweep_emits_one_row_per_tau():
    out, rows = tiny_sweep_run()
    assert [row["tau"] for row in rows] == [0.0, 1.0]
    for row in rows:
        assert row["scope"] == "2"
        assert row["noLlmBasin"] == (row["llmRate"] == 0.0)
        assert isinstance(row["gateOpens"], int)
    assert rows[0]["llmRate"] == 0.0
    assert rows[0]["gateOpens"] == 0
    sweep_lines = (out / "sweep.csv").read_text().splitlines()
    assert sweep_lines[0] == "scope,tau,llmRate,avgF1,winRate,gateOpens,noLlmBasin"
    assert len(sweep_lines) == 3
    table = report_table3(out)
    assert [row["tau"] for row in table] == [0.0, 1.0]
    traces = sorted(p.name for p in (out / "traces").glob("*.jsonl"))
    assert traces == [
        "L4_t0_B01_0.jsonl",
        "L4_t0_B02_0.jsonl",
        "L4_t1_B01_0.jsonl",
        "L4_t1_B02_0.jsonl",
    ]


def test_report_table3_requires_a_sweep_artifact():
    with pytest.raises(FileNotFoundError):
        report_table3(tiny_suite_run())


def test_read_logs_yields_typed_entries_with_locations():
    out = tiny_suite_run()
    paths = sorted((out / "traces").glob("L1_*.jsonl"))
    entries = read_logs(paths)
    assert entries
    assert entries[0].level == "L1"
    assert entries[0].board == "B01"
    assert entries[0].seed == 0
    assert entries[0].event["turn"] == 1
    boards = {entry.board for entry in entries}
    assert boards == {"B01", "B02"}


def test_read_logs_reports_malformed_lines_with_one_based_numbers(tmp_path):
    good = tmp_path / "L3on_B05_2.jsonl"
    good.write_text('{"turn": 1}\n\n{"turn": 2}\n')
    entries = read_logs([good])
    assert [e.event["turn"] for e in entries] == [1, 2]
    assert all(e.level == "L3on" and e.board == "B05" and e.seed == 2 for e in entries)

    bad = tmp_path / "L1_B01_0.jsonl"
    bad.write_text('{"turn": 1}\nnot json at all\n')
    with pytest.raises(MalformedLog) as exc:
        read_logs([bad])
    assert exc.value.line_number == 2
    assert str(bad) in str(exc.value)

    non_object = tmp_path / "L1_B02_0.jsonl"
    non_object.write_text("[1, 2, 3]\n")
    with pytest.raises(MalformedLog):
        read_logs([non_object])

    misnamed = tmp_path / "nolabel.jsonl"
    misnamed.write_text('{"turn": 1}\n')
    with pytest.raises(MalformedLog):
        read_logs([misnamed])


def test_sweep_trace_names_round_trip_through_the_lens():
    out, _ = tiny_sweep_run()
    entries = read_logs(sorted((out / "traces").glob("L4_t1_*.jsonl")))
    assert entries
    assert all(entry.level == "L4_t1" for entry in entries)


def test_filter_events_narrows_by_identity_and_event_fields():
    entries = read_logs(sorted((tiny_suite_run() / "traces").glob("*.jsonl")))
    shots = filter_events(entries, kind="shot")
    assert shots and all(e.event["kind"] == "shot" for e in shots)
    l1_only = filter_events(entries, level="L1")
    assert l1_only and all(e.level == "L1" for e in l1_only)
    assert not filter_events(entries, level="L1", phase="reflect")
    one_board = filter_events(entries, board="B01", seed=0, phase="act")
    assert one_board and all(e.board == "B01" for e in one_board)


def test_aggregate_supports_count_mean_and_rate():
    entries = read_logs(sorted((tiny_suite_run() / "traces").glob("L3on_*.jsonl")))
    shots = filter_events(entries, kind="shot")
    assert aggregate(shots, "count") == len(shots)
    mean_prob = aggregate(shots, "mean", "predictedProb")
    assert 0.0 <= mean_prob <= 1.0
    hit_rate = aggregate(shots, "rate", "observedHit")
    assert 0.0 <= hit_rate <= 1.0
    # booleans are rates, not means: mean over a bool field has no numbers
    with pytest.raises(EmptySample):
        aggregate(shots, "mean", "observedHit")
    with pytest.raises(EmptySample):
        aggregate([], "mean", "predictedProb")
    assert aggregate([], "count") == 0
    with pytest.raises(ValueError):
        aggregate(shots, "median", "predictedProb")
    with pytest.raises(ValueError):
        aggregate(shots, "mean")


def test_table2_report_recomputes_summary_from_game_rows():
    out = tiny_suite_run()
    table = report_table2(out)
    summary = load_summary(out)
    assert [row["level"] for row in table] == ["L1", "L3on"]
    for row in table:
        reference = summary.row(row["level"])
        assert row["games"] == reference.games
        assert abs(row["winRate"] - reference.win_rate) < 1e-12
        assert abs(row["avgF1"] - reference.avg_f1) < 1e-12
        assert abs(row["avgQuestions"] - reference.avg_questions) < 1e-12
        assert row["llmRate"] == reference.llm_rate
        assert abs(row["wilsonCI95"][0] - reference.ci_low) < 1e-12
        assert abs(row["wilsonCI95"][1] - reference.ci_high) < 1e-12


def test_delta_report_sorts_signed_per_board_effects():
    out = tiny_suite_run()
    rows = report_deltas(out, level_a="L3on", level_b="L1", metric="f1")
    assert {board for board, _ in rows} == {"B01", "B02"}
    deltas = [delta for _, delta in rows]
    assert deltas == sorted(deltas, reverse=True)
    summary = load_summary(out)
    paired = layer_delta(summary.row("L3on"), summary.row("L1"), metric="f1")
    for board, delta in rows:
        assert abs(delta - paired.per_board[board]) < 1e-12
    with pytest.raises(SuiteMismatch):
        report_deltas(out, level_a="L3on", level_b="L2", metric="f1")


def test_trace_report_renders_revision_turns_or_says_none_fired():
    out = tiny_suite_run()
    events = report_trace(out, "B01", 0, level="L3on")
    rendered = render_trace_report(events)
    if events:
        for event, line in zip(events, rendered.splitlines()):
            assert line == (
                f"Turn {event['turn']}: {event['revisionKind']}"
                f" ({event['provenance']})"
            )
    else:
        assert rendered == "no revisions"
    with pytest.raises(FileNotFoundError):
        report_trace(out, "B99", 0)


def test_rate_identity_check_catches_a_doctored_summary():
    out = tiny_suite_run()
    with tempfile.TemporaryDirectory() as td:
        copy = Path(td)
        (copy / "traces").mkdir()
        for path in (out / "traces").glob("*.jsonl"):
            (copy / "traces" / path.name).write_bytes(path.read_bytes())
        payload = json.loads((out / "summary.json").read_text())
        payload["rows"][0]["avgQuestions"] += 1.0
        (copy / "summary.json").write_text(json.dumps(payload))
        with pytest.raises(SuiteMismatch):
            verify_rate_identities(copy)


def test_oracle_check_reports_per_history_distances():
    result = oracle_check(
        width=3,
        height=3,
        fleet=(2,),
        epsilons=(0.0,),
        histories=3,
        max_length=3,
        particles=300,
        sweeps=10,
        master_seed=5,
    )
    assert len(result["histories"]) == 3
    assert result["worstLinf"] == max(h["linf"] for h in result["histories"])
    assert result["worstLinf"] <= 0.05
    for entry in result["histories"]:
        assert entry["epsilon"] == 0.0
        assert entry["length"] <= 3
        assert 0.0 <= entry["linf"]
