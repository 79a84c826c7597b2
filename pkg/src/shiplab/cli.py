"""Command line front end: suite runs, sweeps, ablations, log lens, oracle.

Every subcommand is a thin wrapper over the library: `run` drives
``run_suite``, `sweep` drives ``threshold_sweep``, `ablate` runs a paired
two-level contrast, `lens` filters and aggregates trace logs or prints the
canned reports, and `oracle` compares the sampled posterior against exact
enumeration on a small board.  Config flags mirror the run-config JSON
field for field; a config file provides defaults that individual flags
then override.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .harness import ConfigError, RunConfig, build_client, load_config
from .lab import (
    EmptySample,
    MalformedLog,
    SuiteMismatch,
    SuiteSpec,
    aggregate,
    filter_events,
    layer_delta,
    oracle_check,
    read_logs,
    render_trace_report,
    report_deltas,
    report_table2,
    report_table3,
    report_trace,
    run_suite,
    threshold_sweep,
)


def _comma_floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _comma_ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _comma_names(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """Flags that mirror the run-config JSON, all optional overrides."""
    parser.add_argument("--config", help="run-config JSON file with defaults")
    parser.add_argument("--level", help="harness level for single-level commands")
    parser.add_argument("--tau", type=float, help="confidence threshold")
    parser.add_argument("--alpha", type=float, help="error EMA smoothing factor")
    parser.add_argument("--streak", type=int, help="sustained low-confidence turns")
    parser.add_argument("--cooldown-turns", type=int, help="turns blocked after a revision")
    parser.add_argument("--delta-min", type=float, help="minimum counterfactual preview gain")
    parser.add_argument("--particles", type=int, help="posterior particle count")
    parser.add_argument("--sweeps", type=int, help="refresh sweeps per update")
    parser.add_argument("--epsilon", type=float, help="shot observation flip probability")
    parser.add_argument("--shots", type=int, help="shot budget per game")
    parser.add_argument("--questions", type=int, help="question budget per game")
    parser.add_argument(
        "--shared-question-policy",
        action="store_true",
        help="use the two-bucket question schedule at every level",
    )
    parser.add_argument("--llm-base-url", help="generation endpoint base URL")
    parser.add_argument("--llm-model", help="generation model name")
    parser.add_argument("--llm-mock-file", help="JSON file of scripted completions")


def _add_suite_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--board-file", help="board suite JSON (default: packaged suite)")
    parser.add_argument("--boards", type=int, default=18)
    parser.add_argument("--seeds-per-board", type=int, default=3)
    parser.add_argument("--master-seed", type=int, default=7)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", required=True, help="artifact output directory")


def _build_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for flag, field in [
        ("level", "level"),
        ("tau", "tau"),
        ("alpha", "alpha"),
        ("streak", "streak"),
        ("cooldown_turns", "cooldown_turns"),
        ("delta_min", "delta_min"),
        ("particles", "particles"),
        ("sweeps", "sweeps"),
        ("epsilon", "epsilon"),
        ("shots", "shot_budget"),
        ("questions", "question_budget"),
        ("llm_base_url", "llm_base_url"),
        ("llm_model", "llm_model"),
        ("llm_mock_file", "llm_mock_file"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "shared_question_policy", False):
        overrides["shared_question_policy"] = True
    return dataclasses.replace(config, **overrides) if overrides else config


def _build_spec(args: argparse.Namespace, levels: tuple[str, ...], taus: tuple[float, ...]) -> SuiteSpec:
    return SuiteSpec(
        board_file=args.board_file,
        boards=args.boards,
        seeds_per_board=args.seeds_per_board,
        levels=levels,
        taus=taus,
        master_seed=args.master_seed,
    )


def _client_factory_for(spec: SuiteSpec):
    if "L4" not in spec.levels:
        return None
    return build_client


def _print_summary(summary) -> None:
    header = f"{'level':8} {'tau':>5} {'games':>5} {'llmRate':>8} {'avgF1':>7} {'winRate':>8} {'95% CI':>16} {'avgQ':>6}"
    print(header)
    for row in summary.rows:
        ci = f"[{row.ci_low:.3f},{row.ci_high:.3f}]"
        print(
            f"{row.label:8} {row.tau:5.2f} {row.games:5d} {row.llm_rate:8.4f} "
            f"{row.avg_f1:7.3f} {row.win_rate:8.3f} {ci:>16} {row.avg_questions:6.2f}"
        )


def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    spec = _build_spec(args, _comma_names(args.levels), _comma_floats(args.taus))
    summary = run_suite(
        spec, config, args.out, client_factory=_client_factory_for(spec), workers=args.workers
    )
    _print_summary(summary)
    print(f"artifacts written to {args.out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _build_config(args)
    spec = _build_spec(args, ("L4",), _comma_floats(args.taus))
    rows = threshold_sweep(
        spec, config, args.out, client_factory=build_client, workers=args.workers
    )
    print(f"{'scope':>6} {'tau':>5} {'llmRate':>8} {'avgF1':>7} {'winRate':>8} {'gateOpens':>9}")
    for row in rows:
        basin = "  (no-LLM basin)" if row["noLlmBasin"] else ""
        print(
            f"{row['scope']:>6} {row['tau']:5.2f} {row['llmRate']:8.4f} "
            f"{row['avgF1']:7.3f} {row['winRate']:8.3f} {row['gateOpens']:9d}{basin}"
        )
    print(f"artifacts written to {args.out}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _build_config(args)
    spec = _build_spec(args, (args.level_a, args.level_b), (args.tau if args.tau is not None else 0.72,))
    summary = run_suite(
        spec, config, args.out, client_factory=_client_factory_for(spec), workers=args.workers
    )
    _print_summary(summary)
    delta = layer_delta(
        summary.row(args.level_a), summary.row(args.level_b), metric=args.metric
    )
    print(f"\n{args.metric} delta ({args.level_a} minus {args.level_b}): {delta.total:+.4f}")
    for board, value in delta.sorted_deltas():
        print(f"  {board} {value:+.4f}")
    return 0


def _cmd_lens(args: argparse.Namespace) -> int:
    if args.report == "table2":
        for row in report_table2(args.run):
            ci = row["wilsonCI95"]
            print(
                f"{row['level']:8} {row['tau']:5.2f} {row['games']:5d} "
                f"{row['llmRate']:8.4f} {row['avgF1']:7.3f} {row['winRate']:8.3f} "
                f"[{ci[0]:.3f},{ci[1]:.3f}] {row['avgQuestions']:6.2f}"
            )
        return 0
    if args.report == "table3":
        for row in report_table3(args.run):
            print(
                f"{row['scope']:>6} {row['tau']:5.2f} {row['llmRate']:8.4f} "
                f"{row['avgF1']:7.3f} {row['winRate']:8.3f}"
            )
        return 0
    if args.report == "deltas":
        for board, value in report_deltas(
            args.run, level_a=args.level_a, level_b=args.level_b, metric=args.metric
        ):
            print(f"{board},{value:+.6f}")
        return 0
    if args.report == "trace":
        events = report_trace(args.run, args.board, args.seed, level=args.level or "L3on")
        print(render_trace_report(events))
        return 0
    # events: filter raw logs, then list or aggregate
    if args.paths:
        paths = [Path(p) for p in args.paths]
    elif args.run:
        paths = sorted((Path(args.run) / "traces").glob("*.jsonl"))
    else:
        raise ConfigError("lens events needs trace paths or --run")
    entries = filter_events(
        read_logs(paths),
        level=args.level,
        board=args.board_filter,
        seed=args.seed_filter,
        phase=args.phase,
        kind=args.kind,
    )
    if args.agg:
        print(aggregate(entries, args.agg, args.field))
    else:
        for entry in entries:
            print(json.dumps(entry.event, sort_keys=True))
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    result = oracle_check(
        width=args.width,
        height=args.height,
        fleet=_comma_ints(args.fleet),
        epsilons=_comma_floats(args.epsilons),
        histories=args.histories,
        max_length=args.max_length,
        particles=args.particles if args.particles is not None else 500,
        sweeps=args.sweeps if args.sweeps is not None else 20,
        master_seed=args.master_seed,
    )
    for entry in result["histories"]:
        print(
            f"eps={entry['epsilon']:<4} length={entry['length']} "
            f"linf={entry['linf']:.4f}"
        )
    worst = result["worstLinf"]
    print(f"worst Linf {worst:.4f} over {len(result['histories'])} histories (tol {args.tol})")
    if worst > args.tol:
        print("FAIL: sampled posterior diverges from enumeration", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiplab",
        description="Layered noisy-battleship harness: run suites, sweep thresholds, inspect traces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a board suite and write the artifact bundle")
    _add_config_flags(run_p)
    _add_suite_flags(run_p)
    run_p.add_argument("--levels", default="L1,L2,L3off,L3on", help="comma-separated levels")
    run_p.add_argument("--taus", default="0.72", help="comma-separated thresholds")
    run_p.set_defaults(func=_cmd_run)

    sweep_p = sub.add_parser("sweep", help="threshold sweep at the gated level")
    _add_config_flags(sweep_p)
    _add_suite_flags(sweep_p)
    sweep_p.add_argument("--taus", default="0.0,0.5,0.72,1.0", help="comma-separated thresholds")
    sweep_p.set_defaults(func=_cmd_sweep)

    ablate_p = sub.add_parser("ablate", help="paired two-level contrast with per-board deltas")
    _add_config_flags(ablate_p)
    _add_suite_flags(ablate_p)
    ablate_p.add_argument("--level-a", default="L3on")
    ablate_p.add_argument("--level-b", default="L3off")
    ablate_p.add_argument("--metric", choices=("winRate", "f1"), default="winRate")
    ablate_p.set_defaults(func=_cmd_ablate)

    lens_p = sub.add_parser("lens", help="filter, aggregate, and report over trace logs")
    lens_sub = lens_p.add_subparsers(dest="report", required=True)

    table2_p = lens_sub.add_parser("table2", help="unified summary recomputed from game rows")
    table2_p.add_argument("--run", required=True, help="suite artifact directory")
    table2_p.set_defaults(func=_cmd_lens)

    table3_p = lens_sub.add_parser("table3", help="threshold sweep table")
    table3_p.add_argument("--run", required=True)
    table3_p.set_defaults(func=_cmd_lens)

    deltas_p = lens_sub.add_parser("deltas", help="sorted signed per-board paired deltas")
    deltas_p.add_argument("--run", required=True)
    deltas_p.add_argument("--level-a", default="L3on")
    deltas_p.add_argument("--level-b", default="L3off")
    deltas_p.add_argument("--metric", choices=("winRate", "f1"), default="f1")
    deltas_p.set_defaults(func=_cmd_lens)

    trace_p = lens_sub.add_parser("trace", help="turn-indexed revision events of one game")
    trace_p.add_argument("board")
    trace_p.add_argument("seed", type=int)
    trace_p.add_argument("--run", required=True)
    trace_p.add_argument("--level", default="L3on")
    trace_p.set_defaults(func=_cmd_lens)

    events_p = lens_sub.add_parser("events", help="filtered raw events, optionally aggregated")
    events_p.add_argument("paths", nargs="*", help="trace files (or use --run)")
    events_p.add_argument("--run", help="suite artifact directory")
    events_p.add_argument("--level")
    events_p.add_argument("--board", dest="board_filter")
    events_p.add_argument("--seed", dest="seed_filter", type=int)
    events_p.add_argument("--phase")
    events_p.add_argument("--kind")
    events_p.add_argument("--agg", choices=("count", "mean", "rate"))
    events_p.add_argument("--field", help="event field for mean/rate aggregation")
    events_p.set_defaults(func=_cmd_lens)

    oracle_p = sub.add_parser("oracle", help="sampled-vs-enumerated posterior check")
    oracle_p.add_argument("--width", type=int, default=4)
    oracle_p.add_argument("--height", type=int, default=4)
    oracle_p.add_argument("--fleet", default="3,2")
    oracle_p.add_argument("--epsilons", default="0.0,0.1")
    oracle_p.add_argument("--histories", type=int, default=10, help="histories per epsilon")
    oracle_p.add_argument("--max-length", type=int, default=6)
    oracle_p.add_argument("--particles", type=int)
    oracle_p.add_argument("--sweeps", type=int)
    oracle_p.add_argument("--master-seed", type=int, default=9)
    oracle_p.add_argument("--tol", type=float, default=0.05)
    oracle_p.set_defaults(func=_cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SuiteMismatch, MalformedLog, EmptySample) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
