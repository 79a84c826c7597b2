"""Suite runner, metrics, ablation deltas, threshold sweep, and log analysis.

Everything downstream of single games lives here: the board suite, the
(level, tau) grid runner with its artifact bundle, Wilson intervals, paired
layer contrasts, the tau sweep, and the `lens` queries that recompute every
reported number straight from the JSONL traces.
"""
from __future__ import annotations

import csv
import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .belief import Posterior, exact_posterior
from .harness import (
    BOARD_STREAM,
    LEVELS,
    ConfigError,
    GameRecord,
    RunConfig,
    run_game,
    stream_seed,
    write_trace,
)
from .world import (
    BoardConfig,
    Question,
    QuestionAnswer,
    answer_question,
    load_board_suite,
    place_fleet,
    resolve_shot,
)

Z_SCORES = {0.90: 1.644854, 0.95: 1.959964, 0.99: 2.575829}

DEFAULT_SUITE_FILENAME = "boards_18.json"


class EmptySample(Exception):
    """An aggregate was requested over zero observations."""


class SuiteMismatch(Exception):
    """Two summaries or artifact sets do not describe the same paired suite."""


class MalformedLog(Exception):
    """A trace file contains a line that does not parse as a JSON event."""

    def __init__(self, path: str | Path, line_number: int):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{self.path}:{line_number}: not a JSON event")


def wilson_ci(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        raise EmptySample("cannot form an interval over zero games")
    if not 0 <= successes <= n:
        raise ValueError("successes must lie in [0, n]")
    z = Z_SCORES.get(level)
    if z is None:
        z = statistics.NormalDist().inv_cdf(0.5 + level / 2.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return (max(0.0, center - half), min(1.0, center + half))


# ---------------------------------------------------------------------------
# board suites


def default_suite_path() -> Path:
    return Path(__file__).resolve().parent / "data" / DEFAULT_SUITE_FILENAME


def generate_board_suite(
    count: int = 18,
    master_seed: int = 7,
    config: BoardConfig | None = None,
) -> list[dict]:
    """Freshly drawn legal boards, one independent stream per board."""
    cfg = config or BoardConfig()
    boards = []
    for index in range(count):
        rng = np.random.default_rng(stream_seed(master_seed, index, 0, BOARD_STREAM))
        boards.append(
            {
                "id": f"B{index + 1:02d}",
                "width": cfg.width,
                "height": cfg.height,
                "placement": place_fleet(cfg, rng),
            }
        )
    return boards


@dataclass(frozen=True)
class SuiteSpec:
    """What to run: which boards, how many seeds, which (level, tau) cells."""

    board_file: str | None = None
    boards: int = 18
    seeds_per_board: int = 3
    levels: tuple[str, ...] = ("L1", "L2", "L3off", "L3on")
    taus: tuple[float, ...] = (0.72,)
    master_seed: int = 7

    def __post_init__(self) -> None:
        if self.boards < 1 or self.seeds_per_board < 1:
            raise ConfigError("a suite needs at least one board and one seed")
        if not self.levels or any(level not in LEVELS for level in self.levels):
            raise ConfigError(f"levels must be a non-empty subset of {LEVELS}")
        if not self.taus or any(not 0.0 <= tau <= 1.0 for tau in self.taus):
            raise ConfigError("taus must be a non-empty list of values in [0, 1]")

    @property
    def n_games(self) -> int:
        return self.boards * self.seeds_per_board

    def to_json_dict(self) -> dict:
        return {
            "boardFile": self.board_file,
            "boards": self.boards,
            "seedsPerBoard": self.seeds_per_board,
            "levels": list(self.levels),
            "taus": list(self.taus),
            "masterSeed": self.master_seed,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SuiteSpec":
        defaults = cls()
        return cls(
            board_file=data.get("boardFile"),
            boards=data.get("boards", defaults.boards),
            seeds_per_board=data.get("seedsPerBoard", defaults.seeds_per_board),
            levels=tuple(data.get("levels", defaults.levels)),
            taus=tuple(data.get("taus", defaults.taus)),
            master_seed=data.get("masterSeed", defaults.master_seed),
        )


def suite_boards(spec: SuiteSpec) -> list[dict]:
    path = Path(spec.board_file) if spec.board_file else default_suite_path()
    entries = load_board_suite(path)
    if len(entries) < spec.boards:
        raise SuiteMismatch(
            f"suite file {path} holds {len(entries)} boards, spec wants {spec.boards}"
        )
    return entries[: spec.boards]


def board_config_for(entry: dict, config: RunConfig) -> BoardConfig:
    fleet = tuple(ship.length for ship in entry["placement"].ships)
    return BoardConfig(
        width=entry["width"],
        height=entry["height"],
        fleet=fleet,
        shot_budget=config.shot_budget,
        question_budget=config.question_budget,
        noise_epsilon=config.epsilon,
    )


def trace_label(level: str, tau: float, taus: tuple[float, ...]) -> str:
    return level if len(taus) == 1 else f"{level}_t{tau:g}"


# ---------------------------------------------------------------------------
# summaries


@dataclass
class SummaryRow:
    """One (level, tau) cell of the suite, Table-2 shaped."""

    level: str
    tau: float
    label: str
    games: int
    wins: int
    avg_f1: float
    win_rate: float
    ci_low: float
    ci_high: float
    avg_questions: float
    llm_rate: float
    per_board_f1: dict[str, float] = field(default_factory=dict)
    per_board_win: dict[str, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "level": self.level,
            "tau": self.tau,
            "label": self.label,
            "games": self.games,
            "wins": self.wins,
            "avgF1": self.avg_f1,
            "winRate": self.win_rate,
            "wilsonCI95": [self.ci_low, self.ci_high],
            "avgQuestions": self.avg_questions,
            "llmRate": self.llm_rate,
            "perBoardF1": dict(self.per_board_f1),
            "perBoardWinRate": dict(self.per_board_win),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SummaryRow":
        return cls(
            level=data["level"],
            tau=data["tau"],
            label=data["label"],
            games=data["games"],
            wins=data["wins"],
            avg_f1=data["avgF1"],
            win_rate=data["winRate"],
            ci_low=data["wilsonCI95"][0],
            ci_high=data["wilsonCI95"][1],
            avg_questions=data["avgQuestions"],
            llm_rate=data["llmRate"],
            per_board_f1=dict(data["perBoardF1"]),
            per_board_win=dict(data["perBoardWinRate"]),
        )


@dataclass
class RunSummary:
    rows: tuple[SummaryRow, ...]

    def row(self, level: str, tau: float | None = None) -> SummaryRow:
        matches = [
            r
            for r in self.rows
            if r.level == level and (tau is None or r.tau == tau)
        ]
        if not matches:
            raise KeyError(f"no summary row for level {level!r} tau {tau!r}")
        if len(matches) > 1:
            raise KeyError(f"level {level!r} is ambiguous without a tau")
        return matches[0]

    def to_json_dict(self) -> dict:
        return {"rows": [row.to_json_dict() for row in self.rows]}

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunSummary":
        return cls(rows=tuple(SummaryRow.from_json_dict(r) for r in data["rows"]))


def load_summary(run_dir: str | Path) -> RunSummary:
    payload = json.loads((Path(run_dir) / "summary.json").read_text())
    return RunSummary.from_json_dict(payload)


def _summarize_cell(
    level: str, tau: float, label: str, records: list[GameRecord]
) -> SummaryRow:
    games = len(records)
    if games == 0:
        raise EmptySample(f"no games for level {level} tau {tau}")
    wins = sum(1 for r in records if r.win)
    turns_total = sum(r.turns for r in records)
    ci_low, ci_high = wilson_ci(wins, games)
    boards: dict[str, list[GameRecord]] = {}
    for record in records:
        boards.setdefault(record.board_id, []).append(record)
    per_board_f1 = {
        board: sum(r.f1 for r in group) / len(group)
        for board, group in sorted(boards.items())
    }
    per_board_win = {
        board: sum(1 for r in group if r.win) / len(group)
        for board, group in sorted(boards.items())
    }
    return SummaryRow(
        level=level,
        tau=tau,
        label=label,
        games=games,
        wins=wins,
        avg_f1=sum(r.f1 for r in records) / games,
        win_rate=wins / games,
        ci_low=ci_low,
        ci_high=ci_high,
        avg_questions=sum(r.questions for r in records) / games,
        llm_rate=(
            sum(r.llm_calls for r in records) / turns_total if turns_total else 0.0
        ),
        per_board_f1=per_board_f1,
        per_board_win=per_board_win,
    )


GAMES_CSV_COLUMNS = (
    "level",
    "tau",
    "board",
    "seed",
    "win",
    "f1",
    "turns",
    "questions",
    "llmCalls",
    "revisions",
    "provenanceCounts",
)

SUMMARY_CSV_COLUMNS = (
    "level",
    "tau",
    "games",
    "wins",
    "llmRate",
    "avgF1",
    "winRate",
    "ciLow",
    "ciHigh",
    "avgQuestions",
)


def _write_games_csv(out_dir: Path, records: list[GameRecord]) -> None:
    with (out_dir / "games.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(GAMES_CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.level,
                    r.tau,
                    r.board_id,
                    r.seed_index,
                    int(r.win),
                    r.f1,
                    r.turns,
                    r.questions,
                    r.llm_calls,
                    r.revisions,
                    json.dumps(r.provenance_counts, sort_keys=True),
                ]
            )


def _write_summary_artifacts(
    out_dir: Path, spec: SuiteSpec, config: RunConfig, summary: RunSummary
) -> None:
    with (out_dir / "summary.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SUMMARY_CSV_COLUMNS)
        for row in summary.rows:
            writer.writerow(
                [
                    row.level,
                    row.tau,
                    row.games,
                    row.wins,
                    row.llm_rate,
                    row.avg_f1,
                    row.win_rate,
                    row.ci_low,
                    row.ci_high,
                    row.avg_questions,
                ]
            )
    (out_dir / "summary.json").write_text(
        json.dumps(summary.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    (out_dir / "config.json").write_text(
        json.dumps(
            {"spec": spec.to_json_dict(), "config": config.to_json_dict()},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )


def run_suite(
    spec: SuiteSpec,
    config: RunConfig,
    out_dir: str | Path,
    client_factory=None,
    workers: int = 1,
) -> RunSummary:
    """Run every (level, tau, board, seed) cell and write the artifact bundle.

    Seeds are paired: every cell at the same (board, seed) index draws from
    identical named streams, so level contrasts compare like with like.  A
    per-game ConfigError aborts the run after flushing the games completed
    so far.
    """
    out = Path(out_dir)
    traces = out / "traces"
    traces.mkdir(parents=True, exist_ok=True)
    boards = suite_boards(spec)

    jobs = []
    for level in spec.levels:
        for tau in spec.taus:
            label = trace_label(level, tau, spec.taus)
            cell_config = replace(config, level=level, tau=tau)
            for board_index, entry in enumerate(boards):
                board_cfg = board_config_for(entry, config)
                for seed_index in range(spec.seeds_per_board):
                    jobs.append((label, cell_config, entry, board_cfg, seed_index, board_index))

    def play(job) -> GameRecord:
        label, cell_config, entry, board_cfg, seed_index, board_index = job
        client = None
        if cell_config.level == "L4" and client_factory is not None:
            client = client_factory(cell_config)
        return run_game(
            cell_config,
            entry["placement"],
            spec.master_seed,
            board_index=board_index,
            seed_index=seed_index,
            client=client,
            board_config=board_cfg,
            board_id=entry["id"],
        )

    records: list[GameRecord] = []
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = pool.map(play, jobs)
                for job, record in zip(jobs, results):
                    write_trace(
                        record,
                        traces / f"{job[0]}_{record.board_id}_{record.seed_index}.jsonl",
                    )
                    records.append(record)
        else:
            for job in jobs:
                record = play(job)
                write_trace(
                    record,
                    traces / f"{job[0]}_{record.board_id}_{record.seed_index}.jsonl",
                )
                records.append(record)
    except ConfigError:
        _write_games_csv(out, records)
        raise

    _write_games_csv(out, records)
    rows = []
    for level in spec.levels:
        for tau in spec.taus:
            label = trace_label(level, tau, spec.taus)
            cell = [r for r in records if r.level == level and r.tau == tau]
            rows.append(_summarize_cell(level, tau, label, cell))
    summary = RunSummary(rows=tuple(rows))
    _write_summary_artifacts(out, spec, config, summary)
    return summary


# ---------------------------------------------------------------------------
# paired layer contrasts


@dataclass(frozen=True)
class LayerDelta:
    """A paired suite contrast: total effect plus signed per-board effects."""

    metric: str
    total: float
    per_board: dict[str, float]

    def sorted_deltas(self) -> list[tuple[str, float]]:
        return sorted(self.per_board.items(), key=lambda kv: (-kv[1], kv[0]))


def layer_delta(
    summary_a: SummaryRow, summary_b: SummaryRow, metric: str = "winRate"
) -> LayerDelta:
    """metric(A) minus metric(B) with per-board paired deltas."""
    if metric == "winRate":
        totals = (summary_a.win_rate, summary_b.win_rate)
        boards = (summary_a.per_board_win, summary_b.per_board_win)
    elif metric == "f1":
        totals = (summary_a.avg_f1, summary_b.avg_f1)
        boards = (summary_a.per_board_f1, summary_b.per_board_f1)
    else:
        raise ValueError(f"unknown metric {metric!r}; expected winRate or f1")
    if summary_a.games != summary_b.games:
        raise SuiteMismatch("summaries cover different game counts")
    if set(boards[0]) != set(boards[1]):
        raise SuiteMismatch("summaries cover different board suites")
    per_board = {
        board: boards[0][board] - boards[1][board] for board in sorted(boards[0])
    }
    return LayerDelta(metric=metric, total=totals[0] - totals[1], per_board=per_board)


# ---------------------------------------------------------------------------
# threshold sweep


SWEEP_CSV_COLUMNS = (
    "scope",
    "tau",
    "llmRate",
    "avgF1",
    "winRate",
    "gateOpens",
    "noLlmBasin",
)


def threshold_sweep(
    spec: SuiteSpec,
    config: RunConfig,
    out_dir: str | Path,
    client_factory=None,
    workers: int = 1,
) -> list[dict]:
    """One gated-level suite per tau in the spec, plus the sweep table.

    The scope column carries the evaluation scale (total games) so sweeps
    run at different scales can be stacked into one table.
    """
    sweep_spec = replace(spec, levels=("L4",))
    summary = run_suite(sweep_spec, config, out_dir, client_factory, workers)
    out = Path(out_dir)
    scope = str(sweep_spec.n_games)
    rows = []
    for tau in sweep_spec.taus:
        cell = summary.row("L4", tau)
        opens = _count_gate_opens(out / "traces", cell.label)
        rows.append(
            {
                "scope": scope,
                "tau": tau,
                "llmRate": cell.llm_rate,
                "avgF1": cell.avg_f1,
                "winRate": cell.win_rate,
                "gateOpens": opens,
                "noLlmBasin": cell.llm_rate == 0.0,
            }
        )
    with (out / "sweep.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SWEEP_CSV_COLUMNS)
        for row in rows:
            writer.writerow([row[col] for col in SWEEP_CSV_COLUMNS])
    return rows


def _count_gate_opens(traces_dir: Path, label: str) -> int:
    entries = read_logs(sorted(traces_dir.glob(f"{label}_*.jsonl")))
    gates = filter_events(entries, phase="reflect")
    return sum(1 for entry in gates if entry.event.get("gateOpen"))


# ---------------------------------------------------------------------------
# lens: trace queries


@dataclass(frozen=True)
class LogEntry:
    level: str
    board: str
    seed: int
    event: dict


def _parse_trace_name(path: Path) -> tuple[str, str, int]:
    parts = path.stem.split("_")
    if len(parts) < 3:
        raise MalformedLog(path, 0)
    return "_".join(parts[:-2]), parts[-2], int(parts[-1])


def read_logs(paths) -> list[LogEntry]:
    """Parse trace files into tagged events; bad lines carry their number."""
    entries: list[LogEntry] = []
    for path in paths:
        path = Path(path)
        label, board, seed = _parse_trace_name(path)
        with path.open(encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError:
                    raise MalformedLog(path, number) from None
                if not isinstance(event, dict):
                    raise MalformedLog(path, number)
                entries.append(
                    LogEntry(level=label, board=board, seed=seed, event=event)
                )
    return entries


def filter_events(
    entries,
    level: str | None = None,
    board: str | None = None,
    seed: int | None = None,
    phase: str | None = None,
    kind: str | None = None,
) -> list[LogEntry]:
    out = []
    for entry in entries:
        if level is not None and entry.level != level:
            continue
        if board is not None and entry.board != board:
            continue
        if seed is not None and entry.seed != seed:
            continue
        if phase is not None and entry.event.get("phase") != phase:
            continue
        if kind is not None and entry.event.get("kind") != kind:
            continue
        out.append(entry)
    return out


def aggregate(entries, op: str, field_name: str | None = None):
    """count, mean <field>, or rate <field> over filtered events."""
    if op == "count":
        return len(entries)
    if field_name is None:
        raise ValueError(f"aggregation {op!r} needs a field name")
    if not entries:
        raise EmptySample("no events to aggregate")
    if op == "mean":
        values = [
            float(e.event[field_name])
            for e in entries
            if isinstance(e.event.get(field_name), (int, float))
            and not isinstance(e.event.get(field_name), bool)
        ]
        if not values:
            raise EmptySample(f"no numeric values for field {field_name!r}")
        return sum(values) / len(values)
    if op == "rate":
        return sum(1 for e in entries if e.event.get(field_name)) / len(entries)
    raise ValueError(f"unknown aggregation {op!r}")


# ---------------------------------------------------------------------------
# lens: canned reports


def _read_games_csv(run_dir: str | Path) -> list[dict]:
    path = Path(run_dir) / "games.csv"
    rows = []
    with path.open(encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            rows.append(
                {
                    "level": row["level"],
                    "tau": float(row["tau"]),
                    "board": row["board"],
                    "seed": int(row["seed"]),
                    "win": int(row["win"]),
                    "f1": float(row["f1"]),
                    "turns": int(row["turns"]),
                    "questions": int(row["questions"]),
                    "llmCalls": int(row["llmCalls"]),
                    "revisions": int(row["revisions"]),
                    "provenanceCounts": json.loads(row["provenanceCounts"]),
                }
            )
    return rows


def report_table2(run_dir: str | Path) -> list[dict]:
    """The unified summary recomputed from per-game rows."""
    games = _read_games_csv(run_dir)
    cells: dict[tuple[str, float], list[dict]] = {}
    for row in games:
        cells.setdefault((row["level"], row["tau"]), []).append(row)
    report = []
    for (level, tau), rows in cells.items():
        n = len(rows)
        wins = sum(r["win"] for r in rows)
        turns = sum(r["turns"] for r in rows)
        ci_low, ci_high = wilson_ci(wins, n)
        report.append(
            {
                "level": level,
                "tau": tau,
                "games": n,
                "llmRate": sum(r["llmCalls"] for r in rows) / turns if turns else 0.0,
                "avgF1": sum(r["f1"] for r in rows) / n,
                "winRate": wins / n,
                "wilsonCI95": [ci_low, ci_high],
                "avgQuestions": sum(r["questions"] for r in rows) / n,
            }
        )
    return report


def report_table3(run_dir: str | Path) -> list[dict]:
    """The sweep table, read back from the artifact."""
    path = Path(run_dir) / "sweep.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run a threshold sweep first")
    rows = []
    with path.open(encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            rows.append(
                {
                    "scope": row["scope"],
                    "tau": float(row["tau"]),
                    "llmRate": float(row["llmRate"]),
                    "avgF1": float(row["avgF1"]),
                    "winRate": float(row["winRate"]),
                    "gateOpens": int(row["gateOpens"]),
                    "noLlmBasin": row["noLlmBasin"] == "True",
                }
            )
    return rows


def report_deltas(
    run_dir: str | Path,
    level_a: str = "L3on",
    level_b: str = "L3off",
    metric: str = "f1",
    tau: float | None = None,
) -> list[tuple[str, float]]:
    """Signed per-board paired deltas, sorted largest first."""
    if metric not in ("f1", "winRate"):
        raise ValueError(f"unknown metric {metric!r}; expected winRate or f1")
    key = "f1" if metric == "f1" else "win"
    games = _read_games_csv(run_dir)

    def per_board(level: str) -> dict[str, float]:
        rows = [
            r
            for r in games
            if r["level"] == level and (tau is None or r["tau"] == tau)
        ]
        boards: dict[str, list[float]] = {}
        for row in rows:
            boards.setdefault(row["board"], []).append(float(row[key]))
        return {b: sum(v) / len(v) for b, v in boards.items()}

    side_a = per_board(level_a)
    side_b = per_board(level_b)
    if not side_a or not side_b:
        raise SuiteMismatch(f"run has no games for {level_a!r} or {level_b!r}")
    if set(side_a) != set(side_b):
        raise SuiteMismatch("levels cover different board suites")
    deltas = {board: side_a[board] - side_b[board] for board in side_a}
    return sorted(deltas.items(), key=lambda kv: (-kv[1], kv[0]))


def report_trace(
    run_dir: str | Path, board: str, seed: int, level: str = "L3on"
) -> list[dict]:
    """The turn-indexed revision events of one game."""
    traces = Path(run_dir) / "traces"
    exact = traces / f"{level}_{board}_{seed}.jsonl"
    if exact.exists():
        paths = [exact]
    else:
        paths = sorted(traces.glob(f"{level}_*_{board}_{seed}.jsonl"))
    if not paths:
        raise FileNotFoundError(f"no trace for level={level} board={board} seed={seed}")
    entries = read_logs(paths[:1])
    return [
        {
            "turn": e.event["turn"],
            "revisionKind": e.event["revisionKind"],
            "provenance": e.event["provenance"],
            "deltaPhi": e.event["deltaPhi"],
        }
        for e in entries
        if e.event.get("phase") == "revise"
    ]


def render_trace_report(events: list[dict]) -> str:
    if not events:
        return "no revisions"
    return "\n".join(
        f"Turn {e['turn']}: {e['revisionKind']} ({e['provenance']})" for e in events
    )


def verify_rate_identities(run_dir: str | Path) -> None:
    """Check that summary rates are recomputable from the raw traces.

    llmRate must equal open gates per turn at the gated level (zero
    elsewhere) and avgQuestions must equal asked questions per game, both
    recomputed from JSONL alone.  Raises SuiteMismatch on any difference.
    """
    run_dir = Path(run_dir)
    summary = load_summary(run_dir)
    for row in summary.rows:
        paths = sorted((run_dir / "traces").glob(f"{row.label}_*.jsonl"))
        entries = read_logs(paths)
        acts = filter_events(entries, phase="act")
        turns = len(acts)
        questions = sum(1 for e in acts if e.event.get("kind") == "question")
        opens = sum(
            1
            for e in filter_events(entries, phase="reflect")
            if e.event.get("gateOpen")
        )
        llm_rate = (opens / turns if turns else 0.0) if row.level == "L4" else 0.0
        avg_questions = questions / len(paths) if paths else 0.0
        if len(paths) != row.games:
            raise SuiteMismatch(
                f"{row.label}: {len(paths)} traces for {row.games} games"
            )
        if llm_rate != row.llm_rate:
            raise SuiteMismatch(
                f"{row.label}: llmRate {row.llm_rate} vs {llm_rate} from traces"
            )
        if avg_questions != row.avg_questions:
            raise SuiteMismatch(
                f"{row.label}: avgQuestions {row.avg_questions} vs "
                f"{avg_questions} from traces"
            )


# ---------------------------------------------------------------------------
# belief-vs-enumeration oracle


def _random_history(
    config: BoardConfig,
    epsilon: float,
    rng: np.random.Generator,
    length: int,
    question_prob: float = 0.3,
) -> list:
    """A plausible observation history sampled from a hidden placement."""
    hidden = place_fleet(config, rng)
    cells = [(r, c) for r in range(config.height) for c in range(config.width)]
    history = []
    fired: set = set()
    for _ in range(length):
        if rng.random() < question_prob:
            top = int(rng.integers(0, config.height))
            left = int(rng.integers(0, config.width))
            height = int(rng.integers(1, config.height - top + 1))
            width = int(rng.integers(1, config.width - left + 1))
            question = Question(top=top, left=left, height=height, width=width)
            history.append(
                QuestionAnswer(question=question, value=answer_question(hidden, question))
            )
        else:
            open_cells = [c for c in cells if c not in fired]
            cell = open_cells[int(rng.integers(0, len(open_cells)))]
            fired.add(cell)
            history.append(resolve_shot(hidden, cell, epsilon, rng))
    return history


def oracle_check(
    width: int = 4,
    height: int = 4,
    fleet: tuple[int, ...] = (3, 2),
    epsilons: tuple[float, ...] = (0.0, 0.1),
    histories: int = 10,
    max_length: int = 6,
    particles: int = 500,
    sweeps: int = 20,
    master_seed: int = 9,
) -> dict:
    """Compare the particle posterior against exhaustive enumeration.

    Runs `histories` random observation histories per noise setting and
    reports the worst L-infinity gap between sampled and exact marginals.
    """
    results = []
    worst = 0.0
    for eps_index, epsilon in enumerate(epsilons):
        config = BoardConfig(
            width=width,
            height=height,
            fleet=tuple(fleet),
            shot_budget=width * height,
            question_budget=8,
            noise_epsilon=epsilon,
        )
        for index in range(histories):
            history_rng = np.random.default_rng(
                np.random.SeedSequence(master_seed, spawn_key=(eps_index, index, 0))
            )
            length = int(history_rng.integers(0, max_length + 1))
            history = _random_history(config, epsilon, history_rng, length)
            posterior = Posterior.initialize(
                config,
                n_particles=particles,
                rng=np.random.default_rng(
                    np.random.SeedSequence(master_seed, spawn_key=(eps_index, index, 1))
                ),
            )
            for obs in history:
                posterior.update(obs, sweeps=sweeps)
            exact = exact_posterior(config, history, epsilon)
            gap = float(np.max(np.abs(posterior.marginals - exact)))
            worst = max(worst, gap)
            results.append(
                {
                    "epsilon": epsilon,
                    "history": index,
                    "length": length,
                    "linf": gap,
                }
            )
    return {"worstLinf": worst, "histories": results}
