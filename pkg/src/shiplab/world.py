"""Ground-truth game engine for noisy collaborative ship hunting.

The engine owns everything the agent cannot see: the hidden fleet placement,
the noisy shot channel, truthful region answers, termination, and scoring.
All randomness flows through explicitly passed numpy generators so that a
(config, seed) pair fully determines a game.

Conventions: cells are (row, col) tuples, row-major from the top-left;
orientations are "h" (cells extend along the row) and "v" (down the column).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

Cell = tuple[int, int]


class NoLegalPlacement(Exception):
    """The fleet cannot be placed on the configured board."""


class CellOutOfBounds(Exception):
    pass


class CellAlreadyFired(Exception):
    pass


class GameNotFinished(Exception):
    """Scoring was requested before the game reached a terminal state."""


@dataclass(frozen=True)
class BoardConfig:
    """Static rules of one game.

    The defaults are the canonical setup: an 8x8 board, a 14-cell fleet of
    lengths 5/4/3/2, 40 shots, 15 questions, and a 0.1 chance that a shot
    return is flipped. Question answers are always truthful; noise applies
    to shot returns only.
    """

    width: int = 8
    height: int = 8
    fleet: tuple[int, ...] = (5, 4, 3, 2)
    shot_budget: int = 40
    question_budget: int = 15
    noise_epsilon: float = 0.1

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("board dimensions must be positive")
        if not self.fleet:
            raise ValueError("fleet must contain at least one ship")
        if any(length < 1 for length in self.fleet):
            raise ValueError("ship lengths must be positive")
        # a fleet that cannot fit surfaces as NoLegalPlacement at placement time
        if not 0.0 <= self.noise_epsilon < 0.5:
            raise ValueError("noise epsilon must lie in [0, 0.5)")

    @property
    def cell_count(self) -> int:
        return self.width * self.height

    def cell_index(self, cell: Cell) -> int:
        return cell[0] * self.width + cell[1]

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width


@dataclass(frozen=True)
class ShipPlacement:
    """One ship: origin cell, orientation, and length."""

    row: int
    col: int
    orient: str  # "h" or "v"
    length: int

    def cells(self) -> tuple[Cell, ...]:
        if self.orient == "h":
            return tuple((self.row, self.col + i) for i in range(self.length))
        return tuple((self.row + i, self.col) for i in range(self.length))


@dataclass(frozen=True)
class Placement:
    """A full fleet configuration; the hidden state the posterior targets."""

    ships: tuple[ShipPlacement, ...]

    @property
    def occupied(self) -> frozenset[Cell]:
        return frozenset(c for s in self.ships for c in s.cells())


@dataclass(frozen=True)
class Question:
    """An axis-aligned rectangular region query.

    kind "count" asks how many ship cells the region holds; kind "any" asks
    whether it holds at least one.
    """

    top: int
    left: int
    height: int
    width: int
    kind: str = "count"

    @property
    def area(self) -> int:
        return self.height * self.width

    def cells(self) -> Iterable[Cell]:
        for r in range(self.top, self.top + self.height):
            for c in range(self.left, self.left + self.width):
                yield (r, c)

    def to_dict(self) -> dict:
        return {
            "top": self.top,
            "left": self.left,
            "height": self.height,
            "width": self.width,
            "kind": self.kind,
        }


@dataclass(frozen=True)
class ShotReturn:
    cell: Cell
    observed_hit: bool


@dataclass(frozen=True)
class QuestionAnswer:
    question: Question
    value: int | bool


Observation = ShotReturn | QuestionAnswer


def ship_positions(config: BoardConfig, length: int) -> list[ShipPlacement]:
    """All in-bounds single-ship placements, ignoring the rest of the fleet.

    Length-1 ships are canonicalized to the horizontal orientation so each
    geometric position appears exactly once.
    """
    out: list[ShipPlacement] = []
    for row in range(config.height):
        for col in range(config.width - length + 1):
            out.append(ShipPlacement(row, col, "h", length))
    if length > 1:
        for row in range(config.height - length + 1):
            for col in range(config.width):
                out.append(ShipPlacement(row, col, "v", length))
    return out


def _enumerate_fleets(
    config: BoardConfig, tables: list[list[ShipPlacement]], limit: int | None = None
) -> list[tuple[ShipPlacement, ...]]:
    """Exhaustively enumerate disjoint joint placements (small boards only)."""
    masks = [
        [sum(1 << config.cell_index(c) for c in p.cells()) for p in table]
        for table in tables
    ]
    out: list[tuple[ShipPlacement, ...]] = []

    def recurse(i: int, used: int, chosen: list[ShipPlacement]) -> None:
        if limit is not None and len(out) >= limit:
            return
        if i == len(tables):
            out.append(tuple(chosen))
            return
        for pos, mask in zip(tables[i], masks[i]):
            if used & mask:
                continue
            chosen.append(pos)
            recurse(i + 1, used | mask, chosen)
            chosen.pop()

    recurse(0, 0, [])
    return out


def place_fleet(config: BoardConfig, rng: np.random.Generator) -> Placement:
    """Draw a uniformly random legal placement of the whole fleet.

    Rejection sampling over independent per-ship draws yields the uniform
    joint distribution; a bounded attempt budget falls back to exhaustive
    enumeration so crowded boards still terminate.
    """
    tables = [ship_positions(config, length) for length in config.fleet]
    if any(not t for t in tables):
        raise NoLegalPlacement("a ship is longer than both board dimensions")
    masks = [
        [frozenset(p.cells()) for p in table] for table in tables
    ]
    for _ in range(1000):
        used: set[Cell] = set()
        chosen: list[ShipPlacement] = []
        ok = True
        for table, cell_sets in zip(tables, masks):
            idx = int(rng.integers(0, len(table)))
            if used & cell_sets[idx]:
                ok = False
                break
            used |= cell_sets[idx]
            chosen.append(table[idx])
        if ok:
            return Placement(tuple(chosen))
    # dense board: enumerate the legal joint placements and pick uniformly
    fleets = _enumerate_fleets(config, tables)
    if not fleets:
        raise NoLegalPlacement("no disjoint arrangement of the fleet exists")
    return Placement(fleets[int(rng.integers(0, len(fleets)))])


def resolve_shot(
    placement: Placement, cell: Cell, epsilon: float, rng: np.random.Generator
) -> ShotReturn:
    """Resolve one shot through the noisy channel.

    The true outcome is whether the cell is occupied; the observed return is
    flipped with probability epsilon. Ground-truth bookkeeping (destruction,
    termination) is the Game's job and ignores the observed value.
    """
    true_hit = cell in placement.occupied
    observed = true_hit if rng.random() >= epsilon else not true_hit
    return ShotReturn(cell=cell, observed_hit=observed)


def answer_question(placement: Placement, q: Question) -> int | bool:
    """Truthful region answer: a count, or whether any ship cell is inside."""
    inside = sum(1 for c in q.cells() if c in placement.occupied)
    if q.kind == "count":
        return inside
    return inside > 0


class Game:
    """One running game: hidden placement plus visible state.

    The engine records true hits regardless of the observed return, so the
    win condition (every ship cell fired upon) is a fact about actions, not
    about observation luck.
    """

    def __init__(self, config: BoardConfig, placement: Placement) -> None:
        self.config = config
        self.placement = placement
        self.turn = 0
        self.shots_remaining = config.shot_budget
        self.questions_remaining = config.question_budget
        self.fired: list[tuple[Cell, ShotReturn]] = []
        self.fired_set: set[Cell] = set()
        self.asked: list[tuple[Question, int | bool]] = []
        self.true_hits: list[tuple[int, Cell]] = []  # (turn, cell), ground truth
        self.terminal: str | None = None

    def _check_cell(self, cell: Cell) -> None:
        if not self.config.in_bounds(cell):
            raise CellOutOfBounds(str(cell))
        if cell in self.fired_set:
            raise CellAlreadyFired(str(cell))

    def fire(self, cell: Cell, rng: np.random.Generator) -> ShotReturn:
        if self.terminal:
            raise ValueError("game is over")
        self._check_cell(cell)
        if self.shots_remaining <= 0:
            raise CellAlreadyFired("no shots remaining")
        self.turn += 1
        ret = resolve_shot(self.placement, cell, self.config.noise_epsilon, rng)
        self.fired.append((cell, ret))
        self.fired_set.add(cell)
        self.shots_remaining -= 1
        if cell in self.placement.occupied:
            self.true_hits.append((self.turn, cell))
        if self.placement.occupied <= self.fired_set:
            self.terminal = "win"
        elif self.shots_remaining == 0:
            self.terminal = "loss"
        return ret

    def ask(self, q: Question) -> int | bool:
        if self.terminal:
            raise ValueError("game is over")
        if self.questions_remaining <= 0:
            raise ValueError("no questions remaining")
        for c in q.cells():
            if not self.config.in_bounds(c):
                raise CellOutOfBounds(str(c))
        self.turn += 1
        value = answer_question(self.placement, q)
        self.asked.append((q, value))
        self.questions_remaining -= 1
        return value

    def recent_true_hits(self, turns_back: int = 5) -> list[Cell]:
        """True-hit cells from the last `turns_back` turns (engine instrument)."""
        cutoff = self.turn - turns_back
        return [cell for (t, cell) in self.true_hits if t > cutoff]


def score_f1(game: Game, placement: Placement) -> float:
    """Terminal score: F1 of the fired-cell set against the true ship cells."""
    if game.terminal is None:
        raise GameNotFinished("cannot score a running game")
    true_hits = sum(1 for c in game.fired_set if c in placement.occupied)
    if true_hits == 0:
        return 0.0
    precision = true_hits / len(game.fired_set)
    recall = true_hits / sum(len(s.cells()) for s in placement.ships)
    return 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# board-suite files


def _placement_to_ships(placement: Placement) -> list[dict]:
    return [
        {"row": s.row, "col": s.col, "orient": s.orient, "len": s.length}
        for s in placement.ships
    ]


def _ships_to_placement(ships: list[dict]) -> Placement:
    return Placement(
        tuple(
            ShipPlacement(s["row"], s["col"], s["orient"], s["len"]) for s in ships
        )
    )


def save_board_suite(boards: list[dict], path: str | Path) -> None:
    """Write a board suite as canonical JSON (stable bytes for fixed input)."""
    payload = []
    for b in boards:
        entry: dict = {"id": b["id"]}
        if "placement" in b and b["placement"] is not None:
            entry["width"] = b.get("width", 8)
            entry["height"] = b.get("height", 8)
            entry["ships"] = _placement_to_ships(b["placement"])
        else:
            entry["seed"] = b["seed"]
        payload.append(entry)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_board_suite(path: str | Path, config: BoardConfig | None = None) -> list[dict]:
    """Load a board suite; {id, seed} entries are generated with `config`."""
    raw = json.loads(Path(path).read_text())
    boards: list[dict] = []
    for entry in raw:
        if "ships" in entry:
            boards.append(
                {
                    "id": entry["id"],
                    "width": entry["width"],
                    "height": entry["height"],
                    "placement": _ships_to_placement(entry["ships"]),
                }
            )
        else:
            cfg = config or BoardConfig()
            gen = np.random.default_rng(np.random.SeedSequence(entry["seed"]))
            boards.append(
                {
                    "id": entry["id"],
                    "width": cfg.width,
                    "height": cfg.height,
                    "placement": place_fleet(cfg, gen),
                    "seed": entry["seed"],
                }
            )
    return boards
