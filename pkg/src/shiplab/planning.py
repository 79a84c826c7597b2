"""Candidate generation, one-step outcome previews, and action selection.

One planning turn produces a small slate of candidate actions (shots at
high-marginal cells plus a few region questions when the budget bucket
allows), scores each candidate by its expected one-step collapse of the
placement posterior, and picks the best under a question-versus-shot margin
rule. The same module houses the baseline policy that just fires at the
highest-marginal cell and never asks.

All behavior that revisions may change is collected in ``PolicyParameters``:
the question margin, the exploit threshold that suppresses questions when one
cell is near-certain, and three shaping knobs (ROI focus, closeout bias,
re-probe radius) that widen or bias the candidate slate. With every knob at
its default the slate is exactly the plain top-marginal slate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .belief import Posterior
from .world import Cell, Question


class NoCandidateActions(Exception):
    """Candidate enumeration was asked for on a finished board."""


@dataclass(frozen=True)
class Shoot:
    cell: Cell


@dataclass(frozen=True)
class Ask:
    question: Question


CandidateAction = Shoot | Ask


@dataclass(frozen=True)
class Preview:
    """One scored candidate: expected collapse, and hit probability for shots."""

    candidate: CandidateAction
    expected_collapse: float
    expected_hit_prob: float | None


PARAMETER_BOUNDS: dict[str, tuple[float, float]] = {
    "questionMargin": (-0.5, 0.5),
    "exploitThreshold": (0.0, 1.0),
    "roiFocusFactor": (1.0, 4.0),
    "closeoutBias": (0.0, 0.5),
    "reprobeRadius": (0.0, 4.0),
}


class ParameterOutOfBounds(ValueError):
    """A policy-parameter patch names an unknown key or leaves its bounds."""


@dataclass(frozen=True)
class PolicyParameters:
    question_margin: float = 0.0
    exploit_threshold: float = 0.65
    roi_focus_factor: float = 1.0
    closeout_bias: float = 0.0
    reprobe_radius: float = 0.0

    def as_map(self) -> dict[str, float]:
        return {
            "questionMargin": self.question_margin,
            "exploitThreshold": self.exploit_threshold,
            "roiFocusFactor": self.roi_focus_factor,
            "closeoutBias": self.closeout_bias,
            "reprobeRadius": self.reprobe_radius,
        }

    @classmethod
    def from_map(cls, values: Mapping[str, float]) -> "PolicyParameters":
        return cls().with_patch(values)

    def with_patch(self, patch: Mapping[str, float]) -> "PolicyParameters":
        """Apply a partial parameter patch, validating names and bounds."""
        updates = {}
        for key, value in patch.items():
            if key not in PARAMETER_BOUNDS:
                raise ParameterOutOfBounds(f"unknown parameter {key!r}")
            if type(value) is bool or not isinstance(value, (int, float)):
                raise ParameterOutOfBounds(f"parameter {key!r} must be a number")
            lo, hi = PARAMETER_BOUNDS[key]
            value = float(value)
            if not (lo <= value <= hi):
                raise ParameterOutOfBounds(
                    f"parameter {key!r}={value} outside [{lo}, {hi}]"
                )
            updates[_FIELD_BY_NAME[key]] = value
        return replace(self, **updates)


_FIELD_BY_NAME = {
    "questionMargin": "question_margin",
    "exploitThreshold": "exploit_threshold",
    "roiFocusFactor": "roi_focus_factor",
    "closeoutBias": "closeout_bias",
    "reprobeRadius": "reprobe_radius",
}


@dataclass(frozen=True)
class QuestionBucketPolicy:
    """Turn-bucketed question quotas, optionally with an exploit skip.

    ``boundaries[i]`` is the last turn (1-based, inclusive) of bucket ``i``;
    the final bucket is open-ended, so there is one more quota than boundary.
    When ``exploit_skip`` is set, question candidates are suppressed on turns
    where some unfired cell's marginal exceeds the exploit threshold (the
    threshold value itself lives in ``PolicyParameters`` so revisions can
    move it).
    """

    boundaries: tuple[int, ...]
    quotas: tuple[int, ...]
    exploit_skip: bool = False

    def __post_init__(self) -> None:
        if len(self.quotas) != len(self.boundaries) + 1:
            raise ValueError("need exactly one more quota than boundary")
        if any(b <= 0 for b in self.boundaries):
            raise ValueError("boundaries are 1-based turn numbers")
        if list(self.boundaries) != sorted(set(self.boundaries)):
            raise ValueError("boundaries must be strictly increasing")
        if any(q < 0 for q in self.quotas):
            raise ValueError("quotas must be nonnegative")

    @property
    def n_buckets(self) -> int:
        return len(self.quotas)

    def bucket_index(self, turn: int) -> int:
        for i, bound in enumerate(self.boundaries):
            if turn <= bound:
                return i
        return len(self.boundaries)

    def to_dict(self) -> dict:
        return {
            "boundaries": list(self.boundaries),
            "quotas": list(self.quotas),
            "exploitSkip": self.exploit_skip,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "QuestionBucketPolicy":
        return cls(
            boundaries=tuple(data["boundaries"]),
            quotas=tuple(data["quotas"]),
            exploit_skip=bool(data.get("exploitSkip", False)),
        )


def two_bucket_policy() -> QuestionBucketPolicy:
    """Early-heavy question budget: 10 questions through turn 12, then 5."""
    return QuestionBucketPolicy(boundaries=(12,), quotas=(10, 5))


def three_bucket_policy() -> QuestionBucketPolicy:
    """Tighter tapering budget (4/3/1) with the exploit skip enabled."""
    return QuestionBucketPolicy(
        boundaries=(8, 20), quotas=(4, 3, 1), exploit_skip=True
    )


@dataclass
class BucketState:
    """Per-game count of questions asked in each bucket."""

    asked: list[int]

    @classmethod
    def for_policy(cls, policy: QuestionBucketPolicy) -> "BucketState":
        return cls(asked=[0] * policy.n_buckets)

    def quota_left(self, policy: QuestionBucketPolicy, turn: int) -> int:
        i = policy.bucket_index(turn)
        return max(0, policy.quotas[i] - self.asked[i])

    def record_question(self, policy: QuestionBucketPolicy, turn: int) -> None:
        self.asked[policy.bucket_index(turn)] += 1


# ---------------------------------------------------------------------------
# candidate generation


def _near_any(cell: Cell, anchors: Sequence[Cell], radius: int = 2) -> bool:
    r, c = cell
    for ar, ac in anchors:
        if max(abs(r - ar), abs(c - ac)) <= radius:
            return True
    return False


def unfired_cells(posterior: Posterior, fired: Iterable[Cell]) -> list[Cell]:
    fired_set = set(fired)
    config = posterior.config
    return [
        (r, c)
        for r in range(config.height)
        for c in range(config.width)
        if (r, c) not in fired_set
    ]


def max_unfired_marginal(posterior: Posterior, fired: Iterable[Cell]) -> float:
    cells = unfired_cells(posterior, fired)
    if not cells:
        return 0.0
    return max(posterior.marginal(cell) for cell in cells)


def _ranked_pool(
    posterior: Posterior,
    cells: list[Cell],
    params: PolicyParameters,
    recent_hits: Sequence[Cell],
) -> list[tuple[Cell, float, float]]:
    """Cells sorted by biased score desc, ties lowest (row, col).

    Returns (cell, score, marginal) triples; the score adds the flat closeout
    bonus to cells near recent confirmed hits, so they can outrank larger
    marginals elsewhere and enter the slate.
    """
    bias = params.closeout_bias
    rows = []
    for cell in cells:
        marginal = posterior.marginal(cell)
        score = marginal
        if bias > 0.0 and recent_hits and _near_any(cell, recent_hits):
            score = marginal + bias
        rows.append((cell, score, marginal))
    rows.sort(key=lambda row: (-row[1], row[0]))
    return rows


def _strided_indices(pool_size: int, count: int) -> list[int]:
    if count <= 1 or pool_size <= 1:
        return [0]
    picks = {round(i * (pool_size - 1) / (count - 1)) for i in range(count)}
    return sorted(picks)


def candidate_cells(
    posterior: Posterior,
    fired: Iterable[Cell],
    params: PolicyParameters,
    recent_hits: Sequence[Cell] = (),
    count: int = 6,
) -> list[Cell]:
    """The shot slate: top-scored unfired cells, optionally ROI-spread.

    With ``roi_focus_factor`` f > 1, the slate is drawn by an even stride
    across the smallest score-ranked prefix holding 1/f of the unfired
    marginal mass, instead of just the top ``count`` cells: the slate then
    spans the concentrated region rather than clustering on near-duplicate
    neighbours. f = 1 reduces to the plain top-``count``.
    """
    pool = _ranked_pool(posterior, unfired_cells(posterior, fired), params, recent_hits)
    if len(pool) <= count:
        return [cell for cell, _, _ in pool]
    if params.roi_focus_factor <= 1.0:
        return [cell for cell, _, _ in pool[:count]]
    total = sum(marginal for _, _, marginal in pool)
    if total <= 0.0:
        return [cell for cell, _, _ in pool[:count]]
    target = total / params.roi_focus_factor
    running = 0.0
    prefix = len(pool)
    for i, (_, _, marginal) in enumerate(pool):
        running += marginal
        if running >= target:
            prefix = i + 1
            break
    chosen = _strided_indices(prefix, count)
    for i in range(len(pool)):
        if len(chosen) >= count:
            break
        if i not in chosen:
            chosen.append(i)
    return [pool[i][0] for i in sorted(chosen[:count])]


def generate_questions(
    posterior: Posterior,
    fired: Iterable[Cell],
    params: PolicyParameters,
    rng: np.random.Generator,
    slots: int = 3,
    attempts: int = 32,
) -> list[Question]:
    """Sample informative rectangular count questions.

    A rectangle qualifies when the posterior mass inside is strictly between
    5% and 95% of its area, so both answers-all-empty and answers-all-full
    regions are rejected. With a positive re-probe radius the sampler first
    insists the rectangle's centre lie near an already-fired cell (covered
    ground worth re-examining under a noisy channel) and falls back to
    unconstrained sampling only when that fails.
    """
    config = posterior.config
    marg2d = np.asarray(posterior.marginals, dtype=np.float64).reshape(
        config.height, config.width
    )
    fired_list = list(fired)
    chosen: list[Question] = []
    seen: set[tuple[int, int, int, int]] = set()
    max_h = min(config.height, 16)
    max_w = min(config.width, 16)

    def near_fired(top: int, left: int, h: int, w: int) -> bool:
        center_r = top + (h - 1) / 2.0
        center_c = left + (w - 1) / 2.0
        radius = params.reprobe_radius
        for fr, fc in fired_list:
            if max(abs(center_r - fr), abs(center_c - fc)) <= radius:
                return True
        return False

    def try_draw(constrained: bool) -> Question | None:
        h = int(rng.integers(1, max_h + 1))
        w = int(rng.integers(1, max_w + 1))
        if not 4 <= h * w <= 16:
            return None
        top = int(rng.integers(0, config.height - h + 1))
        left = int(rng.integers(0, config.width - w + 1))
        if constrained and not near_fired(top, left, h, w):
            return None
        key = (top, left, h, w)
        if key in seen:
            return None
        mass = float(marg2d[top : top + h, left : left + w].sum())
        area = h * w
        if not 0.05 * area < mass < 0.95 * area:
            return None
        return Question(top=top, left=left, height=h, width=w, kind="count")

    for _ in range(slots):
        found = None
        constrain = params.reprobe_radius > 0.0 and bool(fired_list)
        if constrain:
            for _ in range(attempts):
                found = try_draw(constrained=True)
                if found is not None:
                    break
        if found is None:
            for _ in range(attempts):
                found = try_draw(constrained=False)
                if found is not None:
                    break
        if found is None:
            continue
        seen.add((found.top, found.left, found.height, found.width))
        chosen.append(found)
    return chosen


def enumerate_candidates(
    posterior: Posterior,
    game,
    policy: QuestionBucketPolicy,
    bucket_state: BucketState,
    params: PolicyParameters,
    rng: np.random.Generator,
    slate_size: int = 9,
    question_slots: int = 3,
) -> list[CandidateAction]:
    """The turn's candidate slate: shots first, then questions.

    Exactly ``slate_size`` candidates unless fewer unfired cells remain (then
    one shot per remaining cell and nothing else). Question slots require
    budget left, bucket quota left, and no exploit skip; any slot the
    generator cannot fill is padded with the next-best shot.
    """
    remaining = unfired_cells(posterior, game.fired_set)
    if not remaining:
        raise NoCandidateActions("every cell has been fired upon")
    recent_hits = game.recent_true_hits()
    if len(remaining) < slate_size:
        cells = candidate_cells(
            posterior, game.fired_set, params, recent_hits, count=len(remaining)
        )
        return [Shoot(cell) for cell in cells]

    turn = game.turn + 1
    questions: list[Question] = []
    if (
        question_slots > 0
        and game.questions_remaining > 0
        and bucket_state.quota_left(policy, turn) > 0
        and not (
            policy.exploit_skip
            and max_unfired_marginal(posterior, game.fired_set)
            > params.exploit_threshold
        )
    ):
        questions = generate_questions(
            posterior, game.fired_set, params, rng, slots=question_slots
        )
    cells = candidate_cells(
        posterior,
        game.fired_set,
        params,
        recent_hits,
        count=slate_size - len(questions),
    )
    slate: list[CandidateAction] = [Shoot(cell) for cell in cells]
    slate.extend(Ask(q) for q in questions)
    return slate


# ---------------------------------------------------------------------------
# previews and selection


def sim_next(
    posterior: Posterior,
    candidate: CandidateAction,
    epsilon: float | None = None,
) -> Preview:
    """Score one candidate by its expected one-step posterior collapse.

    The hypothetical updates are exact predictive reweightings of the live
    particle set, so the posterior is never mutated and no randomness is
    consumed. ``epsilon`` defaults to the posterior's own channel noise.
    """
    if epsilon is not None and epsilon != posterior.epsilon:
        raise ValueError("preview noise must match the posterior's channel")
    if isinstance(candidate, Shoot):
        collapse, hit_prob = posterior.preview_shot(candidate.cell)
        return Preview(
            candidate=candidate,
            expected_collapse=collapse,
            expected_hit_prob=hit_prob,
        )
    collapse = posterior.preview_question(candidate.question)
    return Preview(candidate=candidate, expected_collapse=collapse, expected_hit_prob=None)


def preview_all(
    posterior: Posterior, candidates: Sequence[CandidateAction]
) -> list[Preview]:
    return [sim_next(posterior, candidate) for candidate in candidates]


def shot_score(
    preview: Preview, params: PolicyParameters, recent_hits: Sequence[Cell] = ()
) -> float:
    """A shot's selection score: collapse plus the closeout bonus."""
    assert isinstance(preview.candidate, Shoot)
    score = preview.expected_collapse
    if (
        params.closeout_bias > 0.0
        and recent_hits
        and _near_any(preview.candidate.cell, recent_hits)
    ):
        score += params.closeout_bias * (preview.expected_hit_prob or 0.0)
    return score


def _question_sort_key(preview: Preview) -> tuple:
    q = preview.candidate.question
    return (-preview.expected_collapse, q.top, q.left, q.height, q.width)


def best_shot(
    previews: Sequence[Preview],
    params: PolicyParameters,
    recent_hits: Sequence[Cell] = (),
) -> tuple[Preview, float] | None:
    """The top shot by score, then hit probability, then lowest (row, col).

    The hit-probability key is what lets the collapse-driven policy degrade
    gracefully to greedy targeting: once the posterior is pinned down, every
    candidate's expected collapse is zero and the remaining ship cells must
    still be swept in preference to known-empty ones.
    """
    best: tuple[Preview, float] | None = None
    best_key: tuple[float, float] | None = None
    for preview in previews:
        if not isinstance(preview.candidate, Shoot):
            continue
        score = shot_score(preview, params, recent_hits)
        key = (score, preview.expected_hit_prob or 0.0)
        if best is None or key > best_key or (
            key == best_key and preview.candidate.cell < best[0].candidate.cell
        ):
            best = (preview, score)
            best_key = key
    return best


def best_question(previews: Sequence[Preview]) -> Preview | None:
    questions = [p for p in previews if isinstance(p.candidate, Ask)]
    if not questions:
        return None
    return min(questions, key=_question_sort_key)


def select_action(
    previews: Sequence[Preview],
    params: PolicyParameters,
    quota_open: bool = True,
    recent_hits: Sequence[Cell] = (),
) -> CandidateAction:
    """Pick the slate's best action under the question-margin rule.

    The best question wins iff question budget is open and its expected
    collapse is at least the best shot's score plus the question margin;
    exact ties therefore go to the question. Shot score ties break toward
    the higher hit probability, then the lowest (row, col) cell.
    """
    if not previews:
        raise NoCandidateActions("no previews to select from")
    shot = best_shot(previews, params, recent_hits)
    question = best_question(previews) if quota_open else None
    if shot is None:
        if question is None:
            raise NoCandidateActions("no shot or question candidates")
        return question.candidate
    if question is not None and (
        question.expected_collapse >= shot[1] + params.question_margin
    ):
        return question.candidate
    return shot[0].candidate


def l1_select(posterior: Posterior, fired: Iterable[Cell]) -> Shoot:
    """The baseline policy: fire at the highest-marginal unfired cell."""
    cells = unfired_cells(posterior, fired)
    if not cells:
        raise NoCandidateActions("every cell has been fired upon")
    best_cell = min(cells, key=lambda cell: (-posterior.marginal(cell), cell))
    return Shoot(best_cell)
