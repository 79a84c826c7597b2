"""Per-turn error signals, model confidence, the revision gate, and presets.

This layer watches how well the belief state predicts shot outcomes, keeps
exponential moving averages of two error signals, and decides when the
decision policy has earned a revision.  It never touches the posterior or
the game; everything here is a pure function from signals to signals.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .planning import (
    BucketState,
    PolicyParameters,
    QuestionBucketPolicy,
    enumerate_candidates,
    preview_all,
    select_action,
    unfired_cells,
)
from .world import Game

CAL_WINDOW_CAPACITY = 10
DELTA_MIN_DEFAULT = 0.01
STREAK_THRESHOLD = 2

PRESET_PATCHES: dict[str, dict[str, float]] = {
    "coarse_roi_collapse": {"roiFocusFactor": 2.0},
    "cluster_closeout_bias": {"closeoutBias": 0.3},
    "late_diffuse_reprobe": {"reprobeRadius": 2.0, "questionMargin": -0.1},
}


@dataclass(frozen=True)
class ReflectionSignals:
    """Running error estimates for one game.

    The EMAs start at 0.5 (maximal ignorance about the model's quality), so
    a fresh game sits at confidence 0.5 and the low-confidence streak can
    begin accumulating from the first turn.  ``cal_window`` holds the last
    ``CAL_WINDOW_CAPACITY`` (predicted probability, outcome) pairs from shot
    turns; question turns leave it untouched.
    """

    e_pred: float = 0.0
    e_cal: float = 0.0
    e_pred_ema: float = 0.5
    e_cal_ema: float = 0.5
    alpha: float = 0.25
    low_confidence_streak: int = 0
    cooldown_remaining: int = 0
    cal_window: tuple[tuple[float, int], ...] = ()


def _window_gap(window: tuple[tuple[float, int], ...]) -> float:
    """Absolute gap between mean prediction and mean outcome, 0 when empty."""
    if not window:
        return 0.0
    mean_pred = sum(pair[0] for pair in window) / len(window)
    mean_outcome = sum(pair[1] for pair in window) / len(window)
    return abs(mean_pred - mean_outcome)


def _ema(old: float, value: float, alpha: float) -> float:
    return alpha * value + (1.0 - alpha) * old


def update_signals(
    signals: ReflectionSignals, predicted_prob: float, observed_outcome: int
) -> ReflectionSignals:
    """Fold one resolved shot into the error signals.

    ``predicted_prob`` is the probability the policy assigned to a hit just
    before firing; ``observed_outcome`` is the (possibly noise-flipped)
    return actually seen.  Both error signals and both EMAs advance.
    """
    if not 0.0 <= predicted_prob <= 1.0:
        raise ValueError(f"predicted_prob must be in [0, 1], got {predicted_prob}")
    outcome = int(observed_outcome)
    if outcome not in (0, 1):
        raise ValueError(f"observed outcome must be 0 or 1, got {observed_outcome}")
    window = (signals.cal_window + ((float(predicted_prob), outcome),))[
        -CAL_WINDOW_CAPACITY:
    ]
    e_pred = abs(predicted_prob - outcome)
    e_cal = _window_gap(window)
    return dataclasses.replace(
        signals,
        e_pred=e_pred,
        e_cal=e_cal,
        e_pred_ema=_ema(signals.e_pred_ema, e_pred, signals.alpha),
        e_cal_ema=_ema(signals.e_cal_ema, e_cal, signals.alpha),
        cal_window=window,
    )


def update_signals_question(signals: ReflectionSignals) -> ReflectionSignals:
    """Advance the calibration side only, for turns that asked a question.

    No shot resolved, so there is no new prediction to score: the window and
    the predictive EMA stay put, while the calibration gap is re-read from
    the existing window and its EMA advances.
    """
    e_cal = _window_gap(signals.cal_window)
    return dataclasses.replace(
        signals,
        e_cal=e_cal,
        e_cal_ema=_ema(signals.e_cal_ema, e_cal, signals.alpha),
    )


def confidence(signals: ReflectionSignals) -> float:
    return 1.0 - (signals.e_pred_ema + signals.e_cal_ema) / 2.0


def update_streak(signals: ReflectionSignals, tau: float) -> ReflectionSignals:
    """Grow the low-confidence streak below tau, reset it at or above."""
    if confidence(signals) < tau:
        streak = signals.low_confidence_streak + 1
    else:
        streak = 0
    return dataclasses.replace(signals, low_confidence_streak=streak)


def tick_cooldown(signals: ReflectionSignals) -> ReflectionSignals:
    return dataclasses.replace(
        signals, cooldown_remaining=max(0, signals.cooldown_remaining - 1)
    )


def start_cooldown(signals: ReflectionSignals, turns: int) -> ReflectionSignals:
    return dataclasses.replace(signals, cooldown_remaining=int(turns))


def gate_open(
    signals: ReflectionSignals,
    tau: float,
    delta_phi: float,
    delta_min: float = DELTA_MIN_DEFAULT,
    streak_threshold: int = STREAK_THRESHOLD,
) -> bool:
    """The four-condition revision gate.

    Open iff confidence is below tau, the low-confidence streak is
    sustained, no cooldown is pending, and the previewed revision actually
    helps by at least ``delta_min``.
    """
    return (
        confidence(signals) < tau
        and signals.low_confidence_streak >= streak_threshold
        and signals.cooldown_remaining == 0
        and delta_phi >= delta_min
    )


def _clustered(hits) -> bool:
    """True when some pair of cells sits within Chebyshev distance 2."""
    for i in range(len(hits)):
        for j in range(i + 1, len(hits)):
            if (
                max(abs(hits[i][0] - hits[j][0]), abs(hits[i][1] - hits[j][1]))
                <= 2
            ):
                return True
    return False


def select_preset(game: Game, posterior, initial_entropy: float) -> str | None:
    """Pick a symbolic revision preset for the current game state.

    Triggers are checked in the order the library lists them; the first
    match wins.  Returns None when no preset applies (the gate then reports
    an empty revision kind).
    """
    entropy = posterior.entropy()
    if game.turn <= 4 and entropy > 0.8 * initial_entropy:
        return "coarse_roi_collapse"
    if _clustered(game.recent_true_hits(turns_back=5)):
        return "cluster_closeout_bias"
    if game.shots_remaining <= 10 and entropy > 0.5 * initial_entropy:
        return "late_diffuse_reprobe"
    return None


def _policy_phi(
    posterior,
    game: Game,
    policy: QuestionBucketPolicy,
    bucket_state: BucketState,
    params: PolicyParameters,
    rng: np.random.Generator,
) -> float:
    """Expected collapse of the action the policy would pick next turn."""
    slate = enumerate_candidates(posterior, game, policy, bucket_state, params, rng)
    previews = preview_all(posterior, slate)
    quota_open = (
        game.questions_remaining > 0
        and bucket_state.quota_left(policy, game.turn + 1) > 0
    )
    chosen = select_action(
        previews, params, quota_open=quota_open, recent_hits=game.recent_true_hits()
    )
    for preview in previews:
        if preview.candidate == chosen:
            return preview.expected_collapse
    raise RuntimeError("selected action missing from its own preview slate")


def preview_revision(
    posterior,
    game: Game,
    policy: QuestionBucketPolicy,
    bucket_state: BucketState,
    current_params: PolicyParameters,
    candidate_params: PolicyParameters,
    seed,
) -> float:
    """Counterfactual preview: how much more would the candidate collapse.

    Both parameter sets plan the same upcoming turn from the same posterior,
    each with its own freshly seeded generator built from ``seed`` (an int
    or a SeedSequence), so the comparison is deterministic and any
    difference is attributable to the parameters alone.  Nothing observable
    happens: the posterior and game are only read.
    """
    if not unfired_cells(posterior, game.fired_set):
        return 0.0
    phi_current = _policy_phi(
        posterior, game, policy, bucket_state, current_params,
        np.random.default_rng(seed),
    )
    phi_candidate = _policy_phi(
        posterior, game, policy, bucket_state, candidate_params,
        np.random.default_rng(seed),
    )
    return phi_candidate - phi_current
