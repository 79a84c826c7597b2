"""Level assembly and the four-phase turn loop.

One module owns the run loop for every level so that the levels stay what
they claim to be: the same belief backend and the same phases, with layers
added on top.  L1 fires at the highest marginal.  L2 adds the candidate
slate, previews, and the declarative question rule.  L3 adds reflection
signals and the revision gate over symbolic presets.  L4 keeps the same
gate and hands the winning patch to a generation client, falling back to
the preset on any protocol failure.
"""
from __future__ import annotations

import json
import os
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .belief import Posterior
from .planning import (
    Ask,
    BucketState,
    PolicyParameters,
    Preview,
    QuestionBucketPolicy,
    Shoot,
    best_question,
    best_shot,
    enumerate_candidates,
    l1_select,
    max_unfired_marginal,
    preview_all,
    select_action,
    three_bucket_policy,
    two_bucket_policy,
)
from .reflection import (
    PRESET_PATCHES,
    ReflectionSignals,
    confidence,
    preview_revision,
    select_preset,
    start_cooldown,
    tick_cooldown,
    update_signals,
    update_signals_question,
    update_streak,
)
from .revision import (
    GenerationClient,
    HttpClient,
    RevisionRequest,
    ScriptedClient,
    revise_with_fallback,
)
from .runtime import Program, StateRecord, apply_action, eval_computed, parse_program
from .world import BoardConfig, Game, Placement, QuestionAnswer, score_f1

LEVELS = ("L1", "L2", "L3off", "L3on", "L4")

# Named random streams, so toggling one layer never shifts another layer's
# draws and level contrasts stay seed-paired.
NOISE_STREAM = 2
BELIEF_STREAM = 3
QUESTION_STREAM = 4
PROPOSAL_STREAM = 5
BOARD_STREAM = 6

LLM_URL_ENV = "HARNESS_LLM_URL"


class ConfigError(Exception):
    """The run configuration cannot be executed as given."""


def stream_seed(
    master_seed: int,
    board_index: int,
    seed_index: int,
    stream: int,
    turn: int | None = None,
) -> np.random.SeedSequence:
    """Independent child seed for one named stream of one game.

    Per-turn streams (question generation, revision previews) append the
    turn number, so an action taken earlier can never shift the randomness
    of a later turn across configurations.
    """
    key = (board_index, seed_index, stream)
    if turn is not None:
        key = key + (turn,)
    return np.random.SeedSequence(master_seed, spawn_key=key)


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs beyond the boards themselves."""

    level: str = "L3on"
    tau: float = 0.72
    alpha: float = 0.25
    streak: int = 2
    cooldown_turns: int = 3
    delta_min: float = 0.01
    particles: int = 500
    sweeps: int = 20
    epsilon: float = 0.1
    shot_budget: int = 40
    question_budget: int = 15
    bucket_policy: QuestionBucketPolicy | None = None
    shared_question_policy: bool = False
    llm_base_url: str | None = None
    llm_model: str = "local-model"
    llm_mock_file: str | None = None

    def __post_init__(self) -> None:
        if self.level not in LEVELS:
            raise ConfigError(f"unknown level {self.level!r}; expected one of {LEVELS}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must lie in [0, 1]")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if self.streak < 1 or self.cooldown_turns < 0 or self.delta_min < 0:
            raise ConfigError("streak >= 1, cooldownTurns >= 0, deltaMin >= 0")
        if self.particles < 1 or self.sweeps < 0:
            raise ConfigError("particles >= 1 and sweeps >= 0")
        if not 0.0 <= self.epsilon < 0.5:
            raise ConfigError("epsilon must lie in [0, 0.5)")
        if self.shot_budget < 1 or self.question_budget < 0:
            raise ConfigError("budgets must be positive")

    def board_config(self, width: int = 8, height: int = 8) -> BoardConfig:
        return BoardConfig(
            width=width,
            height=height,
            shot_budget=self.shot_budget,
            question_budget=self.question_budget,
            noise_epsilon=self.epsilon,
        )

    def to_json_dict(self) -> dict:
        return {
            "level": self.level,
            "tau": self.tau,
            "alpha": self.alpha,
            "streak": self.streak,
            "cooldownTurns": self.cooldown_turns,
            "deltaMin": self.delta_min,
            "particles": self.particles,
            "sweeps": self.sweeps,
            "epsilon": self.epsilon,
            "budgets": {"shots": self.shot_budget, "questions": self.question_budget},
            "bucketPolicy": (
                self.bucket_policy.to_dict() if self.bucket_policy else None
            ),
            "sharedQuestionPolicy": self.shared_question_policy,
            "llm": {
                "baseUrl": self.llm_base_url,
                "model": self.llm_model,
                "mockFile": self.llm_mock_file,
            },
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunConfig":
        budgets = data.get("budgets") or {}
        llm = data.get("llm") or {}
        policy = data.get("bucketPolicy")
        defaults = cls()
        return cls(
            level=data.get("level", defaults.level),
            tau=data.get("tau", defaults.tau),
            alpha=data.get("alpha", defaults.alpha),
            streak=data.get("streak", defaults.streak),
            cooldown_turns=data.get("cooldownTurns", defaults.cooldown_turns),
            delta_min=data.get("deltaMin", defaults.delta_min),
            particles=data.get("particles", defaults.particles),
            sweeps=data.get("sweeps", defaults.sweeps),
            epsilon=data.get("epsilon", defaults.epsilon),
            shot_budget=budgets.get("shots", defaults.shot_budget),
            question_budget=budgets.get("questions", defaults.question_budget),
            bucket_policy=(
                QuestionBucketPolicy.from_dict(policy) if policy else None
            ),
            shared_question_policy=data.get(
                "sharedQuestionPolicy", defaults.shared_question_policy
            ),
            llm_base_url=llm.get("baseUrl"),
            llm_model=llm.get("model", defaults.llm_model),
            llm_mock_file=llm.get("mockFile"),
        )


def load_config(path: str | Path) -> RunConfig:
    return RunConfig.from_json_dict(json.loads(Path(path).read_text()))


def question_policy_for(config: RunConfig) -> QuestionBucketPolicy | None:
    """The question budget policy a level plays under; None for L1."""
    if config.level == "L1":
        return None
    if config.bucket_policy is not None:
        return config.bucket_policy
    if config.level == "L2" or config.shared_question_policy:
        return two_bucket_policy()
    return three_bucket_policy()


def build_client(config: RunConfig) -> GenerationClient:
    if config.llm_mock_file:
        return ScriptedClient.from_file(config.llm_mock_file)
    base_url = config.llm_base_url or os.environ.get(LLM_URL_ENV)
    if base_url:
        return HttpClient(base_url, config.llm_model)
    raise ConfigError(
        "level L4 needs a generation client: set llm.mockFile, llm.baseUrl, "
        f"or the {LLM_URL_ENV} environment variable"
    )


# ---------------------------------------------------------------------------
# declarative programs


_PLANNING_RULES = """\
scope planning

computed preferQuestion = hasQuestionCandidate and questionsRemaining > 0
    and bestQuestionCollapse >= bestShotScore + questionMargin
"""

_EXPLOIT_RULE = """\
computed exploitMode = maxUnfiredMarginal > exploitThreshold
"""

_GATE_RULES = """\
scope reflection

computed modelConfidence = 1.0 - (ePredEMA + eCalEMA) / 2.0
computed confident = modelConfidence >= tau
computed sustained = lowConfidenceStreak >= {streak}
computed canRevise = revisionEnabled and cooldownRemaining == 0
computed positivePreview = revisionDeltaPhi >= minRevisionDelta
computed revisionRequested = not confident and sustained
computed shouldRevise = revisionRequested and canRevise
    and positivePreview

action applyRevision available when shouldRevise:
    patch policyParameters <- nextParameters
    patch cooldown <- cooldownTurns
"""

_PLANNING_SCHEMA = {
    "hasQuestionCandidate": "bool",
    "questionsRemaining": "int",
    "bestQuestionCollapse": "real",
    "bestShotScore": "real",
    "questionMargin": "real",
}

_EXPLOIT_SCHEMA = {
    "maxUnfiredMarginal": "real",
    "exploitThreshold": "real",
}

_GATE_SCHEMA = {
    "tau": "real",
    "ePredEMA": "real",
    "eCalEMA": "real",
    "lowConfidenceStreak": "int",
    "cooldownRemaining": "int",
    "revisionEnabled": "bool",
    "revisionDeltaPhi": "real",
    "minRevisionDelta": "real",
    "policyParameters": "real-map",
    "nextParameters": "real-map",
    "cooldown": "int",
    "cooldownTurns": "int",
}


def build_program(level: str, streak: int = 2) -> Program:
    """The declarative rule set active at a level.

    L1 runs none.  L2 runs the question-preference rule.  L3 and L4 share
    one program: the exploit marker plus the full revision gate; the levels
    differ only in who executes an open gate, never in a computed
    definition.
    """
    if level not in LEVELS:
        raise ConfigError(f"unknown level {level!r}")
    if level == "L1":
        return parse_program("", schema={})
    if level == "L2":
        return parse_program(_PLANNING_RULES, schema=dict(_PLANNING_SCHEMA))
    text = "\n".join(
        [_PLANNING_RULES, _EXPLOIT_RULE, _GATE_RULES.format(streak=streak)]
    )
    schema = dict(_PLANNING_SCHEMA) | dict(_EXPLOIT_SCHEMA) | dict(_GATE_SCHEMA)
    return parse_program(text, schema=schema)


# ---------------------------------------------------------------------------
# trace events


def _r4(value: float) -> float:
    return round(float(value), 4)


def _r6(value: float) -> float:
    return round(float(value), 6)


def _candidate_dict(candidate) -> dict:
    if isinstance(candidate, Shoot):
        return {"type": "shot", "cell": [candidate.cell[0], candidate.cell[1]]}
    return {"type": "question", "question": candidate.question.to_dict()}


def _preview_dict(preview: Preview) -> dict:
    return {
        "candidate": _candidate_dict(preview.candidate),
        "expectedCollapse": _r6(preview.expected_collapse),
        "expectedHitProb": (
            None
            if preview.expected_hit_prob is None
            else _r6(preview.expected_hit_prob)
        ),
    }


def _top_marginals(posterior: Posterior, limit: int = 10):
    config = posterior.config
    pairs = []
    for row in range(config.height):
        for col in range(config.width):
            cell = (row, col)
            pairs.append((cell, float(posterior.marginals[config.cell_index(cell)])))
    pairs.sort(key=lambda item: (-item[1], item[0]))
    return tuple(pairs[:limit])


@dataclass
class GameRecord:
    """One game's outcome plus its full event trace."""

    level: str
    tau: float
    board_id: str
    board_index: int
    seed_index: int
    win: bool
    f1: float
    turns: int
    questions: int
    llm_calls: int
    revisions: int
    provenance_counts: dict[str, int] = field(default_factory=dict)
    event_lines: tuple[str, ...] = ()


def write_trace(record: GameRecord, path: str | Path) -> None:
    Path(path).write_text("\n".join(record.event_lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# the turn loop


def run_game(
    config: RunConfig,
    board: Placement,
    master_seed: int,
    board_index: int = 0,
    seed_index: int = 0,
    client: GenerationClient | None = None,
    board_config: BoardConfig | None = None,
    board_id: str = "",
) -> GameRecord:
    """Play one full game at the configured level and return its record.

    The trace in the record holds only the ordered per-turn event lines;
    game identity and run-level accounting live outside the trace, so
    equal play produces byte-equal traces across configurations.
    """
    level = config.level
    if level == "L4" and client is None:
        client = build_client(config)
    bc = board_config or config.board_config()
    if bc.noise_epsilon != config.epsilon:
        raise ConfigError("board noise must match the configured epsilon")
    game = Game(bc, board)
    noise_rng = np.random.default_rng(
        stream_seed(master_seed, board_index, seed_index, NOISE_STREAM)
    )
    belief_rng = np.random.default_rng(
        stream_seed(master_seed, board_index, seed_index, BELIEF_STREAM)
    )
    posterior = Posterior.initialize(
        bc, n_particles=config.particles, rng=belief_rng, epsilon=config.epsilon
    )
    initial_entropy = posterior.entropy()
    program = build_program(level, streak=config.streak)
    policy = question_policy_for(config)
    bucket_state = BucketState.for_policy(policy) if policy else None
    params = PolicyParameters()
    signals = ReflectionSignals(alpha=config.alpha)
    reflective = level in ("L3off", "L3on", "L4")
    revision_enabled = level in ("L3on", "L4")

    event_lines: list[str] = []
    recent_events: deque = deque(maxlen=5)
    confidence_history: list[float] = []
    llm_calls = 0
    revisions = 0
    provenance_counts = {"llm": 0, "preset": 0}

    def emit(event: dict) -> None:
        event_lines.append(json.dumps(event, sort_keys=True, separators=(",", ":")))
        recent_events.append(event)

    while game.terminal is None:
        turn = game.turn + 1

        # -- phase 1: observe and evaluate
        emit(
            {
                "turn": turn,
                "phase": "observe",
                "kind": "posterior",
                "shotsRemaining": game.shots_remaining,
                "questionsRemaining": game.questions_remaining,
                "entropy": _r4(posterior.entropy()),
                "digest": posterior.digest(),
                "marginals": [_r4(v) for v in posterior.marginals],
            }
        )
        decision_fields: dict = {}
        if level == "L1":
            action = l1_select(posterior, game.fired_set)
        else:
            question_rng = np.random.default_rng(
                stream_seed(master_seed, board_index, seed_index, QUESTION_STREAM, turn)
            )
            slate = enumerate_candidates(
                posterior, game, policy, bucket_state, params, question_rng
            )
            previews = preview_all(posterior, slate)
            emit(
                {
                    "turn": turn,
                    "phase": "observe",
                    "kind": "previews",
                    "previews": [_preview_dict(p) for p in previews],
                }
            )
            recent_hits = game.recent_true_hits()
            top_shot = best_shot(previews, params, recent_hits)
            top_question = best_question(previews)
            decision_fields = {
                "hasQuestionCandidate": top_question is not None,
                "questionsRemaining": game.questions_remaining,
                "bestQuestionCollapse": (
                    top_question.expected_collapse if top_question else 0.0
                ),
                "bestShotScore": top_shot[1] if top_shot else 0.0,
                "questionMargin": params.question_margin,
            }
            if level != "L2":
                decision_fields["maxUnfiredMarginal"] = max_unfired_marginal(
                    posterior, game.fired_set
                )
                decision_fields["exploitThreshold"] = params.exploit_threshold
            prefer_question = eval_computed(
                program, StateRecord(decision_fields), "preferQuestion"
            )
            action = (
                top_question.candidate
                if prefer_question and top_question is not None
                else top_shot[0].candidate
            )
            quota_open = (
                game.questions_remaining > 0
                and bucket_state.quota_left(policy, turn) > 0
            )
            twin = select_action(
                previews, params, quota_open=quota_open, recent_hits=recent_hits
            )
            if action != twin:
                raise RuntimeError(
                    f"declarative rule and library selector disagree on turn {turn}"
                )

        # -- phase 2: decide and act
        acted_question = isinstance(action, Ask)
        if acted_question:
            question = action.question
            answer = game.ask(question)
            bucket_state.record_question(policy, turn)
            posterior = posterior.update(
                QuestionAnswer(question, answer), sweeps=config.sweeps
            )
            emit(
                {
                    "turn": turn,
                    "phase": "act",
                    "kind": "question",
                    "question": question.to_dict(),
                    "answer": answer,
                }
            )
        else:
            cell = action.cell
            predicted_prob = posterior.marginal(cell)
            shot = game.fire(cell, noise_rng)
            posterior = posterior.update(shot, sweeps=config.sweeps)
            emit(
                {
                    "turn": turn,
                    "phase": "act",
                    "kind": "shot",
                    "cell": [cell[0], cell[1]],
                    "observedHit": bool(shot.observed_hit),
                    "trueHit": cell in board.occupied,
                    "predictedProb": _r6(predicted_prob),
                }
            )
        if game.terminal is not None:
            break
        if not reflective:
            continue

        # -- phase 3: reflect
        if acted_question:
            signals = update_signals_question(signals)
        else:
            signals = update_signals(
                signals, predicted_prob, 1 if shot.observed_hit else 0
            )
        signals = update_streak(signals, config.tau)
        turn_confidence = confidence(signals)
        confidence_history.append(turn_confidence)
        preset_kind = select_preset(game, posterior, initial_entropy)
        candidate_params = (
            params.with_patch(PRESET_PATCHES[preset_kind]) if preset_kind else None
        )
        proposal_seed = stream_seed(
            master_seed, board_index, seed_index, PROPOSAL_STREAM, turn
        )
        delta_phi = (
            preview_revision(
                posterior, game, policy, bucket_state,
                params, candidate_params, proposal_seed,
            )
            if candidate_params is not None
            else 0.0
        )
        gate_fields = dict(decision_fields)
        gate_fields.update(
            {
                "tau": config.tau,
                "ePredEMA": signals.e_pred_ema,
                "eCalEMA": signals.e_cal_ema,
                "lowConfidenceStreak": signals.low_confidence_streak,
                "cooldownRemaining": signals.cooldown_remaining,
                "revisionEnabled": revision_enabled,
                "revisionDeltaPhi": delta_phi,
                "minRevisionDelta": config.delta_min,
                "policyParameters": params.as_map(),
                "nextParameters": (
                    candidate_params.as_map() if candidate_params else params.as_map()
                ),
                "cooldown": signals.cooldown_remaining,
                "cooldownTurns": config.cooldown_turns,
            }
        )
        gate_record = StateRecord(gate_fields)
        should_revise = eval_computed(program, gate_record, "shouldRevise")
        emit(
            {
                "turn": turn,
                "phase": "reflect",
                "kind": "signals",
                "ePred": _r6(signals.e_pred),
                "eCal": _r6(signals.e_cal),
                "ePredEMA": _r6(signals.e_pred_ema),
                "eCalEMA": _r6(signals.e_cal_ema),
                "confidence": _r6(turn_confidence),
                "streak": signals.low_confidence_streak,
                "cooldown": signals.cooldown_remaining,
                "gateOpen": bool(should_revise),
                "revisionKind": preset_kind or "",
                "deltaPhi": _r6(delta_phi),
            }
        )
        signals = tick_cooldown(signals)

        # -- phase 4: revise
        if not should_revise:
            continue
        if level == "L4":
            request = RevisionRequest(
                turn=turn,
                confidence_history=tuple(confidence_history[-5:]),
                top_marginals=_top_marginals(posterior),
                entropy=posterior.entropy(),
                recent_events=tuple(recent_events),
                parameters=params,
            )
            llm_calls += 1
            outcome = revise_with_fallback(
                client,
                request,
                preset_selector=lambda: candidate_params,
                preview_fn=lambda cand: preview_revision(
                    posterior, game, policy, bucket_state, params, cand, proposal_seed
                ),
                delta_min=config.delta_min,
            )
            applied = outcome.parameters
            provenance = outcome.provenance
            delta_phi_proposal = outcome.delta_phi_proposal
        else:
            applied = candidate_params
            provenance = "preset"
            delta_phi_proposal = None
        if applied is None:
            continue
        revised_record, _ = apply_action(
            program,
            gate_record.patched({"nextParameters": applied.as_map()}),
            "applyRevision",
        )
        params = PolicyParameters.from_map(revised_record["policyParameters"])
        signals = start_cooldown(signals, revised_record["cooldown"])
        revisions += 1
        provenance_counts[provenance] += 1
        emit(
            {
                "turn": turn,
                "phase": "revise",
                "kind": "revision",
                "revisionKind": preset_kind or "",
                "provenance": provenance,
                "deltaPhi": _r6(delta_phi),
                "deltaPhiProposal": (
                    None if delta_phi_proposal is None else _r6(delta_phi_proposal)
                ),
                "parameters": applied.as_map(),
            }
        )

    return GameRecord(
        level=level,
        tau=config.tau,
        board_id=board_id,
        board_index=board_index,
        seed_index=seed_index,
        win=game.terminal == "win",
        f1=score_f1(game, board),
        turns=game.turn,
        questions=len(game.asked),
        llm_calls=llm_calls,
        revisions=revisions,
        provenance_counts=provenance_counts,
        event_lines=tuple(event_lines),
    )
