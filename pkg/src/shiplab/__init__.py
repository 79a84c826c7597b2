"""Layered planning laboratory for noisy collaborative ship hunting.

The package decomposes one agent into four separately measurable layers on
a shared declarative runtime: a particle posterior over ship placements
(``belief``), preview-scored action selection with budgeted region
questions (``planning``), an EMA-confidence revision gate with preset
parameter patches (``reflection``), and an optional LLM-proposed patch
path with strict validation and preset fallback (``revision``).  The
``harness`` module assembles the five ablation levels, ``lab`` runs
reproducible board suites and analyzes their trace logs, and ``cli``
exposes the whole instrument as the ``shiplab`` command.
"""

from __future__ import annotations

from .belief import DegeneratePosterior, Posterior, exact_posterior
from .harness import (
    ConfigError,
    GameRecord,
    RunConfig,
    build_program,
    run_game,
    stream_seed,
    write_trace,
)
from .lab import (
    EmptySample,
    MalformedLog,
    RunSummary,
    SuiteMismatch,
    SuiteSpec,
    SummaryRow,
    generate_board_suite,
    layer_delta,
    load_summary,
    oracle_check,
    run_suite,
    threshold_sweep,
    verify_rate_identities,
    wilson_ci,
)
from .planning import (
    Ask,
    PolicyParameters,
    Preview,
    Shoot,
    enumerate_candidates,
    l1_select,
    select_action,
    sim_next,
    three_bucket_policy,
    two_bucket_policy,
)
from .reflection import (
    PRESET_PATCHES,
    ReflectionSignals,
    preview_revision,
    select_preset,
)
from .revision import HttpClient, ProtocolFailure, ScriptedClient, revise_with_fallback
from .runtime import (
    Program,
    RuleSyntaxError,
    StateRecord,
    TypeMismatch,
    apply_action,
    computed_snapshot,
    eval_computed,
    parse_program,
)
from .world import (
    BoardConfig,
    Game,
    Placement,
    Question,
    QuestionAnswer,
    ShipPlacement,
    ShotReturn,
    place_fleet,
    score_f1,
)

__version__ = "0.1.0"

__all__ = [
    "Ask",
    "BoardConfig",
    "ConfigError",
    "DegeneratePosterior",
    "EmptySample",
    "Game",
    "GameRecord",
    "HttpClient",
    "MalformedLog",
    "PRESET_PATCHES",
    "Placement",
    "PolicyParameters",
    "Posterior",
    "Preview",
    "Program",
    "ProtocolFailure",
    "Question",
    "QuestionAnswer",
    "ReflectionSignals",
    "RuleSyntaxError",
    "RunConfig",
    "RunSummary",
    "ScriptedClient",
    "ShipPlacement",
    "Shoot",
    "ShotReturn",
    "StateRecord",
    "SuiteMismatch",
    "SuiteSpec",
    "SummaryRow",
    "TypeMismatch",
    "apply_action",
    "build_program",
    "computed_snapshot",
    "enumerate_candidates",
    "eval_computed",
    "exact_posterior",
    "generate_board_suite",
    "l1_select",
    "layer_delta",
    "load_summary",
    "oracle_check",
    "parse_program",
    "place_fleet",
    "preview_revision",
    "revise_with_fallback",
    "run_game",
    "run_suite",
    "score_f1",
    "select_action",
    "select_preset",
    "sim_next",
    "stream_seed",
    "three_bucket_policy",
    "threshold_sweep",
    "two_bucket_policy",
    "verify_rate_identities",
    "wilson_ci",
    "write_trace",
]
