"""Delegated policy revision: prompt a text generator, validate, fall back.

The gate logic upstream decides *when* to revise; this module only handles
the exchange with a generation client and the defensive validation of what
comes back.  Every failure mode collapses to a value, never an exception,
so the caller can fall back to the symbolic preset and keep the turn loop
deterministic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import requests

from .planning import PARAMETER_BOUNDS, ParameterOutOfBounds, PolicyParameters
from .reflection import DELTA_MIN_DEFAULT

Cell = tuple[int, int]

PROMPT_SIZE_LIMIT = 8192
EVENT_HISTORY_LIMIT = 5
CONFIDENCE_HISTORY_LIMIT = 5
MARGINAL_LIMIT = 10
_EVENT_LINE_CAP = 400


class TransportError(Exception):
    """The client could not produce text: network, timeout, or script end."""


@dataclass(frozen=True)
class RevisionRequest:
    """Everything the generator is shown about the current game."""

    turn: int
    confidence_history: tuple[float, ...]
    top_marginals: tuple[tuple[Cell, float], ...]
    entropy: float
    recent_events: tuple[dict, ...]
    parameters: PolicyParameters
    bounds: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(PARAMETER_BOUNDS)
    )


@dataclass(frozen=True)
class RevisionPatchProposal:
    assignments: dict[str, float]


@dataclass(frozen=True)
class ProtocolFailure:
    """Why a proposal was rejected; consumed by the fallback path."""

    reason: str  # "transport", "parse", "schema", or "bounds"
    detail: str = ""


@dataclass(frozen=True)
class RevisionOutcome:
    """What the revision phase actually applied."""

    parameters: PolicyParameters | None
    provenance: str  # "llm", "preset", or "none"
    delta_phi_proposal: float | None
    failure_reason: str | None


class GenerationClient:
    """Interface: generate(prompt) returns text or raises TransportError."""

    def generate(self, prompt: str) -> str:
        raise NotImplementedError


class ScriptedClient(GenerationClient):
    """Replays canned responses in order; an exhausted script is a transport
    failure, which makes an empty script the canonical always-failing mock."""

    def __init__(self, responses: Sequence[str] = ()) -> None:
        self._queue = list(responses)
        self.calls = 0

    @classmethod
    def from_file(cls, path: str) -> "ScriptedClient":
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        if not isinstance(data, list) or any(not isinstance(s, str) for s in data):
            raise ValueError(f"{path}: script must be a JSON array of strings")
        return cls(data)

    def generate(self, prompt: str) -> str:
        self.calls += 1
        if not self._queue:
            raise TransportError("scripted responses exhausted")
        return self._queue.pop(0)


class HttpClient(GenerationClient):
    """JSON-over-HTTP client for a locally served generation endpoint.

    One POST per call, no retries: a flaky server shows up honestly in the
    invocation accounting instead of being papered over.
    """

    def __init__(self, base_url: str, model: str, timeout: float = 30.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout = timeout

    def generate(self, prompt: str) -> str:
        body = {"model": self.model, "prompt": prompt, "stream": False}
        try:
            response = requests.post(
                f"{self.base_url}/api/generate", json=body, timeout=self.timeout
            )
            response.raise_for_status()
            payload = response.json()
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        except ValueError as exc:
            raise TransportError(f"malformed response body: {exc}") from exc
        text = payload.get("response") if isinstance(payload, dict) else None
        if not isinstance(text, str):
            raise TransportError("response body lacks a 'response' text field")
        return text


def render_prompt(request: RevisionRequest) -> str:
    """Deterministic prompt: state summary, schema with bounds, format rule.

    Histories are clipped to fixed lengths and long event lines elided, so
    the rendered text stays well under PROMPT_SIZE_LIMIT regardless of what
    the caller accumulated.
    """
    lines = [
        "You are tuning the decision policy of a ship-hunting agent mid-game.",
        f"Turn: {request.turn}",
        "Recent confidence: "
        + ", ".join(
            f"{c:.4f}" for c in request.confidence_history[-CONFIDENCE_HISTORY_LIMIT:]
        ),
        f"Posterior entropy: {request.entropy:.4f} nats",
        "Highest cell-occupancy marginals (row,col: probability):",
    ]
    for cell, prob in request.top_marginals[:MARGINAL_LIMIT]:
        lines.append(f"  {cell[0]},{cell[1]}: {prob:.4f}")
    lines.append("Recent events:")
    for event in request.recent_events[-EVENT_HISTORY_LIMIT:]:
        text = json.dumps(event, sort_keys=True)
        if len(text) > _EVENT_LINE_CAP:
            text = text[: _EVENT_LINE_CAP - 3] + "..."
        lines.append("  " + text)
    current = request.parameters.as_map()
    lines.append("Current parameters:")
    for name in sorted(current):
        lines.append(f"  {name} = {current[name]}")
    lines.append("Adjustable parameters and their bounds:")
    for name in sorted(request.bounds):
        low, high = request.bounds[name]
        lines.append(f"  {name}: [{low}, {high}]")
    lines.append(
        "Reply with a single JSON object assigning new values to one or more "
        'of these parameters, for example {"closeoutBias": 0.25}. '
        "Any other output is discarded."
    )
    prompt = "\n".join(lines)
    if len(prompt.encode("utf-8")) > PROMPT_SIZE_LIMIT:
        raise ValueError("rendered prompt exceeded the size limit")
    return prompt


def _extract_json_object(text: str):
    """The generated text as a JSON object, or None.

    Tolerates prose or fences around the object, since generators rarely
    resist decorating their answers; anything without one balanced object
    body is a parse failure.
    """
    body = text.strip()
    try:
        return json.loads(body)
    except ValueError:
        pass
    start = body.find("{")
    end = body.rfind("}")
    if start < 0 or end <= start:
        return None
    try:
        return json.loads(body[start : end + 1])
    except ValueError:
        return None


def propose_patch(
    client: GenerationClient, request: RevisionRequest
) -> RevisionPatchProposal | ProtocolFailure:
    """One generation round-trip, validated down to a usable patch."""
    try:
        text = client.generate(render_prompt(request))
    except TransportError as exc:
        return ProtocolFailure("transport", str(exc))
    obj = _extract_json_object(text)
    if obj is None or not isinstance(obj, dict):
        return ProtocolFailure("parse", "expected a JSON object of assignments")
    if not obj:
        return ProtocolFailure("schema", "no assignments given")
    assignments: dict[str, float] = {}
    for name, value in obj.items():
        if name not in request.bounds:
            return ProtocolFailure("schema", f"unknown parameter {name!r}")
        if type(value) is bool or not isinstance(value, (int, float)):
            return ProtocolFailure("schema", f"{name} must be a number")
        low, high = request.bounds[name]
        if not low <= float(value) <= high:
            return ProtocolFailure(
                "bounds", f"{name}={value} outside [{low}, {high}]"
            )
        assignments[name] = float(value)
    return RevisionPatchProposal(assignments)


def revise_with_fallback(
    client: GenerationClient,
    request: RevisionRequest,
    preset_selector: Callable[[], PolicyParameters | None],
    preview_fn: Callable[[PolicyParameters], float],
    delta_min: float = DELTA_MIN_DEFAULT,
) -> RevisionOutcome:
    """Apply the client's patch when it is valid and actually helps.

    The proposal must both validate and clear the same minimum preview
    improvement the gate used; otherwise the symbolic preset applies, and
    when no preset is on offer the turn revises nothing.  The client is
    called exactly once per invocation.
    """
    result = propose_patch(client, request)
    failure_reason: str | None = None
    delta_proposal: float | None = None
    if isinstance(result, RevisionPatchProposal):
        try:
            candidate = request.parameters.with_patch(result.assignments)
        except ParameterOutOfBounds:
            failure_reason = "bounds"
        else:
            delta_proposal = preview_fn(candidate)
            if delta_proposal >= delta_min:
                return RevisionOutcome(candidate, "llm", delta_proposal, None)
            failure_reason = "preview"
    else:
        failure_reason = result.reason
    preset = preset_selector()
    if preset is None:
        return RevisionOutcome(None, "none", delta_proposal, failure_reason)
    return RevisionOutcome(preset, "preset", delta_proposal, failure_reason)


def invocation_rate(records) -> float:
    """Client calls per turn across a run; a dependent variable, never a knob."""
    records = list(records)
    if not records:
        raise ValueError("invocation rate needs at least one game record")
    calls = sum(record.llm_calls for record in records)
    turns = sum(record.turns for record in records)
    if turns == 0:
        return 0.0
    return calls / turns
