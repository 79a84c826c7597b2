"""Rule runtime tests: grammar, typing, purity, guarded actions, atomicity."""

from __future__ import annotations

import pytest

from shiplab.runtime import (
    ActionUnavailable,
    CyclicDependency,
    Program,
    RuleSyntaxError,
    RuntimeTypeError,
    StateRecord,
    TypeMismatch,
    UnknownReference,
    apply_action,
    available_actions,
    computed_snapshot,
    eval_computed,
    parse_program,
)

GATE_RULES = """\
computed modelConfidence = 1 - (predictionErrorEMA
                               + calibrationErrorEMA) / 2
computed confident       = modelConfidence >= confidenceThreshold
computed sustained       = lowConfidenceStreak >= 2
computed canRevise       = not confident
                           and (cooldownRemaining == 0)
computed positivePreview = revisionDeltaPhi >= minRevisionDelta
computed revisionRequested = canRevise and sustained
                             and positivePreview
                             and (revisionKind != "")
computed shouldRevise    = revisionEnabled and revisionRequested

action applyRevision available when shouldRevise:
    patch policyParameters <- nextParameters
    patch cooldown         <- cooldownTurns
"""

GATE_SCHEMA = {
    "predictionErrorEMA": "real",
    "calibrationErrorEMA": "real",
    "confidenceThreshold": "real",
    "lowConfidenceStreak": "int",
    "cooldownRemaining": "int",
    "revisionDeltaPhi": "real",
    "minRevisionDelta": "real",
    "revisionKind": "string",
    "revisionEnabled": "bool",
    "policyParameters": "real-map",
    "nextParameters": "real-map",
    "cooldown": "int",
    "cooldownTurns": "int",
}


def gate_state(**overrides):
    """A state where every gate conjunct holds unless overridden."""
    values = {
        "predictionErrorEMA": 0.3,
        "calibrationErrorEMA": 0.3,
        "confidenceThreshold": 0.72,
        "lowConfidenceStreak": 2,
        "cooldownRemaining": 0,
        "revisionDeltaPhi": 0.05,
        "minRevisionDelta": 0.01,
        "revisionKind": "coarse_roi_collapse",
        "revisionEnabled": True,
        "policyParameters": {"questionMargin": 0.0},
        "nextParameters": {"questionMargin": 0.0, "roiFocusFactor": 2.0},
        "cooldown": 0,
        "cooldownTurns": 3,
    }
    values.update(overrides)
    return StateRecord(values)


def gate_program() -> Program:
    return parse_program(GATE_RULES, schema=GATE_SCHEMA)


def test_gate_rules_parse_with_continuation_lines():
    program = gate_program()
    assert program.computed_names() == (
        "modelConfidence",
        "confident",
        "sustained",
        "canRevise",
        "positivePreview",
        "revisionRequested",
        "shouldRevise",
    )
    assert program.action_names() == ("applyRevision",)
    action = program.actions["applyRevision"]
    assert [p.target for p in action.patches] == ["policyParameters", "cooldown"]


def test_confidence_formula_and_threshold():
    program = gate_program()
    state = gate_state(predictionErrorEMA=0.3, calibrationErrorEMA=0.3)
    assert eval_computed(program, state, "modelConfidence") == pytest.approx(0.7)
    assert eval_computed(program, state, "confident") is False
    state = gate_state(predictionErrorEMA=0.2, calibrationErrorEMA=0.4)
    assert eval_computed(program, state, "modelConfidence") == pytest.approx(0.7)
    state = gate_state(predictionErrorEMA=0.1, calibrationErrorEMA=0.1)
    assert eval_computed(program, state, "modelConfidence") == pytest.approx(0.9)
    assert eval_computed(program, state, "confident") is True


def test_sustained_needs_streak_of_at_least_two():
    program = gate_program()
    assert eval_computed(program, gate_state(lowConfidenceStreak=0), "sustained") is False
    assert eval_computed(program, gate_state(lowConfidenceStreak=1), "sustained") is False
    assert eval_computed(program, gate_state(lowConfidenceStreak=2), "sustained") is True
    assert eval_computed(program, gate_state(lowConfidenceStreak=7), "sustained") is True


def test_cooldown_blocks_revision():
    program = gate_program()
    state = gate_state(cooldownRemaining=2)
    assert eval_computed(program, state, "canRevise") is False
    assert available_actions(program, state) == []


def test_should_revise_requires_every_conjunct():
    program = gate_program()
    assert eval_computed(program, gate_state(), "shouldRevise") is True
    assert available_actions(program, gate_state()) == ["applyRevision"]
    failing = [
        gate_state(revisionEnabled=False),
        gate_state(revisionKind=""),
        gate_state(revisionDeltaPhi=0.001),
        gate_state(lowConfidenceStreak=1),
        gate_state(cooldownRemaining=3),
        gate_state(predictionErrorEMA=0.1, calibrationErrorEMA=0.1),
    ]
    for state in failing:
        assert eval_computed(program, state, "shouldRevise") is False
        assert available_actions(program, state) == []


def test_apply_revision_patches_parameters_and_cooldown():
    program = gate_program()
    state = gate_state(cooldownTurns=3)
    new_state, event = apply_action(program, state, "applyRevision")
    assert new_state["cooldown"] == 3
    assert new_state["policyParameters"] == state["nextParameters"]
    assert state["cooldown"] == 0, "the pre-state record must be untouched"
    assert event.kind == "action"
    assert event.action == "applyRevision"
    assert [p[0] for p in event.patches] == ["policyParameters", "cooldown"]
    assert event.patches[1][1] == 0 and event.patches[1][2] == 3


def test_apply_action_refuses_when_precondition_is_false():
    program = gate_program()
    with pytest.raises(ActionUnavailable):
        apply_action(program, gate_state(revisionEnabled=False), "applyRevision")
    with pytest.raises(UnknownReference):
        apply_action(program, gate_state(), "noSuchAction")


def test_patches_read_the_pre_state():
    text = (
        "action swap available when true:\n"
        "    patch a <- b\n"
        "    patch b <- a\n"
    )
    program = parse_program(text, schema={"a": "int", "b": "int"})
    state = StateRecord({"a": 1, "b": 2})
    new_state, _ = apply_action(program, state, "swap")
    assert new_state["a"] == 2
    assert new_state["b"] == 1


def test_eval_computed_is_pure_and_repeatable():
    program = gate_program()
    state = gate_state()
    before = state.as_dict()
    values = [eval_computed(program, state, "shouldRevise") for _ in range(5)]
    assert values == [True] * 5
    assert state.as_dict() == before


def test_cycle_detection_reports_the_cycle():
    with pytest.raises(CyclicDependency) as err:
        parse_program("computed a = b + 1\ncomputed b = a + 1\n")
    assert "a" in err.value.cycle and "b" in err.value.cycle
    with pytest.raises(CyclicDependency):
        parse_program("computed a = a\n")


def test_unknown_references_are_rejected_when_fields_are_declared():
    with pytest.raises(UnknownReference):
        parse_program("computed x = missingField + 1\n", schema={"y": "int"})
    text = "action go available when true:\n    patch nope <- 1\n"
    with pytest.raises(UnknownReference):
        parse_program(text, schema={"y": "int"})


def test_unknown_field_surfaces_at_evaluation_without_a_schema():
    program = parse_program("computed x = someField * 2\n")
    with pytest.raises(UnknownReference):
        eval_computed(program, StateRecord({"other": 1}), "x")
    with pytest.raises(UnknownReference):
        eval_computed(program, StateRecord({"someField": 3}), "unknownComputed")


def test_ill_typed_programs_are_rejected_at_load():
    with pytest.raises(TypeMismatch):
        parse_program("computed x = 1 + flag\n", schema={"flag": "bool"})
    with pytest.raises(TypeMismatch):
        parse_program(
            "action go available when count:\n    patch count <- 1\n",
            schema={"count": "int"},
        )
    with pytest.raises(TypeMismatch):
        parse_program(
            "action go available when true:\n    patch count <- 1.5\n",
            schema={"count": "int"},
        )
    with pytest.raises(TypeMismatch):
        parse_program("computed flag = 1\n", schema={"flag": "bool"})


def test_division_by_constant_zero_is_a_load_error():
    with pytest.raises(RuleSyntaxError):
        parse_program("computed x = 1 / 0\n")
    with pytest.raises(RuleSyntaxError):
        parse_program("computed x = 1 / 0.0\n")
    program = parse_program("computed x = 1 / n\n", schema={"n": "int"})
    with pytest.raises(RuntimeTypeError):
        eval_computed(program, StateRecord({"n": 0}), "x")
    assert eval_computed(program, StateRecord({"n": 4}), "x") == pytest.approx(0.25)


def test_runtime_type_errors_without_a_schema():
    program = parse_program("computed x = flag + 1\n")
    with pytest.raises(RuntimeTypeError):
        eval_computed(program, StateRecord({"flag": True}), "x")
    program = parse_program("computed x = a and b\n")
    with pytest.raises(RuntimeTypeError):
        eval_computed(program, StateRecord({"a": 1, "b": 2}), "x")
    program = parse_program('computed x = label < 3\n')
    with pytest.raises(RuntimeTypeError):
        eval_computed(program, StateRecord({"label": "z"}), "x")


def test_integer_overflow_is_an_error():
    program = parse_program("computed x = big * big\n")
    state = StateRecord({"big": 2**40})
    with pytest.raises(RuntimeTypeError):
        eval_computed(program, state, "x")
    ok = StateRecord({"big": 2**20})
    assert eval_computed(program, ok, "x") == 2**40


def test_scope_directive_tags_definitions():
    text = (
        "scope planning\n"
        "computed p = 1\n"
        "scope reflection\n"
        "computed r = 2\n"
        "action go available when true:\n"
        "    patch f <- 3\n"
    )
    program = parse_program(text, schema={"f": "int"})
    assert program.scope_of("p") == "planning"
    assert program.scope_of("r") == "reflection"
    assert program.scope_of("go") == "reflection"
    with pytest.raises(RuleSyntaxError):
        parse_program("scope kitchen\ncomputed a = 1\n")


def test_comments_blank_lines_and_hash_inside_strings():
    text = (
        "# leading comment\n"
        "\n"
        'computed same = label == "a#b"  # trailing comment\n'
    )
    program = parse_program(text)
    assert eval_computed(program, StateRecord({"label": "a#b"}), "same") is True
    assert eval_computed(program, StateRecord({"label": "ab"}), "same") is False


def test_min_max_and_operator_precedence():
    program = parse_program(
        "computed lo = min(a, b, 3)\n"
        "computed hi = max(a, b)\n"
        "computed mixed = 1 + 2 * 3 - 4 / 2\n"
        "computed grouped = (1 + 2) * 3\n"
        "computed logic = not a > b or a == 2 and true\n"
    )
    state = StateRecord({"a": 2, "b": 5})
    assert eval_computed(program, state, "lo") == 2
    assert eval_computed(program, state, "hi") == 5
    assert eval_computed(program, state, "mixed") == pytest.approx(5.0)
    assert eval_computed(program, state, "grouped") == 9
    # reads as (not (a > b)) or ((a == 2) and true)
    assert eval_computed(program, state, "logic") is True


def test_state_record_fixed_fields_and_value_semantics():
    state = StateRecord({"weights": {"w": 1.0}, "cell": (2, 3)})
    with pytest.raises(UnknownReference):
        state.patched({"unknown": 1})
    grabbed = state["weights"]
    grabbed["w"] = 99.0
    assert state["weights"] == {"w": 1.0}
    patched = state.patched({"weights": {"w": 2.0}})
    assert state["weights"] == {"w": 1.0}
    assert patched["weights"] == {"w": 2.0}
    assert patched["cell"] == (2, 3)


def test_action_listing_preserves_declaration_order():
    text = (
        "action second available when true:\n"
        "    patch f <- 1\n"
        "action first available when true:\n"
        "    patch f <- 2\n"
    )
    program = parse_program(text, schema={"f": "int"})
    state = StateRecord({"f": 0})
    assert available_actions(program, state) == ["second", "first"]


def test_syntax_errors_carry_line_numbers():
    with pytest.raises(RuleSyntaxError) as err:
        parse_program("computed a = 1\ncomputed = nope\n")
    assert err.value.line == 2
    with pytest.raises(RuleSyntaxError):
        parse_program("    computed a = 1\n")
    with pytest.raises(RuleSyntaxError):
        parse_program("patch a <- 1\n")
    with pytest.raises(RuleSyntaxError):
        parse_program("computed a = 1 +\n")
    with pytest.raises(RuleSyntaxError):
        parse_program("computed a = (1\n")
    with pytest.raises(RuleSyntaxError):
        parse_program("computed a = 1 < 2 < 3\n")


def test_computed_snapshot_is_ordered_and_scope_filterable():
    text = (
        "scope planning\n"
        "computed a = 1\n"
        "scope reflection\n"
        "computed b = a + 1\n"
    )
    program = parse_program(text)
    state = StateRecord({})
    snap = computed_snapshot(program, state)
    assert list(snap.items()) == [("a", 1), ("b", 2)]
    assert computed_snapshot(program, state, scope="reflection") == {"b": 2}
