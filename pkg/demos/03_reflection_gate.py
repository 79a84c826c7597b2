"""Drive the confidence gate with a synthetic error sequence.

The reflection layer tracks two exponential moving averages, one of
predictive error (was the predicted hit probability right about the
observed outcome) and one of calibration error (does stated confidence
track realized accuracy over a sliding window).  Model confidence is one
minus their average.  The gate opens only when four conditions hold at
once: confidence below the threshold, a sustained low-confidence streak,
no active cooldown, and a positive counterfactual preview for the
candidate parameter patch.  The same logic lives as a declarative program
in the runtime, so this script evaluates both and shows them agreeing.
"""
from __future__ import annotations

from shiplab.harness import build_program
from shiplab.reflection import (
    PRESET_PATCHES,
    ReflectionSignals,
    confidence,
    start_cooldown,
    tick_cooldown,
    update_signals,
    update_streak,
)
from shiplab.planning import PolicyParameters
from shiplab.runtime import StateRecord, eval_computed

TAU = 0.72
DELTA_MIN = 0.01


def gate_fields(signals: ReflectionSignals, delta_phi: float) -> dict:
    return {
        "ePredEMA": signals.e_pred_ema,
        "eCalEMA": signals.e_cal_ema,
        "tau": TAU,
        "lowConfidenceStreak": signals.low_streak,
        "cooldownRemaining": signals.cooldown_remaining,
        "revisionEnabled": True,
        "revisionDeltaPhi": delta_phi,
        "minRevisionDelta": DELTA_MIN,
    }


def main() -> None:
    program = build_program("L3on")
    signals = ReflectionSignals(alpha=0.25)
    print(f"threshold tau = {TAU}, preset patches available: {list(PRESET_PATCHES)}\n")

    # a run of confident, correct predictions, then a bad stretch
    script = [(0.9, 1)] * 4 + [(0.8, 0), (0.85, 0), (0.9, 0), (0.75, 0)]
    print("turn  predicted  observed  ePredEMA  eCalEMA  confidence  streak  gate")
    for turn, (predicted, observed) in enumerate(script, start=1):
        signals = update_signals(signals, predicted, observed)
        signals = update_streak(signals, TAU)
        record = StateRecord(gate_fields(signals, delta_phi=0.05))
        open_now = eval_computed(program, record, "shouldRevise")
        assert open_now == (
            confidence(signals) < TAU
            and signals.low_streak >= 2
            and signals.cooldown_remaining == 0
        ), "declarative program and library arithmetic must agree"
        print(
            f"{turn:4d}  {predicted:9.2f}  {observed:8d}  {signals.e_pred_ema:8.3f}  "
            f"{signals.e_cal_ema:7.3f}  {confidence(signals):10.3f}  "
            f"{signals.low_streak:6d}  {'OPEN' if open_now else 'closed'}"
        )
        signals = tick_cooldown(signals)
        if open_now:
            signals = start_cooldown(signals, 3)
            print("      -> revision applied, cooldown 3 turns starts")

    print("\npreset patch effects on the policy parameters:")
    params = PolicyParameters()
    for kind, patch in PRESET_PATCHES.items():
        revised = params.with_patch(patch)
        changed = {
            key: value
            for key, value in revised.as_map().items()
            if params.as_map()[key] != value
        }
        print(f"  {kind}: {changed}")

    print("\na negative or tiny counterfactual preview keeps the gate shut even")
    print("under sustained low confidence:")
    record = StateRecord(gate_fields(signals, delta_phi=0.001))
    print(f"  deltaPhi 0.001 < {DELTA_MIN} -> shouldRevise = "
          f"{eval_computed(program, record, 'shouldRevise')}")


if __name__ == "__main__":
    main()
