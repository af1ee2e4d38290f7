"""Trace validation: does the abstract transition system accept a recorded
trace, and if not, what is the longest validated prefix and which message
blocks it.

A dis-terminated trace validates only if the model predicts the observed
violation, i.e. the final in-message is prohibited at that point; a spec
that would have allowed it is reported invalid with reason
"missed violation".
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import FrozenSet, Optional

from .abstract import AbstractEngine, BadState, Blocked
from .grounding import DEFAULT_INSTANTIATION_CAP, ground_spec
from .messages import Message, Trace
from .rules import LifestateSpec


class ValidationTimeout(Exception):
    pass


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validating one trace.

    prefix_len counts every validated message; prefix_len_filtered counts
    only validated messages that occur in some ground rule (matcher atom or
    target), the relevance-filtered step count."""

    valid: bool
    prefix_len: int
    prefix_len_filtered: int
    total_len: int
    blocking_message: Optional[Message] = None
    blocking_permitted: Optional[FrozenSet[Message]] = None
    blocking_prohibited: Optional[FrozenSet[Message]] = None
    last_firing_rules: tuple[int, ...] = ()
    reason: Optional[str] = None
    inconsistency_steps: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.valid:
            assert self.blocking_message is None and self.prefix_len == self.total_len
        else:
            assert self.blocking_message is not None


def _rule_message_set(engine: AbstractEngine) -> frozenset[Message]:
    from .rules import matcher_atoms

    out = set()
    for rule in engine.ground.rules:
        out.add(rule.target)
        for atom in matcher_atoms(rule.matcher):
            out.add(atom.to_message())
    return frozenset(out)


def validate_ground(
    engine: AbstractEngine,
    trace: Trace,
    deadline: Optional[float] = None,
) -> ValidationReport:
    """Fold the abstract step over the trace against a prepared engine."""
    rule_messages = _rule_message_set(engine)
    state = engine.initial_state()
    # For blame reporting: per message, the spec rules that most recently
    # fired with that message as their target.
    last_touch: dict[Message, tuple[int, ...]] = {}
    filtered = 0
    inconsistent_at: list[int] = []

    def note_firings(step_index: int) -> None:
        fired = engine.fired_rules(state.rule_states)
        by_target: dict[Message, list[int]] = {}
        for f in fired:
            by_target.setdefault(f.target, []).append(f.source_index)
        for target, indices in by_target.items():
            last_touch[target] = tuple(indices)
        if state.inconsistent:
            inconsistent_at.append(step_index)

    note_firings(0)
    total = len(trace.messages)
    for i, m in enumerate(trace.messages):
        if deadline is not None and time.monotonic() > deadline:
            raise ValidationTimeout(f"validation exceeded its time budget at step {i}")
        if m.is_dis():
            inner = m.unwrap()
            if inner in state.prohibited:
                # The model predicts the observed violation: accepted.
                if inner in rule_messages:
                    filtered += 1
                return ValidationReport(True, total, filtered, total,
                                        inconsistency_steps=tuple(inconsistent_at))
            return ValidationReport(
                False, i, filtered, total,
                blocking_message=m,
                blocking_permitted=state.permitted,
                blocking_prohibited=state.prohibited,
                last_firing_rules=last_touch.get(inner, ()),
                reason="missed violation: the spec permits the recorded dis step",
                inconsistency_steps=tuple(inconsistent_at),
            )
        result = engine.step(state, m)
        if isinstance(result, Blocked):
            return ValidationReport(
                False, i, filtered, total,
                blocking_message=m,
                blocking_permitted=state.permitted,
                blocking_prohibited=state.prohibited,
                last_firing_rules=last_touch.get(m, ()),
                reason="back-message not permitted",
                inconsistency_steps=tuple(inconsistent_at),
            )
        if isinstance(result, BadState):
            return ValidationReport(
                False, i, filtered, total,
                blocking_message=m,
                blocking_permitted=state.permitted,
                blocking_prohibited=state.prohibited,
                last_firing_rules=last_touch.get(m, ()),
                reason="predicted violation not observed: in-message is prohibited",
                inconsistency_steps=tuple(inconsistent_at),
            )
        state = result
        if m in rule_messages:
            filtered += 1
        note_firings(i + 1)
    return ValidationReport(True, total, filtered, total,
                            inconsistency_steps=tuple(inconsistent_at))


def validate(
    spec: LifestateSpec,
    trace: Trace,
    cap: int = DEFAULT_INSTANTIATION_CAP,
    timeout: Optional[float] = None,
) -> ValidationReport:
    """Ground the spec against the trace and fold the abstract step over
    its messages; valid iff no step is blocked or bad before the end."""
    ground = ground_spec(spec, trace, cap=cap)
    engine = AbstractEngine(ground)
    deadline = time.monotonic() + timeout if timeout is not None else None
    return validate_ground(engine, trace, deadline)
