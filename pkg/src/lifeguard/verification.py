"""Dynamic predictive-trace verification.

The trace is split into callback units: maximal depth-0 cb..cbret segments,
each the entire execution of one event-dispatched callback.  Verification
explores every sequence of unit repetitions the spec admits -- at unit
boundaries it branches over the units whose opening callback is currently
permitted, inside a unit it folds the abstract step -- and decides by
explicit-state reachability whether any such sequence reaches a prohibited
in-message.  The result is a minimal violation witness or a proof that no
rearrangement reaches bad.
"""

from __future__ import annotations

import itertools
import os
import time
from collections import deque
from dataclasses import dataclass
from typing import Optional, Union

from .abstract import AbstractEngine, AbstractState, BadState, Blocked
from .grounding import DEFAULT_INSTANTIATION_CAP, ground_spec
from .messages import CB, CBRET, CI, CIRET, Message, Trace, is_violation
from .rules import LifestateSpec


class SubTraceError(Exception):
    pass


class VerificationTimeout(Exception):
    pass


DEFAULT_STATE_CAP = 5_000_000
STATE_CAP_ENV = "LIFEGUARD_STATE_CAP"


@dataclass(frozen=True)
class SubTrace:
    """One callback unit: begins with a cb at depth 0 and ends with its
    matching cbret; internal messages are well-nested."""

    messages: tuple[Message, ...]
    index: int

    def opening(self) -> Message:
        return self.messages[0]


def split_subtraces(t: Trace) -> list[SubTrace]:
    """Maximal depth-0 cb..cbret segments, in order.

    The trace must be dis-free; a depth-0 in-message (a callin with no
    enclosing callback) or a trace ending inside a unit is malformed."""
    if is_violation(t):
        raise SubTraceError("cannot split a dis-terminated trace into units")
    units: list[SubTrace] = []
    current: list[Message] = []
    depth = 0
    for i, m in enumerate(t.messages):
        if depth == 0:
            if m.kind != CB:
                raise SubTraceError(
                    f"message {i + 1}: {m} at depth 0 is not a callback entry "
                    "(malformed event-loop trace)"
                )
            current = [m]
            depth = 1
            continue
        current.append(m)
        if m.kind in (CB, CI):
            depth += 1
        elif m.kind in (CBRET, CIRET):
            depth -= 1
            if depth == 0:
                units.append(SubTrace(tuple(current), len(units)))
                current = []
    if depth != 0:
        raise SubTraceError("trace ends inside a callback unit")
    return units


@dataclass(frozen=True)
class Safe:
    """No reachable rearrangement hits a prohibited in-message."""

    states_explored: int
    certificate_size: int
    unreachable_units: tuple[int, ...] = ()


@dataclass(frozen=True)
class Violation:
    witness: Trace
    subtrace_sequence: tuple[int, ...]
    states_explored: int = 0


@dataclass(frozen=True)
class Unknown:
    bound_hit: bool
    states_explored: int = 0
    reason: str = ""


VerificationResult = Union[Safe, Violation, Unknown]


def _parse_mode(mode) -> Optional[int]:
    """None for exhaustive, otherwise the unit bound."""
    if mode in ("exhaustive", None):
        return None
    if isinstance(mode, int):
        return mode
    if isinstance(mode, tuple) and mode[0] == "bounded":
        return int(mode[1])
    if isinstance(mode, str) and mode.startswith("bounded:"):
        return int(mode.split(":", 1)[1])
    raise ValueError(f"unknown verification mode {mode!r}")


def _replay_unit(engine: AbstractEngine, state: AbstractState, unit: SubTrace):
    """Fold the unit's messages; returns ('ok', state'), ('blocked', msg at
    offset), or ('bad', witness prefix messages, dis message)."""
    consumed: list[Message] = []
    for m in unit.messages:
        result = engine.step(state, m)
        if isinstance(result, Blocked):
            return ("blocked", consumed, m)
        if isinstance(result, BadState):
            return ("bad", consumed, result.witness_suffix)
        consumed.append(m)
        state = result
    return ("ok", state, None)


def verify(
    spec: LifestateSpec,
    trace: Trace,
    mode="exhaustive",
    state_cap: Optional[int] = None,
    grounding_cap: int = DEFAULT_INSTANTIATION_CAP,
    timeout: Optional[float] = None,
) -> VerificationResult:
    """Breadth-first reachability over abstract states at unit boundaries.

    BFS order guarantees a witness with the fewest units, ties broken by
    the lowest unit index sequence.  Exhaustive mode terminates because the
    abstract state space is finite; bounded mode caps the number of units
    per path and may return Unknown."""
    if is_violation(trace):
        # The recorded execution already witnesses the violation.
        return Violation(witness=trace, subtrace_sequence=(), states_explored=0)
    bound = _parse_mode(mode)
    if state_cap is None:
        state_cap = int(os.environ.get(STATE_CAP_ENV, DEFAULT_STATE_CAP))
    deadline = time.monotonic() + timeout if timeout is not None else None

    units = split_subtraces(trace)
    ground = ground_spec(spec, trace, cap=grounding_cap)
    engine = AbstractEngine(ground)

    init = engine.initial_state()
    visited: dict[AbstractState, int] = {init: 0}
    # Queue entries: (state, depth, path, messages-so-far).
    queue = deque([(init, 0, (), ())])
    explored = 0
    opened_units: set[int] = set()
    truncated = False

    while queue:
        if deadline is not None and time.monotonic() > deadline:
            return Unknown(bound_hit=False, states_explored=explored, reason="timeout")
        state, depth, path, history = queue.popleft()
        if bound is not None and depth >= bound:
            # Would this state still have somewhere to go?
            if any(u.opening() in state.permitted for u in units):
                truncated = True
            continue
        explored += 1
        for unit in units:
            opening = unit.opening()
            if opening in engine.alphabet_set and opening not in state.permitted:
                continue
            opened_units.add(unit.index)
            outcome = _replay_unit(engine, state, unit)
            if outcome[0] == "bad":
                _, consumed, dis_msg = outcome
                witness_messages = tuple(history) + tuple(consumed) + (dis_msg,)
                return Violation(
                    witness=Trace(witness_messages),
                    subtrace_sequence=path + (unit.index,),
                    states_explored=explored,
                )
            if outcome[0] == "blocked":
                # This repetition is not realizable under the spec.
                continue
            _, nxt, _ = outcome
            if nxt not in visited:
                if len(visited) >= state_cap:
                    return Unknown(bound_hit=False, states_explored=explored,
                                   reason=f"state cap {state_cap} exceeded")
                visited[nxt] = depth + 1
                queue.append((nxt, depth + 1, path + (unit.index,),
                              tuple(history) + unit.messages))
    unreachable = tuple(u.index for u in units if u.index not in opened_units)
    if truncated:
        return Unknown(bound_hit=True, states_explored=explored,
                       reason="unit bound reached before closing the state space")
    return Safe(states_explored=explored, certificate_size=len(visited),
                unreachable_units=unreachable)


def brute_force_verify(
    spec: LifestateSpec,
    trace: Trace,
    k: int,
    grounding_cap: int = DEFAULT_INSTANTIATION_CAP,
    timeout: Optional[float] = None,
) -> VerificationResult:
    """Independent oracle: enumerate every sequence of up to k units
    explicitly, folding the abstract step from scratch per sequence.

    Agrees with bounded verification on the violation verdict at depth k;
    sequences interrupted by a blocked back-message are unrealizable and
    skipped."""
    if is_violation(trace):
        return Violation(witness=trace, subtrace_sequence=(), states_explored=0)
    deadline = time.monotonic() + timeout if timeout is not None else None
    units = split_subtraces(trace)
    ground = ground_spec(spec, trace, cap=grounding_cap)
    engine = AbstractEngine(ground)
    sequences_run = 0
    for length in range(1, k + 1):
        for seq in itertools.product(range(len(units)), repeat=length):
            if deadline is not None and time.monotonic() > deadline:
                raise VerificationTimeout(
                    f"brute-force enumeration timed out after {sequences_run} sequences"
                )
            sequences_run += 1
            state = engine.initial_state()
            history: list[Message] = []
            blocked = False
            for pos, ui in enumerate(seq):
                unit = units[ui]
                opening = unit.opening()
                if opening in engine.alphabet_set and opening not in state.permitted:
                    blocked = True
                    break
                outcome = _replay_unit(engine, state, unit)
                if outcome[0] == "blocked":
                    blocked = True
                    break
                if outcome[0] == "bad":
                    _, consumed, dis_msg = outcome
                    witness = Trace(tuple(history) + tuple(consumed) + (dis_msg,))
                    return Violation(witness=witness,
                                     subtrace_sequence=tuple(seq[: pos + 1]),
                                     states_explored=sequences_run)
                _, state, _ = outcome
                history.extend(unit.messages)
            if blocked:
                continue
    return Unknown(bound_hit=True, states_explored=sequences_run,
                   reason=f"no violation within {k} units")
