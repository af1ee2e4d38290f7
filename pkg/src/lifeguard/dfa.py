"""Regular expressions over a finite letter alphabet, compiled to total
DFAs via Brzozowski derivatives.

Derivatives handle complement and intersection natively, so the compiler
needs no separate NFA/product/complementation passes.  Letters are integer
indices; the caller reserves the last index for the OTHER class covering
every message outside the ground alphabet.  Termination of the state
exploration relies on the smart constructors normalizing union/intersection
to canonical flat, sorted, duplicate-free forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable


class Re:
    __slots__ = ()


@dataclass(frozen=True)
class RSym(Re):
    letter: int


@dataclass(frozen=True)
class RAny(Re):
    """Matches exactly one letter, whichever it is (including OTHER)."""


@dataclass(frozen=True)
class REps(Re):
    pass


@dataclass(frozen=True)
class REmpty(Re):
    pass


@dataclass(frozen=True)
class RCat(Re):
    left: Re
    right: Re


@dataclass(frozen=True)
class RStar(Re):
    inner: Re


@dataclass(frozen=True)
class ROr(Re):
    items: tuple[Re, ...]  # canonical: sorted, flat, deduplicated, len >= 2


@dataclass(frozen=True)
class RAnd(Re):
    items: tuple[Re, ...]


@dataclass(frozen=True)
class RNot(Re):
    inner: Re


EPS = REps()
EMPTY = REmpty()
ANY = RAny()
UNIVERSAL = RNot(EMPTY)  # accepts every word


def _key(r: Re) -> tuple:
    if isinstance(r, RSym):
        return (0, r.letter)
    if isinstance(r, RAny):
        return (1,)
    if isinstance(r, REps):
        return (2,)
    if isinstance(r, REmpty):
        return (3,)
    if isinstance(r, RCat):
        return (4, _key(r.left), _key(r.right))
    if isinstance(r, RStar):
        return (5, _key(r.inner))
    if isinstance(r, ROr):
        return (6, tuple(_key(i) for i in r.items))
    if isinstance(r, RAnd):
        return (7, tuple(_key(i) for i in r.items))
    if isinstance(r, RNot):
        return (8, _key(r.inner))
    raise TypeError(type(r).__name__)


def mk_cat(left: Re, right: Re) -> Re:
    if isinstance(left, REmpty) or isinstance(right, REmpty):
        return EMPTY
    if isinstance(left, REps):
        return right
    if isinstance(right, REps):
        return left
    if isinstance(left, RCat):  # right-associate for canonical form
        return mk_cat(left.left, mk_cat(left.right, right))
    return RCat(left, right)


def mk_star(inner: Re) -> Re:
    if isinstance(inner, (REps, REmpty)):
        return EPS
    if isinstance(inner, RStar):
        return inner
    return RStar(inner)


def mk_or(items: Iterable[Re]) -> Re:
    flat: list[Re] = []

    def add(r: Re) -> None:
        if isinstance(r, ROr):
            for i in r.items:
                add(i)
        elif not isinstance(r, REmpty):
            flat.append(r)

    for r in items:
        add(r)
    if any(r == UNIVERSAL for r in flat):
        return UNIVERSAL
    unique = sorted(set(flat), key=_key)
    if not unique:
        return EMPTY
    if len(unique) == 1:
        return unique[0]
    return ROr(tuple(unique))


def mk_and(items: Iterable[Re]) -> Re:
    flat: list[Re] = []

    def add(r: Re) -> None:
        if isinstance(r, RAnd):
            for i in r.items:
                add(i)
        elif r != UNIVERSAL:
            flat.append(r)

    for r in items:
        add(r)
    if any(isinstance(r, REmpty) for r in flat):
        return EMPTY
    unique = sorted(set(flat), key=_key)
    if not unique:
        return UNIVERSAL
    if len(unique) == 1:
        return unique[0]
    return RAnd(tuple(unique))


def mk_not(inner: Re) -> Re:
    if isinstance(inner, RNot):
        return inner.inner
    return RNot(inner)


@lru_cache(maxsize=None)
def nullable(r: Re) -> bool:
    if isinstance(r, (REps, RStar)):
        return True
    if isinstance(r, (RSym, RAny, REmpty)):
        return False
    if isinstance(r, RCat):
        return nullable(r.left) and nullable(r.right)
    if isinstance(r, ROr):
        return any(nullable(i) for i in r.items)
    if isinstance(r, RAnd):
        return all(nullable(i) for i in r.items)
    if isinstance(r, RNot):
        return not nullable(r.inner)
    raise TypeError(type(r).__name__)


@lru_cache(maxsize=None)
def deriv(r: Re, letter: int) -> Re:
    if isinstance(r, RSym):
        return EPS if r.letter == letter else EMPTY
    if isinstance(r, RAny):
        return EPS
    if isinstance(r, (REps, REmpty)):
        return EMPTY
    if isinstance(r, RCat):
        first = mk_cat(deriv(r.left, letter), r.right)
        if nullable(r.left):
            return mk_or((first, deriv(r.right, letter)))
        return first
    if isinstance(r, RStar):
        return mk_cat(deriv(r.inner, letter), r)
    if isinstance(r, ROr):
        return mk_or(deriv(i, letter) for i in r.items)
    if isinstance(r, RAnd):
        return mk_and(deriv(i, letter) for i in r.items)
    if isinstance(r, RNot):
        return mk_not(deriv(r.inner, letter))
    raise TypeError(type(r).__name__)


@dataclass(frozen=True)
class Dfa:
    """A total deterministic automaton over letters 0..n_letters-1."""

    n_letters: int
    transitions: tuple[tuple[int, ...], ...]  # transitions[state][letter]
    accepting: tuple[bool, ...]
    start: int = 0

    @property
    def n_states(self) -> int:
        return len(self.transitions)

    def step(self, state: int, letter: int) -> int:
        return self.transitions[state][letter]

    def accepts(self, word: Iterable[int]) -> bool:
        state = self.start
        for letter in word:
            state = self.transitions[state][letter]
        return self.accepting[state]


def build_dfa(regex: Re, n_letters: int, state_cap: int = 100000) -> Dfa:
    """Iterated-derivative construction; states are canonical regexes."""
    index: dict[Re, int] = {regex: 0}
    order: list[Re] = [regex]
    transitions: list[tuple[int, ...]] = []
    pos = 0
    while pos < len(order):
        current = order[pos]
        row = []
        for letter in range(n_letters):
            nxt = deriv(current, letter)
            sid = index.get(nxt)
            if sid is None:
                sid = len(order)
                if sid > state_cap:
                    raise RuntimeError(f"DFA construction exceeded {state_cap} states")
                index[nxt] = sid
                order.append(nxt)
            row.append(sid)
        transitions.append(tuple(row))
        pos += 1
    accepting = tuple(nullable(r) for r in order)
    return Dfa(n_letters, tuple(transitions), accepting)
