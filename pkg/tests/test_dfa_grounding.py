import itertools
import random

import pytest

from lifeguard import dfa as D
from lifeguard.grounding import (
    GroundingError,
    compile_rule,
    compile_spec,
    ground_spec,
    value_universe,
)
from lifeguard.messages import (
    APP,
    FALSE,
    FWK,
    UNIT,
    FunctionSymbol,
    Message,
    ObjectId,
    Thunk,
    Trace,
    parse_trace,
)
from lifeguard.rules import (
    MAny,
    MAtom,
    MConcat,
    MEmpty,
    MEps,
    MIntersect,
    MNegate,
    MStar,
    MUnion,
    PLit,
    ParamMessage,
    free_vars,
    matches,
    parse_spec,
    rule_annotations,
)

from gen import random_trace

A1 = ObjectId("a", 1, "Activity")
T1 = ObjectId("t", 1, "AsyncTask")
B1 = ObjectId("b", 1, "Button")
L1 = ObjectId("l", 1, "OnClickListener")


def ci(name, *args):
    return Message("ci", Thunk(FunctionSymbol(name, FWK), tuple(args)))


# ---------------------------------------------------------------------------
# Brute-force language oracle: the set of accepted words up to a length
# bound, computed directly from the matcher semantics with length-bucketed
# sets so concatenation stays exact for the bounded universe.


def brute_language(matcher, letters, max_len):
    universe = {
        w for k in range(max_len + 1) for w in itertools.product(letters, repeat=k)
    }

    def lang(m):
        if isinstance(m, MAtom):
            msg = m.message.to_message()
            return {(msg,)} if msg in letters else set()
        if isinstance(m, MAny):
            return {(l,) for l in letters}
        if isinstance(m, MEps):
            return {()}
        if isinstance(m, MEmpty):
            return set()
        if isinstance(m, MConcat):
            left, right = lang(m.left), lang(m.right)
            out = set()
            for w1 in left:
                room = max_len - len(w1)
                for w2 in right:
                    if len(w2) <= room:
                        out.add(w1 + w2)
            return out
        if isinstance(m, MUnion):
            return lang(m.left) | lang(m.right)
        if isinstance(m, MIntersect):
            return lang(m.left) & lang(m.right)
        if isinstance(m, MNegate):
            return universe - lang(m.inner)
        if isinstance(m, MStar):
            base = lang(m.inner)
            out = {()}
            frontier = {()}
            while frontier:
                new = set()
                for w in frontier:
                    room = max_len - len(w)
                    for piece in base:
                        if 0 < len(piece) <= room:
                            cand = w + piece
                            if cand not in out:
                                new.add(cand)
                out |= new
                frontier = new
            return out
        raise TypeError(type(m).__name__)

    return lang(matcher), universe


LETTERS = (ci("f"), ci("g"), ci("h"))
A, B, C = (MAtom(ParamMessage("ci", m.thunk.fun.name, (), None)) for m in LETTERS)


def compile_matcher(matcher, letters):
    letter_of = {m: i for i, m in enumerate(letters)}
    regex = D.build_dfa(_translate(matcher, letter_of), n_letters=len(letters) + 1)
    return regex, letter_of


def _translate(matcher, letter_of):
    from lifeguard.grounding import _translate as translate

    return translate(matcher, letter_of)


OPERATOR_COVERAGE = [
    MEps(),
    A,
    MConcat(MStar(MAny()), A),              # suffix trigger
    MConcat(A, MStar(MAny())),              # prefix trigger
    MStar(MUnion(A, B)),
    MStar(MConcat(A, B)),
    MNegate(MConcat(MStar(MAny()), A)),     # complement of a suffix
    MIntersect(MConcat(MStar(MAny()), A), MConcat(B, MStar(MAny()))),
    MIntersect(MNegate(MEps()), MEps()),    # contradiction: empty language
    MNegate(MEmpty()),                      # universal language
    MConcat(MStar(MAny()), MConcat(A, MStar(MAny()))),            # contains A
    MNegate(MConcat(MStar(MAny()), MConcat(A, MStar(MAny())))),   # avoids A
]


class TestDfaMatcherEquivalence:
    @pytest.mark.parametrize("matcher", OPERATOR_COVERAGE, ids=lambda m: str(m))
    def test_dfa_equals_brute_force_language_up_to_8(self, matcher):
        accepted, universe = brute_language(matcher, LETTERS, max_len=8)
        auto, letter_of = compile_matcher(matcher, LETTERS)
        for word in universe:
            expected = word in accepted
            got = auto.accepts(letter_of[m] for m in word)
            assert got == expected, (str(matcher), [str(m) for m in word])

    @pytest.mark.parametrize("matcher", OPERATOR_COVERAGE, ids=lambda m: str(m))
    def test_dfa_equals_matches_up_to_5_with_other(self, matcher):
        # Words may include an off-alphabet message, exercising the OTHER
        # letter; matches() is the defining semantics.
        other = ci("offworld")
        auto, letter_of = compile_matcher(matcher, LETTERS)
        other_idx = len(LETTERS)
        pool = LETTERS + (other,)
        for k in range(0, 5):
            for word in itertools.product(pool, repeat=k):
                expected = matches(list(word), {}, matcher)
                got = auto.accepts(letter_of.get(m, other_idx) for m in word)
                assert got == expected, (str(matcher), [str(m) for m in word])

    def test_eps_dfa_is_two_states(self):
        auto, _ = compile_matcher(MEps(), LETTERS)
        assert auto.n_states == 2
        assert auto.accepts([])
        assert not auto.accepts([0])

    def test_contradiction_is_empty(self):
        auto, letter_of = compile_matcher(MIntersect(MNegate(MEps()), MEps()), LETTERS)
        assert not auto.accepts([])
        for k in range(3):
            for word in itertools.product(range(len(LETTERS) + 1), repeat=k):
                assert not auto.accepts(word)

    def test_suffix_rule_dfa_accepts_exactly_words_ending_in_letter(self):
        matcher = MConcat(MStar(MAny()), A)
        auto, letter_of = compile_matcher(matcher, LETTERS)
        for k in range(0, 7):
            for word in itertools.product(range(len(LETTERS)), repeat=k):
                assert auto.accepts(word) == (bool(word) and word[-1] == 0)


class TestValueUniverse:
    def test_empty_trace(self):
        u = value_universe(Trace(()))
        assert u.by_type == () and u.constants == ()

    def test_fixed_fixture_universe(self, trace_fixed):
        u = value_universe(trace_fixed)
        assert dict((k, set(v)) for k, v in u.by_type) == {
            "Activity": {A1},
            "AsyncTask": {T1},
            "Button": {B1},
            "OnClickListener": {L1},
        }
        assert set(u.constants) == {FALSE, UNIT}

    def test_two_buttons(self):
        text = (
            "cb onShow(b#1:Button)\n"
            "cbret unit = onShow(b#1:Button)\n"
            "cb onShow(b#2:Button)\n"
            "cbret unit = onShow(b#2:Button)\n"
        )
        u = value_universe(parse_trace(text))
        assert len(u.of_type("Button")) == 2


class TestGroundSpec:
    def test_rule_instance_counts_on_fixed(self, spec_run, trace_fixed):
        g = ground_spec(spec_run, trace_fixed)
        # one AsyncTask; one Button x one OnClickListener
        assert g.instance_counts[0] == 1
        assert g.instance_counts[2] == 1
        by_source = {}
        for r in g.rules:
            by_source.setdefault(r.source_index, []).append(r)
        assert len(by_source[0]) == 1
        assert len(by_source[2]) == 1

    def test_empty_trace_keeps_only_variable_free_rules(self, spec_run):
        g = ground_spec(spec_run, Trace(()))
        assert g.rules == ()
        ground_free = ground_spec(parse_spec("eps -/> ci execute(t#1:AsyncTask)"), Trace(()))
        assert len(ground_free.rules) == 1

    def test_alphabet_closed_under_rule_targets(self, spec_run, trace_fixed):
        g = ground_spec(spec_run, trace_fixed)
        for r in g.rules:
            assert r.target in g.alphabet

    def test_no_symbolic_leftovers(self, spec_run, trace_fixed):
        from lifeguard.rules import matcher_atoms

        g = ground_spec(spec_run, trace_fixed)
        for r in g.rules:
            for atom in matcher_atoms(r.matcher):
                assert atom.is_ground()

    def test_blowup_guard_names_worst_rule(self, spec_run, trace_fixed):
        with pytest.raises(GroundingError, match="cap"):
            ground_spec(spec_run, trace_fixed, cap=3)

    def test_deterministic(self, spec_run, trace_fixed):
        assert ground_spec(spec_run, trace_fixed) == ground_spec(spec_run, trace_fixed)

    def test_grounding_soundness_on_fixture_prefixes(self, spec_run, trace_fixed):
        # Symbolic firing (exists a binding over the universe) coincides
        # with some ground instance firing, on every prefix.
        g = ground_spec(spec_run, trace_fixed)
        u = value_universe(trace_fixed)
        for cut in range(len(trace_fixed) + 1):
            prefix = list(trace_fixed.messages[:cut])
            for idx, rule in enumerate(spec_run.rules):
                annotations = rule_annotations(rule)
                names = sorted(free_vars(rule))
                domains = [
                    u.of_type(annotations[n]) if annotations.get(n) else u.all_values()
                    for n in names
                ]
                symbolic = set()
                for assignment in itertools.product(*domains):
                    binding = dict(zip(names, assignment))
                    if matches(prefix, binding, rule.matcher):
                        from lifeguard.rules import apply_binding

                        symbolic.add(apply_binding(binding, rule.target).to_message())
                ground_fired = {
                    r.target
                    for r in g.rules
                    if r.source_index == idx and matches(prefix, {}, r.matcher)
                }
                assert symbolic == ground_fired, (cut, idx)


class TestCompiledRules:
    def test_dfa_oracle_equivalence_per_rule(self, spec_run, trace_fixed):
        # Every compiled rule agrees with matches() on short words over a
        # 3-letter sub-alphabet of its own alphabet.
        g = ground_spec(spec_run, trace_fixed)
        compiled = compile_spec(g)
        sub = g.alphabet[:3]
        rng = random.Random(5)
        for cr, gr in zip(compiled, g.rules):
            letter_of = {m: i for i, m in enumerate(g.alphabet)}
            for k in range(0, 5):
                for _ in range(20):
                    word = [rng.choice(sub) for _ in range(k)]
                    expected = matches(word, {}, gr.matcher)
                    got = cr.dfa.accepts(letter_of[m] for m in word)
                    assert got == expected

    def test_dfa_total(self, spec_run, trace_fixed):
        g = ground_spec(spec_run, trace_fixed)
        for cr in compile_spec(g):
            n_letters = len(g.alphabet) + 1
            assert cr.dfa.n_letters == n_letters
            for row in cr.dfa.transitions:
                assert len(row) == n_letters
                assert all(0 <= s < cr.dfa.n_states for s in row)


class TestRuleLiteralsVsUniverse:
    def test_rule_literal_in_alphabet_but_not_universe(self, spec_run, trace_buggy):
        # trace_buggy has no setEnabled message, so the literal `false`
        # occurs only inside rule (3); it must reach the alphabet through
        # the ground atom without entering the value universe.
        u = value_universe(trace_buggy)
        assert FALSE not in u.constants
        g = ground_spec(spec_run, trace_buggy)
        set_enabled = [m for m in g.alphabet if m.thunk.fun.name == "setEnabled"]
        assert len(set_enabled) == 1
        assert FALSE in set_enabled[0].thunk.args


class TestLongWordSampling:
    def test_dfa_equals_matches_on_words_up_to_20(self):
        # Random sampling at lengths the exhaustive sweeps cannot reach.
        rng = random.Random(41)
        for matcher in OPERATOR_COVERAGE:
            auto, letter_of = compile_matcher(matcher, LETTERS)
            for _ in range(25):
                k = rng.randint(0, 20)
                word = [rng.choice(LETTERS) for _ in range(k)]
                assert auto.accepts(letter_of[m] for m in word) == \
                    matches(word, {}, matcher), (str(matcher), k)
