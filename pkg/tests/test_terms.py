import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import ATOMS, A, B, K, a, b, c, da, db, ground_terms, patterns
from pclbench.config import SemanticsConfig
from pclbench.terms import (
    Agent, DhG, DhH, Enc, Hash, Nonce, Pair, Sig, TermError, UnboundVariable, Var, apply,
    contains, equal_mod_theory, match_term, normalize_dh, show, size, subsort, subterms, tup,
)

ON = SemanticsConfig(dh_theory=True)
OFF = SemanticsConfig()
UNTYPED = SemanticsConfig(typed=False)


def test_contains_examples():
    y, m = Nonce("y"), Nonce("m")
    assert contains(Sig(tup(y, m, A), B), m)
    assert contains(m, m)
    assert not contains(Enc(m, K), Nonce("n"))


def test_contains_reaches_key_positions():
    assert contains(Enc(a, K), K)
    assert contains(Hash(a, b), b)
    assert contains(Sig(a, B), B)
    assert contains(DhH(da, db), db)


def test_contains_rejects_variables():
    with pytest.raises(TermError):
        contains(Var("x"), a)


def test_contains_uses_theory():
    assert contains(Pair(a, DhH(db, da)), DhH(da, db), ON)
    assert not contains(Pair(a, DhH(db, da)), DhH(da, db), OFF)


def test_normalize_examples():
    lo, hi = sorted([da, db])
    assert normalize_dh(DhH(hi, lo), ON) == DhH(lo, hi)
    assert normalize_dh(DhH(hi, lo), OFF) == DhH(hi, lo)


def test_equal_mod_theory_examples():
    assert equal_mod_theory(DhH(da, db), DhH(db, da), ON)
    assert not equal_mod_theory(DhH(da, db), DhH(db, da), OFF)
    assert equal_mod_theory(DhG(da), DhG(da), OFF)


def test_match_examples():
    x = Var("x", "nonce")
    assert match_term(x, a, None, OFF) == {x: a}
    sig = Sig(tup(b, c, A), B)
    assert match_term(x, sig, None, OFF) is None
    assert match_term(x, sig, None, UNTYPED) == {x: sig}
    v = Var("v", "dhpriv")
    assert match_term(DhH(v, db), DhH(db, da), None, ON) == {v: da}
    assert match_term(DhH(v, db), DhH(db, da), None, OFF) is None


def test_match_rejects_open_ground_side():
    with pytest.raises(TermError):
        match_term(Var("x"), Var("y"))


def test_apply_examples():
    x = Var("x", "nonce")
    assert apply({x: a}, Enc(x, K)) == Enc(a, K)
    t = Enc(Pair(a, b), K)
    assert apply({}, t) == t
    va, vb = Var("va", "dhpriv"), Var("vb", "dhpriv")
    got = apply({va: db, vb: da}, DhH(va, vb), ON)
    assert got == normalize_dh(DhH(db, da), ON)
    with pytest.raises(UnboundVariable):
        apply({}, Enc(x, K))
    assert apply({}, Enc(x, K), partial=True) == Enc(x, K)


def test_tuples_are_right_nested():
    assert tup(a, b, c) == Pair(a, Pair(b, c))
    assert show(tup(a, b, c)) == "(a,b,c)"
    assert tup(a, b, c).height == 1


# -- exhaustive checks over small alphabets ---------------------------------

ALPHA = (a, b, A)


def _grow(level, builders):
    out = list(level)
    for f, arity in builders:
        for args in itertools.product(level, repeat=arity):
            out.append(f(*args))
    return list(dict.fromkeys(out))


def _all_terms(depth, builders):
    level = list(ALPHA)
    for _ in range(depth):
        level = _grow(level, builders)
    return level


DH_BUILDERS = [(DhG, 1), (DhH, 2)]
ALL_BUILDERS = [(Pair, 2), (Enc, 2), (Hash, 2), (Sig, 2), (DhG, 1), (DhH, 2)]


@pytest.fixture(scope="module")
def dh_depth3():
    return _all_terms(3, DH_BUILDERS)


@pytest.fixture(scope="module")
def all_depth2():
    return _all_terms(2, ALL_BUILDERS)


def test_normalize_idempotent_exhaustive(dh_depth3, all_depth2):
    for t in itertools.chain(dh_depth3, all_depth2):
        n = normalize_dh(t, ON)
        assert normalize_dh(n, ON) == n
        assert size(n) == size(t)
        assert normalize_dh(t, OFF) is t


def test_contains_reflexive_transitive_exhaustive(dh_depth3, all_depth2):
    for t in itertools.chain(dh_depth3, all_depth2):
        assert contains(t, t)
        for s in set(subterms(t)):
            assert contains(t, s)
            for u in set(subterms(s)):
                assert contains(t, u)


def test_contains_is_exactly_subterm_exhaustive(all_depth2):
    sample = all_depth2[:: max(1, len(all_depth2) // 300)]
    for t, s in itertools.product(sample, repeat=2):
        assert contains(t, s, OFF) == (s in set(subterms(t)))


# -- properties -------------------------------------------------------------


@given(ground_terms(), ground_terms(), ground_terms())
def test_contains_transitive(t1, t2, t3):
    if contains(t1, t2) and contains(t2, t3):
        assert contains(t1, t3)


@given(ground_terms())
def test_contains_reflexive(t):
    assert contains(t, t, OFF) and contains(t, t, ON)


@given(ground_terms())
def test_normalize_idempotent_and_size_preserving(t):
    n = normalize_dh(t, ON)
    assert normalize_dh(n, ON) == n
    assert size(n) == size(t)
    assert normalize_dh(t, OFF) == t


@given(ground_terms(), ground_terms(), ground_terms())
def test_equal_mod_theory_is_equivalence(t1, t2, t3):
    for cfg in (ON, OFF):
        assert equal_mod_theory(t1, t1, cfg)
        assert equal_mod_theory(t1, t2, cfg) == equal_mod_theory(t2, t1, cfg)
        if equal_mod_theory(t1, t2, cfg) and equal_mod_theory(t2, t3, cfg):
            assert equal_mod_theory(t1, t3, cfg)
    assert equal_mod_theory(t1, t2, OFF) == (t1 == t2)


def _swap_dh(t):
    if isinstance(t, DhH):
        return DhH(_swap_dh(t.second), _swap_dh(t.first))
    kids = t.children()
    return t.rebuild(tuple(_swap_dh(k) for k in kids)) if kids else t


@given(ground_terms())
def test_swapping_dh_arguments_is_invisible_under_theory(t):
    assert equal_mod_theory(t, _swap_dh(t), ON)


@settings(max_examples=300)
@given(patterns(), st.data())
def test_match_sound_and_typed_subset(p, data):
    # build a ground instance of the pattern, perturbed sometimes
    vs = sorted({v for v in subterms(p) if isinstance(v, Var)}, key=lambda v: v.name)
    sigma = {v: data.draw(ground_terms(4)) for v in vs}
    g = apply(sigma, p, OFF)
    if data.draw(st.booleans()):
        g = data.draw(ground_terms())
    for dh in (False, True):
        t_cfg = SemanticsConfig(typed=True, dh_theory=dh)
        u_cfg = SemanticsConfig(typed=False, dh_theory=dh)
        mt = match_term(p, g, None, t_cfg)
        mu = match_term(p, g, None, u_cfg)
        for m, cfg in ((mt, t_cfg), (mu, u_cfg)):
            if m is not None:
                assert equal_mod_theory(apply(m, p, cfg), g, cfg)
        if mt is not None:
            assert mu is not None
            assert all(subsort(val.sort, v.var_sort) for v, val in mt.items())


@given(patterns(), st.data())
def test_untyped_match_finds_the_generating_substitution(p, data):
    vs = {v for v in subterms(p) if isinstance(v, Var)}
    sigma = {v: data.draw(ground_terms(4)) for v in vs}
    g = apply(sigma, p, UNTYPED)
    assert match_term(p, g, None, UNTYPED) is not None


def test_brute_force_dh_orientation():
    # both orientations tried, compared against direct enumeration
    v = Var("v", "dhpriv")
    for x, y in itertools.product([da, db, Nonce("dc", kind="dhpriv")], repeat=2):
        g = DhH(x, y)
        m = match_term(DhH(v, db), g, None, ON)
        brute = [w for w in (x, y) if normalize_dh(DhH(w, db), ON) == normalize_dh(g, ON)]
        assert (m is None) == (not brute)
        if m is not None:
            assert m[v] in brute


def test_atoms_sorts():
    assert {t.sort for t in ATOMS} >= {"agent", "nonce", "dhpriv", "symkey", "asymkey"}
    assert Agent("A") == A and hash(Agent("A")) == hash(A)
