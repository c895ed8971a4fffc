import itertools

from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import A, B, K, a, b, da, db, ground_terms
from oracles import closure, goal_pool, knowledge_pool
from pclbench.config import SemanticsConfig
from pclbench.deduction import Knowledge, decryption_key, derive
from pclbench.terms import DhG, DhH, Enc, Hash, Pair, PrivKey, PubKey, Sig, normalize_dh

SPLIT = SemanticsConfig()
ON = SemanticsConfig(dh_theory=True)


def test_spec_examples():
    assert derive([a, K], Enc(a, K), SPLIT, 3)
    assert not derive([Enc(a, K)], a, SPLIT, 3)
    assert derive([da, DhG(db)], DhH(db, da), ON, 3)
    assert not derive([da, DhG(db)], DhH(db, da), SPLIT, 3)
    assert derive([da, DhG(db)], DhH(da, db), SPLIT, 3)
    assert not derive([Hash(a, K)], a, SPLIT, 3)


def test_key_schemes():
    c = Enc(a, A)
    assert decryption_key(A, "split") == PrivKey(A)
    assert decryption_key(K, "split") == K
    assert decryption_key(K, "asymmetric") is None
    assert derive([c, PrivKey(A)], a, SPLIT, 3)
    assert not derive([c, A], a, SPLIT, 3)
    assert derive([c, A], a, SemanticsConfig(key_scheme="symmetric"), 3)
    assert derive([Enc(a, PrivKey(B)), PubKey(B)], a, SPLIT, 3)


def test_signatures():
    assert derive([Sig(a, A)], a, SPLIT, 3)
    assert not derive([Sig(a, A)], a, SPLIT.with_(sig_reveals_payload=False), 3)
    assert not derive([a], Sig(a, A), SPLIT, 3)
    assert derive([a, PrivKey(A)], Sig(a, A), SPLIT, 3)


def test_depth_bounds_synthesis_but_not_subterms():
    deep = Enc(Enc(Enc(a, K), K), K)
    assert deep.height == 3
    assert not derive([a, K], deep, SPLIT, 2)
    assert derive([a, K], deep, SPLIT, 3)
    # a term already seen as a subterm is always in range
    assert derive([a, K, Pair(b, deep)], deep, SPLIT, 1)


def test_extend_matches_fresh_construction():
    base = [Enc(a, K), Pair(b, Enc(K, PubKey(A)))]
    k1 = Knowledge(base, SPLIT, 3).extend([PrivKey(A)])
    k2 = Knowledge(base + [PrivKey(A)], SPLIT, 3)
    for g in [a, K, b, Pair(a, b), Hash(a, K)]:
        assert k1.derivable(g) == k2.derivable(g)
    assert k1.derivable(a)


@settings(max_examples=150, deadline=None)
@given(st.lists(ground_terms(8), max_size=4), st.lists(ground_terms(8), max_size=2),
       ground_terms(8), st.booleans())
def test_derivability_is_monotone(k, extra, goal, dh):
    cfg = SemanticsConfig(dh_theory=dh)
    if derive(k, goal, cfg, 3):
        assert derive(k + extra, goal, cfg, 3)
        assert derive(k, goal, cfg, 4)


@settings(max_examples=150, deadline=None)
@given(st.lists(ground_terms(8), max_size=4), st.booleans())
def test_knowledge_is_derivable(k, dh):
    cfg = SemanticsConfig(dh_theory=dh)
    kn = Knowledge(k, cfg, 2)
    assert all(kn.derivable(t) for t in k)


@settings(max_examples=100, deadline=None)
@given(st.lists(ground_terms(8), max_size=3), ground_terms(6), st.booleans(),
       st.sampled_from(["split", "symmetric", "asymmetric"]), st.integers(1, 3))
def test_agrees_with_closure_on_random_sets(k, goal, dh, scheme, depth):
    cfg = SemanticsConfig(dh_theory=dh, key_scheme=scheme)
    c = closure(k, [goal], cfg, depth)
    assert derive(k, goal, cfg, depth) == (normalize_dh(goal, cfg) in c)


def test_agrees_with_closure_at_shallow_depths():
    pool, goals = knowledge_pool(), goal_pool()
    for depth in (1, 2):
        for cfg in (SPLIT, ON):
            for K_ in itertools.combinations(pool, 2):
                c = closure(K_, goals, cfg, depth)
                kn = Knowledge(K_, cfg, depth)
                for g in goals:
                    assert kn.derivable(g) == (normalize_dh(g, cfg) in c), (K_, g, depth)
