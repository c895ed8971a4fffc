"""End-to-end acceptance checks, each with its time budget.

Every test records one PASS/FAIL line; conftest prints them after the run.
"""
import itertools
import time

from hypothesis import given, settings

from helpers import ground_terms
from oracles import closure, goal_pool, knowledge_pool
from pclbench import axioms, bench
from pclbench.bench import COUNTEREXAMPLE, HOLDS
from pclbench.config import Bounds, SemanticsConfig
from pclbench.deduction import Knowledge
from pclbench.engine import enumerate_runs
from pclbench.protocol import Receive
from pclbench.repro import fixture, reproduce
from pclbench.terms import contains, match_term, normalize_dh

RESULTS = []


def _record(n, title, ok, seconds, budget=None):
    within = budget is None or seconds < budget
    status = "PASS" if ok and within else "FAIL"
    limit = "no time limit" if budget is None else f"budget {budget}s"
    RESULTS.append(f"criterion {n:>2} {title}: {status} ({seconds:.2f}s, {limit})")
    print(RESULTS[-1])
    assert ok, f"criterion {n}: outcome mismatch"
    assert within, f"criterion {n}: {seconds:.1f}s over the {budget}s budget"


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def test_01_hash3():
    r, dt = _timed(lambda: reproduce("hash3", Bounds(1, 14, 4)))
    v = r.verdicts[0]
    ok = r.ok and v.outcome == COUNTEREXAMPLE and v.witness.replays_false()
    _record(1, "hash3 counterexample at (1,14,4)", ok, dt, 10)


def test_02_gamma1():
    r1, dt1 = _timed(lambda: reproduce("gamma1-untyped"))
    r2, dt2 = _timed(lambda: reproduce("gamma1-typed"))
    resp = r1.details.get("responder threads in witness", 0)
    ok = r1.ok and r2.ok and resp == 2 and r1.verdicts[0].bounds == r2.verdicts[0].bounds
    _record(2, "gamma1 untyped counterexample / typed holds", ok, max(dt1, dt2), 60)


def test_03_dh_formula2():
    r, dt = _timed(lambda: reproduce("dh-formula2"))
    _record(3, "DH pattern executable only with the theory", r.ok and r.witness is not None, dt, 10)


def test_04_sec_symmetric():
    r, dt = _timed(lambda: reproduce("sec-symmetric"))
    asym, sym = r.verdicts
    ok = r.ok and asym.outcome == HOLDS and sym.outcome == COUNTEREXAMPLE
    _record(4, "SEC asymmetric holds / symmetric fails", ok, dt, 10)


def test_05_q_prime():
    r, dt = _timed(lambda: reproduce("q-prime"))
    run_level, cr_bs2, qp_bs2 = r.verdicts
    ok = r.ok and run_level.outcome == COUNTEREXAMPLE and cr_bs2.outcome == qp_bs2.outcome
    _record(5, "Q' run-level counterexample, identical BS2 verdicts", ok, dt, 30)


def test_06_hash4_collapse():
    r, dt = _timed(lambda: reproduce("hash4-collapse"))
    _record(6, "hash collapse 100% typical, below 100% on hash3", r.ok, dt, 30)


def test_07_permutation():
    r, dt = _timed(lambda: reproduce("permutation"))
    _record(7, "permutation equal without precedence, differs with it", r.ok, dt, 30)


CONFIGS = [
    SemanticsConfig(),
    SemanticsConfig(dh_theory=True),
    SemanticsConfig(key_scheme="symmetric"),
    SemanticsConfig(key_scheme="asymmetric", dh_theory=True),
]


def _derive_sweep():
    pool, goals = knowledge_pool(), goal_pool()
    checked = mismatches = derivable = 0
    for cfg in CONFIGS:
        for size in range(5):
            for K in itertools.combinations(pool, size):
                c = closure(K, goals, cfg, 3)
                kn = Knowledge(K, cfg, 3)
                for g in goals:
                    want = normalize_dh(g, cfg) in c
                    checked += 1
                    derivable += want
                    mismatches += kn.derivable(g) != want
    return checked, mismatches, derivable


def test_08_derive_matches_closure_oracle():
    (checked, mismatches, derivable), dt = _timed(_derive_sweep)
    ok = mismatches == 0 and 0 < derivable < checked
    _record(8, f"derive agrees with closure oracle ({checked} queries)", ok, dt, 60)


def _properties():
    @settings(max_examples=200, deadline=None, database=None)
    @given(ground_terms(), ground_terms(), ground_terms())
    def contains_laws(t1, t2, t3):
        assert contains(t1, t1)
        if contains(t1, t2) and contains(t2, t3):
            assert contains(t1, t3)

    @settings(max_examples=200, deadline=None, database=None)
    @given(ground_terms())
    def normalize_idempotent(t):
        on = SemanticsConfig(dh_theory=True)
        assert normalize_dh(normalize_dh(t, on), on) == normalize_dh(t, on)

    contains_laws()
    normalize_idempotent()

    # typed runs are among untyped runs (as prefixes of maximal ones)
    cr = fixture("cr")
    b = Bounds(1, 10, 3)
    untyped = [tuple((e.tid, e.action) for e in r.events)
               for r in enumerate_runs(cr, b, SemanticsConfig(typed=False), reduction="none")]
    prefixes = {u[:k] for u in untyped for k in range(len(u) + 1)}
    for r in enumerate_runs(cr, b, SemanticsConfig(), reduction="none"):
        assert tuple((e.tid, e.action) for e in r.events) in prefixes

    # witnesses replay to false
    for fx, name, cfg in [("hash3", "HASH3", SemanticsConfig()),
                          ("cr", "GAMMA1", SemanticsConfig(typed=False)),
                          ("q_prime", "GAMMA1", SemanticsConfig())]:
        v = bench.check(fixture(fx), axioms.get(name), Bounds(2, 14, 4), cfg)
        assert v.outcome == COUNTEREXAMPLE and v.witness.replays_false()

    # honest threads follow their role in order, on 1000 runs
    n = 0
    loose = SemanticsConfig(typed=False)
    for r in itertools.islice(enumerate_runs(cr, Bounds(2, 14, 4), loose), 1000):
        for th in r.threads:
            evs = r.thread_events(th.tid)
            assert [e.pc for e in evs] == list(range(len(evs)))
            role = r.role(th.tid)
            sigma = r.sigma(th.tid)
            for e in evs:
                pat = role.actions[e.pc]
                assert type(pat) is type(e.action)
                for pf, gf in zip(pat.fields(), e.action.fields()):
                    assert match_term(pf, gf, sigma, loose) is not None
                if isinstance(e.action, Receive):
                    assert r.intruder_knowledge(e.index).derivable(e.action.msg)
        n += 1
    assert n == 1000
    return True


def test_09_property_suites():
    ok, dt = _timed(_properties)
    _record(9, "term laws, typed subset, replay, prefix invariant", ok, dt)


def test_10_ver_sanity():
    r, dt = _timed(lambda: reproduce("ver-sanity"))
    clean, leaked = r.verdicts
    ok = r.ok and clean.holds and leaked.witness.replays_false()
    _record(10, "VER holds on CR, fails when sk(A) leaks", ok, dt, 30)
