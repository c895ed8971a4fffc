import json

import pytest

from pclbench import axioms, bench, repro
from pclbench.axioms import FeatureMismatch
from pclbench.bench import COUNTEREXAMPLE, HOLDS
from pclbench.config import Bounds, SemanticsConfig
from pclbench.protocol import permute_basic_sequences
from pclbench.repro import fixture

TYPED = SemanticsConfig()
B1 = Bounds(1, 14, 4)
B2 = Bounds(2, 14, 4)


def test_catalogue_is_well_formed():
    names = axioms.names()
    assert len(names) == len(set(names))
    for n in names:
        e = axioms.get(n)
        assert e.formula is not None
    assert axioms.get("ver").name == "VER"
    with pytest.raises(KeyError):
        axioms.get("NOPE")


def test_dh_axioms_need_the_theory(cr):
    with pytest.raises(FeatureMismatch):
        bench.check(fixture("dh_min"), axioms.get("DH1"), B1, TYPED)


@pytest.mark.parametrize("fx,name,cfg,bounds", [
    ("hash3", "HASH3", TYPED, B1),
    ("cr", "GAMMA1", SemanticsConfig(typed=False), B2),
    ("q_prime", "GAMMA1", TYPED, B2),
    ("sec_shared", "SEC", SemanticsConfig(key_scheme="symmetric"), B2),
    ("cr", "AR1-honest", TYPED, B1),
])
def test_witnesses_replay_false(fx, name, cfg, bounds):
    v = bench.check(fixture(fx), axioms.get(name), bounds, cfg)
    assert v.outcome == COUNTEREXAMPLE
    assert v.witness.replays_false()
    assert v.witness.events


def test_leaked_key_witness_replays_false():
    v = bench.check(repro.leaked_cr(), axioms.get("VER"), B2, TYPED)
    assert v.outcome == COUNTEREXAMPLE and v.witness.replays_false()


def test_ar1_holds(cr):
    assert bench.check(cr, axioms.get("AR1"), B2, TYPED).holds


def test_verdicts_are_deterministic(cr):
    f = axioms.get("GAMMA1")
    cfg = SemanticsConfig(typed=False)
    v1 = bench.check(cr, f, B2, cfg).to_dict(timing=False)
    v2 = bench.check(cr, f, B2, cfg).to_dict(timing=False)
    assert v1 == v2
    json.dumps(v1)


def test_parallel_matches_sequential(cr):
    f = axioms.get("GAMMA1")
    cfg = SemanticsConfig(typed=False)
    seq = bench.check(cr, f, B2, cfg).to_dict(timing=False)
    par = bench.check(cr, f, B2, cfg, workers=3).to_dict(timing=False)
    assert seq["outcome"] == par["outcome"]
    assert seq["witness"] == par["witness"]


def test_parallel_holds_counts_every_run(cr):
    f = axioms.get("VER")
    seq = bench.check(cr, f, B2, TYPED)
    par = bench.check(cr, f, B2, TYPED, workers=2)
    assert seq.holds and par.holds and seq.runs == par.runs


def test_formula_text_is_accepted(cr):
    v = bench.check(cr, "forall thread X, m. Receive(X, m) => exists party Z. Send(Z, m)", B1, TYPED)
    assert v.holds


def test_honesty_mode_gamma1_on_cr(cr):
    f = axioms.get("GAMMA1")
    off = bench.check_honesty_mode(cr, f, B1, TYPED)
    assert list(off) == ["BS1", "BS2", "BS3", "BS4"]
    assert off["BS2"].outcome == COUNTEREXAMPLE
    assert off["BS2"].witness.replays_false()
    on = bench.check_honesty_mode(cr, f, B1, TYPED.with_(precedence_rule=True))
    assert all(v.outcome == HOLDS for v in on.values())


def test_block_roles_fix_free_variables(cr):
    blocks = bench.block_roles(cr, precedence=False)
    bs2 = next(b for b in blocks if b.seq.label == "BS2")
    assert {v.name for v, _ in bs2.role.fixed} == {"m"}
    with_prefix = bench.block_roles(cr, precedence=True)
    bs2p = next(b for b in with_prefix if b.seq.label == "BS2")
    assert bs2p.role.fixed == () and bs2p.prefix_len == 2


@pytest.mark.parametrize("name", ["GAMMA1", "ECHO-BEFORE-SIGN", "AR1", "VER"])
def test_permutation_invariance_without_precedence(name):
    p1 = fixture("perm")
    p2 = permute_basic_sequences(p1, "Chain", (3, 2, 1))
    f = axioms.get(name)
    r1 = bench.check_honesty_mode(p1, f, B1, TYPED)
    r2 = bench.check_honesty_mode(p2, f, B1, TYPED)
    assert bench.sequence_outcomes(p1, r1) == bench.sequence_outcomes(p2, r2)


def test_hash_collapse_counts():
    tot, good = bench.hash_collapse_stats(fixture("hash_typical"), B1, TYPED)
    assert tot > 0 and tot == good
    tot, good = bench.hash_collapse_stats(fixture("hash3"), B1, TYPED)
    assert good < tot


def test_verdict_text_mentions_outcome(cr):
    v = bench.check(fixture("hash3"), axioms.get("HASH3"), B1, TYPED)
    text = v.to_text()
    assert COUNTEREXAMPLE in text and "failing instance" in text
