"""Reproduction drivers: each case pairs a fixture, a check and the outcome
the argument predicts, and reports whether the observation agrees."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Dict, List, Optional

from . import axioms, bench
from .bench import COUNTEREXAMPLE, HOLDS, Verdict
from .config import Bounds, SemanticsConfig
from .engine import Run, executable
from .protocol import Protocol, parse_protocol, permute_basic_sequences
from .terms import DhH, Sig, Var, show


def fixture_text(name: str) -> str:
    return resources.files("pclbench").joinpath("fixtures", f"{name}.pcl").read_text()


def fixture(name: str) -> Protocol:
    return parse_protocol(fixture_text(name))


@dataclass
class Report:
    case: str
    expected: str
    observed: str
    ok: bool
    narrative: List[str]
    verdicts: List[Verdict] = field(default_factory=list)
    details: Dict[str, object] = field(default_factory=dict)
    witness: Optional[Run] = None
    seconds: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "case": self.case,
            "expected": self.expected,
            "observed": self.observed,
            "agrees": self.ok,
            "narrative": list(self.narrative),
            "details": dict(self.details),
            "verdicts": [v.to_dict(timing) for v in self.verdicts],
        }
        if self.witness is not None:
            d["witness"] = self.witness.to_text().splitlines()
        if timing:
            d["seconds"] = round(self.seconds, 3)
        return d

    def to_text(self) -> str:
        status = "AGREES" if self.ok else "DISAGREES"
        lines = [f"case {self.case}: {status}",
                 f"  expected: {self.expected}",
                 f"  observed: {self.observed}"]
        lines.extend("  " + n for n in self.narrative)
        for k, v in self.details.items():
            lines.append(f"  {k}: {v}")
        for v in self.verdicts:
            lines.append("")
            lines.extend("  " + l for l in v.to_text().splitlines())
        if self.witness is not None:
            lines.append("  witness run:")
            lines.extend("    " + l for l in self.witness.to_text().splitlines())
        lines.append(f"  time: {self.seconds:.2f}s")
        return "\n".join(lines)


CASES: Dict[str, Callable[..., Report]] = {}


def case(name: str):
    def deco(fn):
        CASES[name] = fn
        return fn
    return deco


def _b(bounds: Optional[Bounds], default: Bounds) -> Bounds:
    return bounds if bounds is not None else default


@case("hash3")
def hash3(bounds: Optional[Bounds] = None, workers: int = 1) -> Report:
    b = _b(bounds, Bounds(1, 14, 4))
    v = bench.check(fixture("hash3"), axioms.get("HASH3"), b, SemanticsConfig(), workers)
    notes = ["The responder returns a hash it received inside a ciphertext; the",
             "initiator, who alone can compute it, never sends it bare."]
    if v.witness:
        notes.append(f"failing instance: {v.witness.instance.show()}")
    return Report("hash3", COUNTEREXAMPLE, v.outcome, v.outcome == COUNTEREXAMPLE, notes, [v])


def _type_flaw(v: Verdict) -> Optional[str]:
    """Describe a responder thread whose nonce variable holds a signature."""
    if not v.witness:
        return None
    run = v.witness.run
    for th in run.threads:
        if th.role != "Resp":
            continue
        for var, t in run.sigma(th.tid).items():
            if var.name == "x" and isinstance(t, Sig):
                return f"T{th.tid}({th.role},{th.agent.name}) received x = {show(t)}"
    return None


@case("gamma1-untyped")
def gamma1_untyped(bounds: Optional[Bounds] = None, workers: int = 1) -> Report:
    b = _b(bounds, Bounds(2, 14, 4))
    v = bench.check(fixture("cr"), axioms.get("GAMMA1"), b, SemanticsConfig(typed=False), workers)
    flaw = _type_flaw(v)
    resp = 0
    if v.witness:
        resp = len({e.tid for e in v.witness.run.events if v.witness.run.thread(e.tid).role == "Resp"})
    ok = v.outcome == COUNTEREXAMPLE and flaw is not None and resp >= 2
    notes = ["Untyped matching lets a responder accept another responder's signature",
             "as its nonce; the signature it then sends contains a term it neither",
             "generated nor received bare."]
    if flaw:
        notes.append(flaw)
    return Report("gamma1-untyped", COUNTEREXAMPLE, v.outcome, ok, notes, [v],
                  {"responder threads in witness": resp})


@case("gamma1-typed")
def gamma1_typed(bounds: Optional[Bounds] = None, workers: int = 1) -> Report:
    b = _b(bounds, Bounds(2, 14, 4))
    v = bench.check(fixture("cr"), axioms.get("GAMMA1"), b, SemanticsConfig(typed=True), workers)
    notes = ["With typed variables the responder only accepts nonces, and the",
             "invariant holds at the same bounds."]
    return Report("gamma1-typed", HOLDS, v.outcome, v.outcome == HOLDS, notes, [v])


@case("dh-formula2")
def dh_formula2(bounds: Optional[Bounds] = None, workers: int = 1) -> Report:
    b = _b(bounds, Bounds(1, 14, 4))
    protocol = fixture("dh_min")
    a, bb = Var("a", "dhpriv"), Var("b", "dhpriv")
    pattern = [("send", "X", DhH(a, bb)), ("receive", "Y", DhH(bb, a))]
    off = executable(protocol, pattern, b, SemanticsConfig(dh_theory=False))
    on = executable(protocol, pattern, b, SemanticsConfig(dh_theory=True))
    observed = f"theory off: {'executable' if off else 'not executable'}; " \
               f"theory on: {'executable' if on else 'not executable'}"
    notes = ["Pattern: Send(X, h(a,b)) < Receive(Y, h(b,a)).",
             "Without h(a,b) = h(b,a) the receive never matches what was sent."]
    return Report("dh-formula2", "theory off: not executable; theory on: executable", observed,
                  off is None and on is not None, notes,
                  details={"bounds": f"threads={b.max_threads_per_role} length={b.max_run_length} "
                                     f"depth={b.max_intruder_depth}"},
                  witness=on)


@case("sec-symmetric")
def sec_symmetric(bounds: Optional[Bounds] = None, workers: int = 1) -> Report:
    b = _b(bounds, Bounds(2, 14, 4))
    protocol = fixture("sec_shared")
    asym = bench.check(protocol, axioms.get("SEC"), b, SemanticsConfig(key_scheme="asymmetric"), workers)
    sym = bench.check(protocol, axioms.get("SEC"), b, SemanticsConfig(key_scheme="symmetric"), workers)
    ok = asym.outcome == HOLDS and sym.outcome == COUNTEREXAMPLE
    notes = ["Under asymmetric keys only the named agent can open enc{x}A; under",
             "symmetric keys the name is the key, so the peer opens it too."]
    return Report("sec-symmetric", f"asymmetric: {HOLDS}; symmetric: {COUNTEREXAMPLE}",
                  f"asymmetric: {asym.outcome}; symmetric: {sym.outcome}", ok, notes, [asym, sym])


@case("q-prime")
def q_prime(bounds: Optional[Bounds] = None, workers: int = 1) -> Report:
    b = _b(bounds, Bounds(2, 14, 4))
    config = SemanticsConfig(precedence_rule=False)
    formula = axioms.get("GAMMA1")
    run_level = bench.check(fixture("q_prime"), formula, b, config, workers)
    hb = Bounds(1, b.max_run_length, b.max_intruder_depth)
    cr_bs = bench.check_honesty_mode(fixture("cr"), formula, hb, config, workers)
    qp_bs = bench.check_honesty_mode(fixture("q_prime"), formula, hb, config, workers)
    same = cr_bs["BS2"].outcome == qp_bs["BS2"].outcome
    ok = run_level.outcome == COUNTEREXAMPLE and same
    notes = ["Q' receives m inside a ciphertext before signing it, so the invariant",
             "fails on its runs. Checked block by block, the shared second block",
             "gets the same verdict in both protocols: the check cannot tell them apart."]
    return Report("q-prime", f"run-level: {COUNTEREXAMPLE}; BS2 verdicts identical",
                  f"run-level: {run_level.outcome}; BS2 on CR: {cr_bs['BS2'].outcome}, "
                  f"on Q': {qp_bs['BS2'].outcome}", ok, notes,
                  [run_level, cr_bs["BS2"], qp_bs["BS2"]])


@case("hash4-collapse")
def hash4_collapse(bounds: Optional[Bounds] = None, workers: int = 1) -> Report:
    b = _b(bounds, Bounds(2, 14, 4))
    config = SemanticsConfig()
    tot_t, good_t = bench.hash_collapse_stats(fixture("hash_typical"), b, config)
    tot_h, good_h = bench.hash_collapse_stats(fixture("hash3"), b, config)
    pct_t = 100.0 * good_t / tot_t if tot_t else 100.0
    pct_h = 100.0 * good_h / tot_h if tot_h else 100.0
    ok = tot_t > 0 and pct_t == 100.0 and pct_h < 100.0
    notes = ["Counted over every run: honest threads X and keyed hashes t with",
             "Has(X, t), and how many of them also satisfy Computes(X, t). On the",
             "typical pattern every holder can compute the hash, so the second",
             "disjunct of HASH4 is never needed."]
    return Report("hash4-collapse", "typical: 100%; hash3: below 100%",
                  f"typical: {pct_t:.1f}%; hash3: {pct_h:.1f}%", ok, notes,
                  details={"typical instances": f"{good_t}/{tot_t}",
                           "hash3 instances": f"{good_h}/{tot_h}"})


@case("permutation")
def permutation(bounds: Optional[Bounds] = None, workers: int = 1) -> Report:
    b = _b(bounds, Bounds(2, 14, 4))
    p1 = fixture("perm")
    p2 = permute_basic_sequences(p1, "Chain", (3, 2, 1))
    inv = axioms.get("ECHO-BEFORE-SIGN")
    result = {}
    verdicts = []
    for prec in (False, True):
        config = SemanticsConfig(precedence_rule=prec)
        r1 = bench.check_honesty_mode(p1, inv, b, config, workers)
        r2 = bench.check_honesty_mode(p2, inv, b, config, workers)
        m1, m2 = bench.sequence_outcomes(p1, r1), bench.sequence_outcomes(p2, r2)
        result[prec] = (m1 == m2, m1, m2)
        verdicts.extend(r1.values())
        verdicts.extend(r2.values())
    ok = result[False][0] and not result[True][0]

    def fmt(m):
        return ", ".join(f"{o}x{n}" for (_, o), n in sorted(m.items()))

    notes = ["P2 reverses the three blocks of P1. Block by block, both get the same",
             "verdicts; once each block keeps its predecessors, the ordering-sensitive",
             "invariant separates them."]
    details = {
        "precedence off": f"P1 [{fmt(result[False][1])}] P2 [{fmt(result[False][2])}]",
        "precedence on": f"P1 [{fmt(result[True][1])}] P2 [{fmt(result[True][2])}]",
    }
    return Report("permutation", "equal without precedence; different with precedence",
                  f"{'equal' if result[False][0] else 'different'} without precedence; "
                  f"{'equal' if result[True][0] else 'different'} with precedence",
                  ok, notes, details=details)


def leaked_cr() -> Protocol:
    text = fixture_text("cr").replace("honest A B;", "honest A B;\n  intruder knows sk(A);")
    return parse_protocol(text)


@case("ver-sanity")
def ver_sanity(bounds: Optional[Bounds] = None, workers: int = 1) -> Report:
    b = _b(bounds, Bounds(2, 14, 4))
    entry = axioms.get("VER")
    clean = bench.check(fixture("cr"), entry, b, SemanticsConfig(), workers)
    leaked = bench.check(leaked_cr(), entry, b, SemanticsConfig(), workers)
    ok = clean.outcome == HOLDS and leaked.outcome == COUNTEREXAMPLE
    notes = ["With honest signing keys private, every verified signature traces back",
             "to a send by the signer; leaking sk(A) breaks this."]
    return Report("ver-sanity", f"clean: {HOLDS}; leaked: {COUNTEREXAMPLE}",
                  f"clean: {clean.outcome}; leaked: {leaked.outcome}", ok, notes, [clean, leaked])


def reproduce(name: str, bounds: Optional[Bounds] = None, workers: int = 1) -> Report:
    if name not in CASES:
        raise KeyError(f"unknown case {name!r}; known: {', '.join(CASES)}")
    t0 = time.perf_counter()
    r = CASES[name](bounds, workers)
    r.seconds = time.perf_counter() - t0
    return r
