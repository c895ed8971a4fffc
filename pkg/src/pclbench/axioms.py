"""Catalogue of axioms and invariants, written in the formula language."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Tuple

from .config import SemanticsConfig
from .logic import Formula, parse_formula


class FeatureMismatch(ValueError):
    pass


@dataclass(frozen=True)
class AxiomEntry:
    name: str
    source: str
    citation: str
    requires: Tuple[Tuple[str, object], ...] = ()
    kind: str = "axiom"  # axiom or invariant

    @cached_property
    def formula(self) -> Formula:
        return parse_formula(self.source)

    def check_config(self, config: SemanticsConfig) -> None:
        for key, want in self.requires:
            have = getattr(config, key)
            if have != want:
                raise FeatureMismatch(
                    f"{self.name} needs {key}={want!r}, configuration has {have!r}")


_HASH_K = "hash{x}K"

_ENTRIES = [
    AxiomEntry(
        "VER",
        "forall A:agent, thread Y, x. Honest(A) & Verify(Y, sig{x}A) & A != ^Y"
        " => exists thread X of A, m. Send(X, m) & Contains(m, sig{x}A)",
        "signature verification implies a sending thread of the signer",
    ),
    AxiomEntry(
        "SEC",
        "forall A:agent, thread Y, x. Honest(A) & Decrypt(Y, enc{x}A) => ^Y = A",
        "only the owner of a name-keyed ciphertext decrypts it",
    ),
    AxiomEntry(
        "AR3",
        "forall thread X, x, y, K. Receive(X, x) [y := dec x, K]_X Receive(X, enc{y}K)",
        "decryption with K recovers a ciphertext under K",
    ),
    AxiomEntry(
        "AR1",
        "forall thread X, t. [receive t]_X exists party Z. Send(Z, t)",
        "every received term was sent by someone, the intruder included",
    ),
    AxiomEntry(
        "AR1-honest",
        "forall thread X, t. [receive t]_X exists thread Z. Send(Z, t)",
        "every received term was sent by a protocol thread",
    ),
    AxiomEntry(
        "DH1",
        "forall thread X, a:dhpriv, b:dhpriv. Computes(X, h(a,b)) => Has(X, h(a,b))",
        "computing an exponential implies having it",
        (("dh_theory", True),),
    ),
    AxiomEntry(
        "DH2",
        "forall thread X, a:dhpriv, b:dhpriv. Has(X, h(a,b))"
        " => Computes(X, h(a,b)) | exists m. Receive(X, m) & Contains(m, h(a,b))",
        "an exponential is had only by computing or receiving it",
        (("dh_theory", True),),
    ),
    AxiomEntry(
        "DH3",
        "forall thread X, m, a:dhpriv, b:dhpriv. Receive(X, m) & Contains(m, h(a,b))"
        " => exists thread Y, n. Computes(Y, h(a,b)) & Send(Y, n) & Contains(n, h(a,b))",
        "a received exponential was computed and sent by some thread",
        (("dh_theory", True),),
    ),
    AxiomEntry(
        "DH4",
        "forall thread X, a:dhpriv. Fresh(X, a) => Fresh(X, g(a))",
        "freshness passes to the public exponential",
        (("dh_theory", True),),
    ),
    AxiomEntry(
        "HASH1",
        f"forall thread X, x, K. Computes(X, {_HASH_K}) => Has(X, x) & Has(X, K)",
        "computing a keyed hash implies having its parts",
    ),
    AxiomEntry(
        "HASH2",
        f"forall thread X, x, K. Computes(X, {_HASH_K}) => Has(X, {_HASH_K})",
        "computing a keyed hash implies having it",
    ),
    AxiomEntry(
        "HASH3",
        f"forall thread X, x, K. Receive(X, {_HASH_K})"
        f" => exists thread Y. Computes(Y, {_HASH_K}) & Send(Y, {_HASH_K})",
        "a received bare hash was computed and sent bare by one thread",
    ),
    AxiomEntry(
        "HASH4",
        f"forall thread X, x, K. Has(X, {_HASH_K})"
        f" => Computes(X, {_HASH_K}) | exists thread Y, m."
        f" Computes(Y, {_HASH_K}) & Send(Y, m) & Contains(m, {_HASH_K})",
        "a hash is had by computing it or by someone computing and sending it",
    ),
    AxiomEntry(
        "HASH-COLLAPSE",
        f"forall thread X, x, K. Honest(^X) & Has(X, {_HASH_K}) => Computes(X, {_HASH_K})",
        "honest holders of a keyed hash can compute it (typical use pattern)",
        kind="invariant",
    ),
    AxiomEntry(
        "GAMMA1",
        "forall thread Y, t, y, m, X:agent. Send(Y, t) & Contains(t, sig{y,m,X}^Y)"
        " => Gen(Y, m) | Receive(Y, (X,^Y,m)) < Send(Y, (^Y,X,y,sig{y,m,X}^Y))",
        "challenge-response invariant: a signed m was generated or received bare",
        kind="invariant",
    ),
    AxiomEntry(
        "ECHO-BEFORE-SIGN",
        "forall thread T, P:agent, b. Send(T, (^T,P,sig{b}^T))"
        " => exists a. Send(T, (^T,P,a,a)) < Send(T, (^T,P,sig{b}^T))",
        "a signature is sent only after an echo to the same peer",
        kind="invariant",
    ),
]

CATALOGUE: Dict[str, AxiomEntry] = {e.name: e for e in _ENTRIES}


def get(name: str) -> AxiomEntry:
    try:
        return CATALOGUE[name.upper()] if name.upper() in CATALOGUE else CATALOGUE[name]
    except KeyError:
        raise KeyError(f"unknown axiom {name!r}; known: {', '.join(CATALOGUE)}") from None


def names() -> List[str]:
    return list(CATALOGUE)


def custom(name: str, source: str, kind: str = "invariant") -> AxiomEntry:
    """An ad-hoc entry from formula text (parsed eagerly so errors surface early)."""
    e = AxiomEntry(name, source, "user formula", kind=kind)
    e.formula
    return e
