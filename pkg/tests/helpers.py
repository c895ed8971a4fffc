"""Shared term constants and hypothesis strategies."""
import os

from hypothesis import strategies as st

from pclbench.terms import (
    Agent, DhG, DhH, Enc, Hash, Nonce, Pair, PrivKey, PubKey, Sig, SymKey, Var,
)

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

A, B = Agent("A"), Agent("B")
a, b, c = Nonce("a"), Nonce("b"), Nonce("c")
da, db = Nonce("da", kind="dhpriv"), Nonce("db", kind="dhpriv")
K = SymKey("k", (A, B))

ATOMS = [A, B, a, b, c, da, db, K, PubKey(A), PrivKey(B)]


def ground_terms(max_leaves: int = 12):
    leaves = st.sampled_from(ATOMS)

    def extend(children):
        return st.one_of(
            st.builds(Pair, children, children),
            st.builds(Enc, children, children),
            st.builds(Sig, children, st.sampled_from([A, B])),
            st.builds(Hash, children, children),
            st.builds(DhG, children),
            st.builds(DhH, children, children),
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)


VARS = [Var("x", "nonce"), Var("y", "message"), Var("s", "sigval"), Var("p", "agent"),
        Var("e", "dhpriv")]


def patterns(max_leaves: int = 8):
    leaves = st.one_of(st.sampled_from(ATOMS), st.sampled_from(VARS))

    def extend(children):
        return st.one_of(
            st.builds(Pair, children, children),
            st.builds(Enc, children, children),
            st.builds(Hash, children, children),
            st.builds(DhG, children),
            st.builds(DhH, children, children),
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)
