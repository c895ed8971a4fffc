"""Dolev-Yao deduction: analysis of a knowledge set and bounded synthesis.

A term is derivable when it lies in the analysed knowledge, or can be built
from derivable parts. Synthesised terms must either occur as a subterm of the
knowledge or have height at most the configured depth; this keeps the closure
finite and is what `derive` and its brute-force oracle agree on.
"""
from __future__ import annotations

from collections import defaultdict
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Tuple

from .config import SemanticsConfig
from .terms import (
    Agent, DhG, DhH, Enc, Hash, Pair, PrivKey, PubKey, Sig, Term, Var,
    apply, match_term, normalize_dh, subsort, subterms,
)


def decryption_key(key: Term, scheme: str) -> Optional[Term]:
    """Key needed to open enc{.}key, or None if nothing opens it."""
    asym = None
    if isinstance(key, (Agent, PubKey)):
        asym = PrivKey(key if isinstance(key, Agent) else key.agent)
    elif isinstance(key, PrivKey):
        asym = PubKey(key.agent)
    if scheme == "symmetric":
        return key
    if scheme == "asymmetric":
        return asym
    return asym if asym is not None else key


class Knowledge:
    """Immutable knowledge set with cached analysis.

    `extend` returns a new object and analyses only what changed.
    """

    def __init__(self, terms: Iterable[Term], config: SemanticsConfig, depth: int,
                 _parent: Optional["Knowledge"] = None):
        self.config = config
        self.depth = depth
        new = [normalize_dh(t, config) for t in terms]
        if _parent is None:
            self.base = frozenset(new)
            self.analyzed: set = set()
            self.subs: set = set()
            self._blocked: List[Term] = []
            fresh = list(self.base)
        else:
            fresh = [t for t in new if t not in _parent.base]
            self.base = _parent.base.union(fresh)
            self.analyzed = set(_parent.analyzed)
            self.subs = set(_parent.subs)
            self._blocked = list(_parent._blocked)
        for t in fresh:
            self.subs.update(subterms(t))
        self._memo: Dict[Term, bool] = {}
        self._sorted: Optional[List[Term]] = None
        self._by_tag: Optional[Dict[str, List[Term]]] = None
        self._analyze(fresh)

    def extend(self, terms: Iterable[Term]) -> "Knowledge":
        terms = list(terms)
        if not terms:
            return self
        return Knowledge(terms, self.config, self.depth, _parent=self)

    # -- analysis ----------------------------------------------------------
    def _analyze(self, work: List[Term]) -> None:
        scheme = self.config.key_scheme
        reveal = self.config.sig_reveals_payload
        while True:
            while work:
                t = work.pop()
                if t in self.analyzed:
                    continue
                self.analyzed.add(t)
                if isinstance(t, Pair):
                    work.append(t.first)
                    work.append(t.second)
                elif isinstance(t, Sig):
                    if reveal:
                        work.append(t.payload)
                elif isinstance(t, Enc):
                    self._blocked.append(t)
            still = []
            for enc in self._blocked:
                dk = decryption_key(enc.key, scheme)
                if dk is not None and self._synth(normalize_dh(dk, self.config), {}):
                    work.append(enc.payload)
                else:
                    still.append(enc)
            self._blocked = still
            if not work:
                break

    # -- synthesis ---------------------------------------------------------
    def in_universe(self, t: Term) -> bool:
        return t.height <= self.depth or t in self.subs

    def _synth(self, g: Term, memo: Dict[Term, bool]) -> bool:
        hit = memo.get(g)
        if hit is not None:
            return hit
        if g in self.analyzed:
            memo[g] = True
            return True
        if not self.in_universe(g):
            memo[g] = False
            return False
        memo[g] = False  # guards against cycles
        if isinstance(g, Pair):
            ok = self._synth(g.first, memo) and self._synth(g.second, memo)
        elif isinstance(g, (Enc, Hash)):
            ok = self._synth(g.payload, memo) and self._synth(g.key, memo)
        elif isinstance(g, Sig):
            ok = self._synth(g.payload, memo) and self._synth(PrivKey(g.key), memo)
        elif isinstance(g, DhG):
            ok = self._synth(g.exp, memo)
        elif isinstance(g, DhH):
            ok = self._synth(g.first, memo) and self._synth(DhG(g.second), memo)
            if not ok and self.config.dh_theory:
                ok = self._synth(g.second, memo) and self._synth(DhG(g.first), memo)
        elif isinstance(g, PubKey):
            ok = self._synth(g.agent, memo)
        else:
            ok = False
        memo[g] = ok
        return ok

    def derivable(self, goal: Term) -> bool:
        goal = normalize_dh(goal, self.config)
        return self._synth(goal, self._memo)

    __contains__ = derivable

    # -- enumeration helpers -----------------------------------------------
    def sorted_analyzed(self) -> List[Term]:
        if self._sorted is None:
            self._sorted = sorted(self.analyzed, key=Term.order_key)
        return self._sorted

    def analyzed_by_tag(self, tag: str) -> List[Term]:
        if self._by_tag is None:
            groups: Dict[str, List[Term]] = defaultdict(list)
            for t in self.sorted_analyzed():
                groups[t.tag].append(t)
            self._by_tag = groups
        return self._by_tag.get(tag, [])

    def solve(self, pattern: Term, sigma: Mapping[Var, Term]) -> List[Tuple[Dict[Var, Term], Term]]:
        """All (extended substitution, ground message) pairs such that the
        message instantiates `pattern` and is derivable.

        Variables range over the analysed knowledge; composite patterns are
        either matched against analysed terms or built by the intruder from
        solved parts.
        """
        out: Dict[tuple, Tuple[Dict[Var, Term], Term]] = {}
        for s, t in self._solve(pattern, dict(sigma)):
            key = (t, tuple(sorted(s.items(), key=lambda kv: kv[0].order_key())))
            if key not in out:
                out[key] = (s, t)
        return list(out.values())

    def _solve(self, p: Term, sigma: Dict[Var, Term]) -> Iterator[Tuple[Dict[Var, Term], Term]]:
        config = self.config
        q = apply(sigma, p, config, partial=True) if sigma else p
        if q.ground:
            q = normalize_dh(q, config)
            if self.derivable(q):
                yield sigma, q
            return
        if isinstance(q, Var):
            yield from self._var_candidates(q, sigma)
            return
        for t in self.analyzed_by_tag(q.tag):
            m = match_term(q, t, sigma, config)
            if m is not None:
                yield m, t
        yield from self._construct(q, sigma)

    def _var_candidates(self, v: Var, sigma):
        typed = self.config.typed
        for t in self.sorted_analyzed():
            if typed and not subsort(t.sort, v.var_sort):
                continue
            s = dict(sigma)
            s[v] = t
            yield s, t

    def _construct(self, q: Term, sigma):
        config = self.config

        def keep(t):
            t = normalize_dh(t, config)
            return t if self.in_universe(t) else None

        if isinstance(q, Pair):
            for s1, a in self._solve(q.first, sigma):
                for s2, b in self._solve(q.second, s1):
                    t = keep(Pair(a, b))
                    if t is not None:
                        yield s2, t
        elif isinstance(q, (Enc, Hash)):
            for s1, a in self._solve(q.payload, sigma):
                for s2, k in self._solve(q.key, s1):
                    t = keep(type(q)(a, k))
                    if t is not None:
                        yield s2, t
        elif isinstance(q, Sig):
            for s1, a in self._solve(q.payload, sigma):
                for s2, signer in self._solve_any(q.key, s1):
                    if not self.derivable(PrivKey(signer)):
                        continue
                    t = keep(Sig(a, signer))
                    if t is not None:
                        yield s2, t
        elif isinstance(q, DhG):
            for s1, a in self._solve(q.exp, sigma):
                t = keep(DhG(a))
                if t is not None:
                    yield s1, t
        elif isinstance(q, DhH):
            orders = [(q.first, q.second)]
            if config.dh_theory:
                orders.append((q.second, q.first))
            for first, second in orders:
                for s1, a in self._solve(first, sigma):
                    for s2, gb in self._solve(DhG(second), s1):
                        b = gb.exp if isinstance(gb, DhG) else None
                        if b is None:
                            continue
                        built = DhH(a, b) if first is q.first else DhH(b, a)
                        t = keep(built)
                        if t is not None:
                            yield s2, t
        elif isinstance(q, PubKey):
            for s1, a in self._solve(q.agent, sigma):
                yield s1, PubKey(a)

    def _solve_any(self, p: Term, sigma):
        """Bind a signer position: ground, or any analysed agent name."""
        q = apply(sigma, p, self.config, partial=True) if sigma else p
        if q.ground:
            yield sigma, q
            return
        if isinstance(q, Var):
            for t in self.sorted_analyzed():
                if isinstance(t, Agent) or not self.config.typed:
                    s = dict(sigma)
                    s[q] = t
                    yield s, t


def derive(knowledge: Iterable[Term], goal: Term, config: SemanticsConfig, depth: int) -> bool:
    """Is `goal` in the bounded Dolev-Yao closure of `knowledge`?"""
    return Knowledge(knowledge, config, depth).derivable(goal)
