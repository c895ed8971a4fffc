"""Symbolic message terms, sorts, substitution and matching.

Terms are immutable and hash-consed only in the weak sense that each node
caches its hash and its canonical ordering key at construction, so deep terms
can be used as dictionary keys without repeated traversal.
"""
from __future__ import annotations

from typing import Dict, Iterator, Mapping, Optional, Tuple

SORTS = (
    "agent", "nonce", "symkey", "asymkey", "dhpriv", "dhpub", "dhshared",
    "hashval", "sigval", "ciphertext", "tuple", "message",
)


class TermError(ValueError):
    pass


class UnboundVariable(TermError):
    def __init__(self, var: "Var"):
        super().__init__(f"unbound variable {var.name}")
        self.var = var


def check_sort(sort: str) -> str:
    if sort not in SORTS:
        raise TermError(f"unknown sort {sort!r}")
    return sort


def subsort(s: str, t: str) -> bool:
    """`message` is the only proper supersort."""
    return s == t or t == "message"


# Constructor tags in canonical order; atoms sort before compound terms.
_TAGS = ("agent", "nonce", "symkey", "pk", "sk", "var", "g", "h", "hash",
         "sig", "enc", "pair", "hat")
_TAG_RANK = {t: i for i, t in enumerate(_TAGS)}


class Term:
    __slots__ = ("_key", "_hash", "ground", "has_dh", "height")

    tag = ""

    def _init(self, key: tuple, children: Tuple["Term", ...], ground: bool = True,
              has_dh: bool = False, height: int = 0) -> None:
        setattr_ = object.__setattr__
        setattr_(self, "_key", key)
        setattr_(self, "ground", ground and all(c.ground for c in children))
        setattr_(self, "has_dh", has_dh or any(c.has_dh for c in children))
        setattr_(self, "height", height)
        setattr_(self, "_hash", hash(key))

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Term) or self._hash != other._hash:
            return False
        return self._key == other._key

    def __ne__(self, other: object) -> bool:
        return not self.__eq__(other)

    def __hash__(self) -> int:
        return self._hash

    def __setattr__(self, name, value):
        if hasattr(self, "_hash"):
            raise AttributeError("terms are immutable")
        object.__setattr__(self, name, value)

    def __reduce__(self):
        return (type(self), self._args())

    def _args(self) -> tuple:
        raise NotImplementedError

    def children(self) -> Tuple["Term", ...]:
        return ()

    def rebuild(self, children: Tuple["Term", ...]) -> "Term":
        return self

    @property
    def sort(self) -> str:
        raise NotImplementedError

    def order_key(self) -> tuple:
        """Total order: constructor tag, then children, then atom identifiers."""
        try:
            return object.__getattribute__(self, "_okey")
        except AttributeError:
            pass
        okey = (_TAG_RANK[self.tag],) + tuple(c.order_key() for c in self.children()) \
            + self._atom_ids()
        object.__setattr__(self, "_okey", okey)
        return okey

    def _atom_ids(self) -> tuple:
        return ()

    def __lt__(self, other: "Term") -> bool:
        return self.order_key() < other.order_key()

    def __repr__(self) -> str:
        return show(self)

    def __str__(self) -> str:
        return show(self)


class Agent(Term):
    __slots__ = ("name", "_okey")
    tag = "agent"

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        self._init(("agent", name), ())

    def _args(self):
        return (self.name,)

    def _atom_ids(self):
        return (self.name,)

    @property
    def sort(self):
        return "agent"


class Nonce(Term):
    """A fresh value. `origin` is the generating thread id, 'I' for the
    intruder, 'param' for symbolic parameters, or None for constants."""
    __slots__ = ("name", "origin", "kind", "_okey")
    tag = "nonce"

    def __init__(self, name: str, origin=None, kind: str = "nonce"):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "kind", kind)
        self._init(("nonce", name, origin, kind), ())

    def _args(self):
        return (self.name, self.origin, self.kind)

    def _atom_ids(self):
        return (self.name, "" if self.origin is None else str(self.origin), self.kind)

    @property
    def sort(self):
        return self.kind


class Var(Term):
    __slots__ = ("name", "var_sort", "_okey")
    tag = "var"

    def __init__(self, name: str, sort: str = "message"):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "var_sort", check_sort(sort))
        self._init(("var", name, sort), (), ground=False)

    def _args(self):
        return (self.name, self.var_sort)

    def _atom_ids(self):
        return (self.name, self.var_sort)

    @property
    def sort(self):
        return self.var_sort


class SymKey(Term):
    """Shared symmetric key `label(A,B,...)`, e.g. k(A,B)."""
    __slots__ = ("label", "agents", "_okey")
    tag = "symkey"

    def __init__(self, label: str, agents: Tuple[Term, ...]):
        agents = tuple(agents)
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "agents", agents)
        self._init(("symkey", label, agents), agents, height=0)

    def _args(self):
        return (self.label, self.agents)

    def children(self):
        return self.agents

    def rebuild(self, children):
        return SymKey(self.label, tuple(children))

    def _atom_ids(self):
        return (self.label,)

    @property
    def sort(self):
        return "symkey"


class PubKey(Term):
    __slots__ = ("agent", "_okey")
    tag = "pk"

    def __init__(self, agent: Term):
        object.__setattr__(self, "agent", agent)
        self._init(("pk", agent), (agent,), height=0)

    def _args(self):
        return (self.agent,)

    def children(self):
        return (self.agent,)

    def rebuild(self, children):
        return PubKey(children[0])

    @property
    def sort(self):
        return "asymkey"


class PrivKey(Term):
    __slots__ = ("agent", "_okey")
    tag = "sk"

    def __init__(self, agent: Term):
        object.__setattr__(self, "agent", agent)
        self._init(("sk", agent), (agent,), height=0)

    def _args(self):
        return (self.agent,)

    def children(self):
        return (self.agent,)

    def rebuild(self, children):
        return PrivKey(children[0])

    @property
    def sort(self):
        return "asymkey"


class Pair(Term):
    """Binary pairing; n-ary tuples are right-nested pairs.

    Height counts a whole right-nested tuple as one constructor layer.
    """
    __slots__ = ("first", "second", "_okey")
    tag = "pair"

    def __init__(self, first: Term, second: Term):
        object.__setattr__(self, "first", first)
        object.__setattr__(self, "second", second)
        tail = second.height if isinstance(second, Pair) else second.height + 1
        self._init(("pair", first, second), (first, second),
                   height=max(first.height + 1, tail))

    def _args(self):
        return (self.first, self.second)

    def children(self):
        return (self.first, self.second)

    def rebuild(self, children):
        return Pair(children[0], children[1])

    @property
    def sort(self):
        return "tuple"


class _Keyed(Term):
    __slots__ = ("payload", "key", "_okey")

    def __init__(self, payload: Term, key: Term):
        object.__setattr__(self, "payload", payload)
        object.__setattr__(self, "key", key)
        self._init((self.tag, payload, key), (payload, key),
                   height=1 + max(payload.height, key.height))

    def _args(self):
        return (self.payload, self.key)

    def children(self):
        return (self.payload, self.key)

    def rebuild(self, children):
        return type(self)(children[0], children[1])


class Enc(_Keyed):
    __slots__ = ()
    tag = "enc"

    @property
    def sort(self):
        return "ciphertext"


class Sig(_Keyed):
    """Signature of `payload` by the agent in the key position."""
    __slots__ = ()
    tag = "sig"

    @property
    def signer(self) -> Term:
        return self.key

    @property
    def sort(self):
        return "sigval"


class Hash(_Keyed):
    __slots__ = ()
    tag = "hash"

    @property
    def sort(self):
        return "hashval"


class DhG(Term):
    """g(a), the public half g^a."""
    __slots__ = ("exp", "_okey")
    tag = "g"

    def __init__(self, exp: Term):
        object.__setattr__(self, "exp", exp)
        self._init(("g", exp), (exp,), height=1 + exp.height)

    def _args(self):
        return (self.exp,)

    def children(self):
        return (self.exp,)

    def rebuild(self, children):
        return DhG(children[0])

    @property
    def sort(self):
        return "dhpub"


class DhH(Term):
    """h(a,b), the shared value g^ab."""
    __slots__ = ("first", "second", "_okey")
    tag = "h"

    def __init__(self, first: Term, second: Term):
        object.__setattr__(self, "first", first)
        object.__setattr__(self, "second", second)
        self._init(("h", first, second), (first, second), has_dh=True,
                   height=1 + max(first.height, second.height))

    def _args(self):
        return (self.first, self.second)

    def children(self):
        return (self.first, self.second)

    def rebuild(self, children):
        return DhH(children[0], children[1])

    @property
    def sort(self):
        return "dhshared"


# SymKey/PubKey/PrivKey are atomic for construction purposes.
KEY_TYPES = (SymKey, PubKey, PrivKey)


def tup(*items: Term) -> Term:
    """Right-nested tuple: tup(a, b, c) == Pair(a, Pair(b, c))."""
    if not items:
        raise TermError("empty tuple")
    if len(items) == 1:
        return items[0]
    out = items[-1]
    for item in reversed(items[:-1]):
        out = Pair(item, out)
    return out


def flatten(t: Term) -> Tuple[Term, ...]:
    out = []
    while isinstance(t, Pair):
        out.append(t.first)
        t = t.second
    out.append(t)
    return tuple(out)


def show(t: Term) -> str:
    if isinstance(t, Agent):
        return t.name
    if isinstance(t, Nonce):
        return t.name if t.origin is None else f"{t.name}@{t.origin}"
    if isinstance(t, Var):
        return t.name
    if isinstance(t, SymKey):
        return f"{t.label}({','.join(show(a) for a in t.agents)})"
    if isinstance(t, PubKey):
        return f"pk({show(t.agent)})"
    if isinstance(t, PrivKey):
        return f"sk({show(t.agent)})"
    if isinstance(t, Pair):
        return "(" + ",".join(show(x) for x in flatten(t)) + ")"
    if isinstance(t, _Keyed):
        return f"{t.tag}{{{_show_payload(t.payload)}}}{show(t.key)}"
    if isinstance(t, DhG):
        return f"g({show(t.exp)})"
    if isinstance(t, DhH):
        return f"h({show(t.first)},{show(t.second)})"
    return t._show()  # formula-level extensions


def _show_payload(t: Term) -> str:
    if isinstance(t, Pair):
        return ",".join(show(x) for x in flatten(t))
    return show(t)


def show_declared(t: Term) -> str:
    """Like show() but annotates variables with their sorts."""
    if isinstance(t, Var):
        return t.name if t.var_sort == "message" else f"{t.name}:{t.var_sort}"
    kids = t.children()
    if not kids:
        return show(t)
    return show(_annotate(t))


class _Annot(Term):
    __slots__ = ("var", "_okey")
    tag = "var"

    def __init__(self, var: Var):
        object.__setattr__(self, "var", var)
        self._init(("annot", var), (), ground=False)

    def _show(self):
        v = self.var
        return v.name if v.var_sort == "message" else f"{v.name}:{v.var_sort}"


def _annotate(t: Term) -> Term:
    if isinstance(t, Var):
        return _Annot(t)
    kids = t.children()
    if not kids:
        return t
    return t.rebuild(tuple(_annotate(c) for c in kids))


# ---------------------------------------------------------------------------
# structural queries

def subterms(t: Term) -> Iterator[Term]:
    stack = [t]
    while stack:
        s = stack.pop()
        yield s
        stack.extend(s.children())


def variables(t: Term) -> Iterator[Var]:
    seen = set()
    for s in subterms(t):
        if isinstance(s, Var) and s not in seen:
            seen.add(s)
            yield s


def size(t: Term) -> int:
    return sum(1 for _ in subterms(t))


def _dh_on(config) -> bool:
    if config is None:
        return False
    if isinstance(config, bool):
        return config
    return bool(getattr(config, "dh_theory", False))


def _typed(config) -> bool:
    if config is None:
        return True
    return bool(getattr(config, "typed", True))


def normalize_dh(t: Term, config=None) -> Term:
    """Canonical form under h(a,b) = h(b,a); identity when the theory is off."""
    if not _dh_on(config) or not t.has_dh:
        return t
    return _normalize(t)


_NORM_CACHE: Dict[Term, Term] = {}


def _normalize(t: Term) -> Term:
    hit = _NORM_CACHE.get(t)
    if hit is not None:
        return hit
    if not t.has_dh:
        return t
    kids = tuple(_normalize(c) for c in t.children())
    if isinstance(t, DhH):
        a, b = kids
        out = DhH(b, a) if b.order_key() < a.order_key() else DhH(a, b)
    else:
        out = t.rebuild(kids)
    if len(_NORM_CACHE) > 200_000:
        _NORM_CACHE.clear()
    _NORM_CACHE[t] = out
    return out


def contains(outer: Term, inner: Term, config=None) -> bool:
    """Syntactic subterm relation, reflexive, including key positions."""
    if not outer.ground or not inner.ground:
        raise TermError("contains() needs ground terms")
    outer = normalize_dh(outer, config)
    inner = normalize_dh(inner, config)
    return any(s == inner for s in subterms(outer))


def equal_mod_theory(t1: Term, t2: Term, config=None) -> bool:
    return normalize_dh(t1, config) == normalize_dh(t2, config)


Substitution = Mapping[Var, Term]


def apply(subst: Substitution, t: Term, config=None, partial: bool = False) -> Term:
    """Replace variables homomorphically; result normalized under the theory."""
    if t.ground:
        return normalize_dh(t, config)
    out = _apply(subst, t, partial)
    return normalize_dh(out, config)


def _apply(subst, t, partial):
    if t.ground:
        return t
    if isinstance(t, Var):
        v = subst.get(t)
        if v is None:
            if partial:
                return t
            raise UnboundVariable(t)
        return v
    kids = t.children()
    if not kids:
        # formula-level placeholders
        v = subst.get(t)
        if v is None:
            if partial:
                return t
            raise TermError(f"cannot ground {show(t)}")
        return v
    return t.rebuild(tuple(_apply(subst, c, partial) for c in kids))


def match_term(pattern: Term, ground: Term, partial: Optional[Substitution] = None,
               config=None) -> Optional[Dict[Var, Term]]:
    """Extend `partial` so that pattern instantiates to `ground` modulo theory."""
    if not ground.ground:
        raise TermError("match_term() needs a ground second argument")
    dh = _dh_on(config)
    typed = _typed(config)
    ground = normalize_dh(ground, dh)
    sigma = dict(partial) if partial else {}
    if dh:
        # bound variables may hide DH terms; pre-applying keeps matching syntactic
        pattern = _apply(sigma, pattern, True) if not pattern.ground else pattern
        pattern = normalize_dh(pattern, dh) if pattern.ground else pattern
    if _match(pattern, ground, sigma, dh, typed):
        return sigma
    return None


def _match(p: Term, g: Term, sigma: dict, dh: bool, typed: bool) -> bool:
    if p.ground:
        if dh:
            return normalize_dh(p, True) == g
        return p == g
    if isinstance(p, Var):
        bound = sigma.get(p)
        if bound is not None:
            return bound == g
        if typed and not subsort(g.sort, p.var_sort):
            return False
        sigma[p] = g
        return True
    if type(p) is not type(g):
        return False
    if isinstance(p, SymKey) and (p.label != g.label or len(p.agents) != len(g.agents)):
        return False
    pk, gk = p.children(), g.children()
    if len(pk) != len(gk):
        return False
    if isinstance(p, DhH) and dh:
        for first, second in ((gk[0], gk[1]), (gk[1], gk[0])):
            trial = dict(sigma)
            if _match(pk[0], first, trial, dh, typed) and _match(pk[1], second, trial, dh, typed):
                sigma.clear()
                sigma.update(trial)
                return True
        return False
    for pc, gc in zip(pk, gk):
        if not _match(pc, gc, sigma, dh, typed):
            return False
    return True
