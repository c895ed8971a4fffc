"""Protocol descriptions: actions, roles, setup, the DSL parser and printer,
and the basic-sequence decomposition."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .syntax import DSLSemanticError, TermParser, Token, TokenStream
from .terms import (
    SORTS, Agent, Term, Var, _Annot, apply, flatten, show, variables,
)

# ---------------------------------------------------------------------------
# actions


@dataclass(frozen=True)
class Action:
    kind = ""

    def fields(self) -> Tuple[Term, ...]:
        raise NotImplementedError

    def out(self) -> Optional[Term]:
        """Variable written by the action, if any (not counting receive)."""
        return None

    def inputs(self) -> Tuple[Term, ...]:
        out = self.out()
        return tuple(f for f in self.fields() if f is not out)

    def ground(self, sigma, config=None) -> "Action":
        return type(self)(*(apply(sigma, f, config) for f in self.fields()))


@dataclass(frozen=True)
class New(Action):
    var: Term
    kind = "new"

    def fields(self):
        return (self.var,)

    def out(self):
        return self.var


@dataclass(frozen=True)
class Send(Action):
    msg: Term
    kind = "send"

    def fields(self):
        return (self.msg,)


@dataclass(frozen=True)
class Receive(Action):
    pattern: Term
    kind = "receive"

    def fields(self):
        return (self.pattern,)

    @property
    def msg(self) -> Term:
        return self.pattern


@dataclass(frozen=True)
class EncAct(Action):
    var: Term
    payload: Term
    key: Term
    kind = "enc"

    def fields(self):
        return (self.var, self.payload, self.key)

    def out(self):
        return self.var


@dataclass(frozen=True)
class DecAct(Action):
    var: Term
    cipher: Term
    key: Term
    kind = "dec"

    def fields(self):
        return (self.var, self.cipher, self.key)

    def out(self):
        return self.var


@dataclass(frozen=True)
class SignAct(Action):
    var: Term
    payload: Term
    signer: Term
    kind = "sign"

    def fields(self):
        return (self.var, self.payload, self.signer)

    def out(self):
        return self.var


@dataclass(frozen=True)
class VerifyAct(Action):
    sig: Term
    payload: Term
    signer: Term
    kind = "verify"

    def fields(self):
        return (self.sig, self.payload, self.signer)


_DEFAULT_OUT_SORT = {"enc": "ciphertext", "dec": "message", "sign": "sigval"}


def action_binds(action: Action, bound: Set[Var]) -> List[Var]:
    """Variables an action binds given the already-bound set."""
    if isinstance(action, Receive):
        return [v for v in variables(action.pattern) if v not in bound]
    out = action.out()
    return [out] if isinstance(out, Var) else []


def action_uses(action: Action) -> List[Var]:
    if isinstance(action, (Receive, New)):
        return []
    seen: List[Var] = []
    for f in action.inputs():
        for v in variables(f):
            if v not in seen:
                seen.append(v)
    return seen


# ---------------------------------------------------------------------------
# protocol structure


@dataclass(frozen=True)
class Role:
    name: str
    params: Tuple[Var, ...]
    self_param: Var
    actions: Tuple[Action, ...]
    # pre-bound non-agent variables (used by synthetic per-block roles; not printable)
    fixed: Tuple[Tuple[Var, Term], ...] = ()


@dataclass(frozen=True)
class Setup:
    honest: Tuple[Agent, ...] = ()
    dishonest: Tuple[Agent, ...] = ()
    intruder_knows: Tuple[Term, ...] = ()

    @property
    def agents(self) -> Tuple[Agent, ...]:
        return self.honest + self.dishonest


@dataclass(frozen=True)
class Protocol:
    name: str
    setup: Setup
    roles: Tuple[Role, ...]

    def role(self, name: str) -> Role:
        for r in self.roles:
            if r.name == name:
                return r
        raise KeyError(name)

    def role_names(self) -> List[str]:
        return [r.name for r in self.roles]


@dataclass(frozen=True)
class BasicSequence:
    role: str
    index: int        # global, 1-based, numbered across roles in declaration order
    local_index: int  # 1-based within the role
    start: int        # position of the first action in the role body
    actions: Tuple[Action, ...] = field(default=())

    @property
    def label(self) -> str:
        return f"BS{self.index}"


def split_points(actions: Sequence[Action]) -> List[int]:
    return [0] + [i for i, a in enumerate(actions) if i > 0 and isinstance(a, Receive)]


def role_basic_sequences(role: Role, first_index: int = 1) -> List[BasicSequence]:
    cuts = split_points(role.actions) + [len(role.actions)]
    out = []
    for j in range(len(cuts) - 1):
        if cuts[j] == cuts[j + 1]:
            continue  # only for an empty body
        out.append(BasicSequence(role.name, first_index + j, j + 1, cuts[j],
                                 tuple(role.actions[cuts[j]:cuts[j + 1]])))
    return out


def basic_sequences(protocol_or_role, role_name: Optional[str] = None) -> List[BasicSequence]:
    """Basic sequences of one role, or of every role with global numbering."""
    if isinstance(protocol_or_role, Role):
        return role_basic_sequences(protocol_or_role)
    out: List[BasicSequence] = []
    for role in protocol_or_role.roles:
        out.extend(role_basic_sequences(role, len(out) + 1))
    if role_name is not None:
        return [bs for bs in out if bs.role == role_name]
    return out


def boundaries(role: Role) -> Set[int]:
    """Program-counter values at which a thread sits between basic sequences."""
    return set(split_points(role.actions)) | {len(role.actions)}


class ProtocolError(DSLSemanticError):
    pass


def validate_role(role: Role) -> None:
    names = [p.name for p in role.params]
    if len(set(names)) != len(names):
        raise ProtocolError(f"role {role.name}: duplicate parameter")
    if role.self_param not in role.params:
        raise ProtocolError(f"role {role.name}: self {role.self_param.name} is not a parameter")
    bound: Set[Var] = set(role.params) | {v for v, _ in role.fixed}
    for i, a in enumerate(role.actions):
        for v in action_uses(a):
            if v not in bound:
                raise ProtocolError(f"role {role.name}: unbound variable {v.name} in action {i + 1}")
        if not isinstance(a, Receive):
            out = a.out()
            if out is not None:
                if not isinstance(out, Var):
                    raise ProtocolError(f"role {role.name}: action {i + 1} must assign a variable")
                if any(v.name == out.name for v in bound):
                    raise ProtocolError(f"role {role.name}: variable {out.name} rebound")
        bound.update(action_binds(a, bound))


def permute_basic_sequences(protocol: Protocol, role_name: str,
                            permutation: Sequence[int]) -> Protocol:
    """Reorder a role's basic sequences; `permutation` lists 1-based local
    indices in their new order, e.g. (3, 2, 1)."""
    role = protocol.role(role_name)
    seqs = role_basic_sequences(role)
    n = len(seqs)
    perm = tuple(int(p) for p in permutation)
    if sorted(perm) != list(range(1, n + 1)):
        raise ProtocolError(f"invalid permutation {perm} for {n} basic sequences of {role_name}")
    body: List[Action] = []
    for p in perm:
        body.extend(seqs[p - 1].actions)
    new_role = Role(role.name, role.params, role.self_param, tuple(body), role.fixed)
    try:
        validate_role(new_role)
    except ProtocolError as e:
        raise ProtocolError(f"permutation {perm} of {role_name}: {e.message}") from None
    roles = tuple(new_role if r.name == role_name else r for r in protocol.roles)
    return Protocol(protocol.name, protocol.setup, roles)


# ---------------------------------------------------------------------------
# parser

_ROLE_SCOPE_KEYWORDS = {"new", "send", "receive", "verify"}


class _RoleScope:
    def __init__(self, params: Dict[str, Var]):
        self.vars: Dict[str, Var] = dict(params)
        self.binding = False
        self.pending: Dict[str, Var] = {}

    def resolve(self, tok: Token, sort: Optional[str]) -> Term:
        name = tok.text
        if sort is not None and sort not in SORTS:
            raise DSLSemanticError(f"unknown sort {sort!r}", tok.line, tok.col)
        known = self.vars.get(name) or self.pending.get(name)
        if known is not None:
            if sort is not None and sort != known.var_sort:
                raise DSLSemanticError(
                    f"variable {name} redeclared as {sort} (was {known.var_sort})", tok.line, tok.col)
            return known
        if not self.binding:
            raise DSLSemanticError(f"unbound variable {name}", tok.line, tok.col)
        v = Var(name, sort or "message")
        self.pending[name] = v
        return v

    def commit(self) -> None:
        self.vars.update(self.pending)
        self.pending = {}

    def declare(self, tok: Token, sort: str) -> Var:
        if sort not in SORTS:
            raise DSLSemanticError(f"unknown sort {sort!r}", tok.line, tok.col)
        if tok.text in self.vars:
            raise DSLSemanticError(f"variable {tok.text} rebound", tok.line, tok.col)
        v = Var(tok.text, sort)
        self.vars[tok.text] = v
        return v


def parse_protocol(text: str) -> Protocol:
    ts = TokenStream(text)
    ts.expect("protocol")
    name = ts.ident("protocol name").text
    setup = Setup()
    if ts.at("setup"):
        setup = _parse_setup(ts)
    roles: List[Role] = []
    seen: Set[str] = set()
    if not ts.at("role"):
        ts.fail("'role'")
    while ts.at("role"):
        tok = ts.tok
        role = _parse_role(ts)
        if role.name in seen:
            raise DSLSemanticError(f"duplicate role {role.name}", tok.line, tok.col)
        seen.add(role.name)
        roles.append(role)
    if ts.tok.kind != "eof":
        ts.fail("'role' or end of input")
    return Protocol(name, setup, tuple(roles))


def _parse_setup(ts: TokenStream) -> Setup:
    ts.expect("setup")
    ts.expect("{")
    honest: List[Agent] = []
    dishonest: List[Agent] = []
    knows: List[Term] = []

    def agent_list(target: List[Agent]):
        while ts.tok.kind == "ident":
            tok = ts.next()
            a = Agent(tok.text)
            if a in honest or a in dishonest:
                raise DSLSemanticError(f"agent {tok.text} declared twice", tok.line, tok.col)
            target.append(a)
            ts.accept(",")
        ts.expect(";")

    while not ts.at("}"):
        if ts.accept("honest"):
            agent_list(honest)
        elif ts.accept("agents") or ts.accept("dishonest"):
            agent_list(dishonest)
        elif ts.accept("intruder"):
            ts.expect("knows")
            refs: List[Token] = []

            def resolve(tok: Token, sort: Optional[str]) -> Term:
                if sort is not None and sort != "agent":
                    raise DSLSemanticError("setup terms may only name agents", tok.line, tok.col)
                refs.append(tok)
                return Agent(tok.text)

            tp = TermParser(ts, resolve)
            terms = [tp.term()]
            while ts.accept(","):
                terms.append(tp.term())
            ts.expect(";")
            knows.extend(terms)
            for tok in refs:
                a = Agent(tok.text)
                if a not in honest and a not in dishonest:
                    # an agent mentioned only in leaked material is the intruder's own identity
                    dishonest.append(a)
        else:
            ts.fail("'honest', 'agents', 'intruder' or '}'")
    ts.expect("}")
    return Setup(tuple(honest), tuple(dishonest), tuple(knows))


def _parse_role(ts: TokenStream) -> Role:
    ts.expect("role")
    name = ts.ident("role name").text
    ts.expect("(")
    params: List[Var] = []
    ptoks: List[Token] = []
    while True:
        tok = ts.ident("parameter")
        if any(p.name == tok.text for p in params):
            raise DSLSemanticError(f"duplicate parameter {tok.text}", tok.line, tok.col)
        params.append(Var(tok.text, "agent"))
        ptoks.append(tok)
        if not ts.accept(","):
            break
    ts.expect(")")
    self_param = params[0]
    if ts.accept("by"):
        tok = ts.ident("self parameter")
        match = [p for p in params if p.name == tok.text]
        if not match:
            raise DSLSemanticError(f"{tok.text} is not a parameter of {name}", tok.line, tok.col)
        self_param = match[0]
    ts.expect("{")
    scope = _RoleScope({p.name: p for p in params})
    tp = TermParser(ts, scope.resolve)
    actions: List[Action] = []
    while not ts.at("}"):
        actions.append(_parse_action(ts, tp, scope))
    ts.expect("}")
    role = Role(name, tuple(params), self_param, tuple(actions))
    try:
        validate_role(role)
    except ProtocolError as e:
        raise DSLSemanticError(e.message, ptoks[0].line, ptoks[0].col) from None
    return role


def _parse_action(ts: TokenStream, tp: TermParser, scope: _RoleScope) -> Action:
    tok = ts.tok
    if ts.accept("new"):
        vt = ts.ident("variable")
        sort = "nonce"
        if ts.accept(":"):
            sort = ts.ident("sort").text
        if sort not in ("nonce", "dhpriv"):
            if sort not in SORTS:
                raise DSLSemanticError(f"unknown sort {sort!r}", vt.line, vt.col)
            raise DSLSemanticError(f"new expects sort nonce or dhpriv, got {sort}", vt.line, vt.col)
        act: Action = New(scope.declare(vt, sort))
    elif ts.accept("send"):
        act = Send(tp.tuple_())
    elif ts.accept("receive"):
        scope.binding = True
        try:
            pattern = tp.tuple_()
        finally:
            scope.binding = False
        scope.commit()
        act = Receive(pattern)
    elif ts.accept("verify"):
        s = tp.term()
        ts.expect(",")
        payload = tp.term()
        ts.expect(",")
        signer = tp.term()
        act = VerifyAct(s, payload, signer)
    elif tok.kind == "ident" and tok.text not in _ROLE_SCOPE_KEYWORDS:
        vt = ts.next()
        sort = None
        if ts.accept(":"):
            sort = ts.ident("sort").text
        ts.expect(":=")
        op = ts.expect("enc", "dec", "sign").text
        a = tp.term()
        ts.expect(",")
        b = tp.term()
        var = scope.declare(vt, sort or _DEFAULT_OUT_SORT[op])
        act = {"enc": EncAct, "dec": DecAct, "sign": SignAct}[op](var, a, b)
    else:
        ts.fail("action")
    ts.expect(";")
    return act


# ---------------------------------------------------------------------------
# printer


def _show_annotated(t: Term, fresh: Set[Var]) -> str:
    def walk(s: Term) -> Term:
        if isinstance(s, Var):
            return _Annot(s) if s in fresh and s.var_sort != "message" else s
        kids = s.children()
        if not kids or s.ground:
            return s
        return s.rebuild(tuple(walk(c) for c in kids))
    return show(walk(t))


def _items(t: Term, fresh: Set[Var] = frozenset()) -> str:
    return ",".join(_show_annotated(x, fresh) for x in flatten(t))


def _decl(v: Term) -> str:
    return v.name if v.var_sort == "message" else f"{v.name}:{v.var_sort}"


def format_action(a: Action, fresh: Set[Var] = frozenset()) -> str:
    if isinstance(a, New):
        return f"new {_decl(a.var)}" if isinstance(a.var, Var) else f"new {show(a.var)}"
    if isinstance(a, Send):
        return f"send {_items(a.msg)}"
    if isinstance(a, Receive):
        return f"receive {_items(a.pattern, fresh)}"
    if isinstance(a, VerifyAct):
        return f"verify {show(a.sig)}, {show(a.payload)}, {show(a.signer)}"
    lhs = _decl(a.var) if isinstance(a.var, Var) else show(a.var)
    a1, a2 = a.inputs()
    return f"{lhs} := {a.kind} {show(a1)}, {show(a2)}"


def format_role(role: Role) -> str:
    params = ", ".join(p.name for p in role.params)
    by = f" by {role.self_param.name}" if role.self_param != role.params[0] else ""
    lines = [f"role {role.name}({params}){by} {{"]
    bound: Set[Var] = set(role.params)
    for a in role.actions:
        fresh = set(action_binds(a, bound)) if isinstance(a, Receive) else set()
        lines.append(f"  {format_action(a, fresh)};")
        bound.update(action_binds(a, bound))
    lines.append("}")
    return "\n".join(lines)


def format_protocol(p: Protocol) -> str:
    out = [f"protocol {p.name}"]
    s = p.setup
    if s.honest or s.dishonest or s.intruder_knows:
        out.append("setup {")
        if s.honest:
            out.append("  honest " + " ".join(a.name for a in s.honest) + ";")
        if s.dishonest:
            out.append("  agents " + " ".join(a.name for a in s.dishonest) + ";")
        if s.intruder_knows:
            out.append("  intruder knows " + ", ".join(show(t) for t in s.intruder_knows) + ";")
        out.append("}")
    for r in p.roles:
        out.append(format_role(r))
    return "\n".join(out) + "\n"


def load_protocol(path) -> Protocol:
    with open(path, encoding="utf-8") as fh:
        return parse_protocol(fh.read())
