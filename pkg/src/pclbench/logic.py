"""Formulas over runs: AST, concrete syntax, and evaluation.

Quantifiers range over finite domains taken from the run (threads, agents,
subterms). The evaluator avoids blind enumeration where it can: the
antecedent of a universally quantified implication, or the body of an
existential, is first solved against the run's events, which binds most
variables directly; only the leftovers are enumerated over the domain.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

from .config import SemanticsConfig
from .engine import INTRUDER, Event, Run, event_term
from .protocol import (
    Action, DecAct, EncAct, New, Receive, Send, SignAct, VerifyAct,
)
from .syntax import DSLSemanticError, TermParser, Token, TokenStream
from .terms import (
    SORTS, Agent, DhG, DhH, Hash, Term, TermError, Var, apply, contains, match_term,
    normalize_dh, show, subsort, subterms, variables,
)

INTRUDER_AGENT = Agent("I")


class EvalError(ValueError):
    pass


# ---------------------------------------------------------------------------
# AST


class Formula:
    def __and__(self, other):
        return And((self, other))

    def __or__(self, other):
        return Or((self, other))

    def __invert__(self):
        return Not(self)

    def __str__(self):
        return show_formula(self)

    __repr__ = __str__


@dataclass(frozen=True, repr=False)
class TrueF(Formula):
    pass


@dataclass(frozen=True, repr=False)
class FalseF(Formula):
    pass


PREDICATES = {
    "Send": "send", "Receive": "receive", "Gen": "new", "New": "new",
    "Encrypt": "enc", "Decrypt": "dec", "Verify": "verify", "Sign": "sign",
}
_PRED_NAME = {"send": "Send", "receive": "Receive", "new": "Gen", "enc": "Encrypt",
              "dec": "Decrypt", "verify": "Verify", "sign": "Sign"}


@dataclass(frozen=True, repr=False)
class ActionP(Formula):
    kind: str     # engine action kind
    thread: str   # thread variable name
    term: Term


@dataclass(frozen=True, repr=False)
class HasP(Formula):
    thread: str
    term: Term


@dataclass(frozen=True, repr=False)
class FreshP(Formula):
    thread: str
    term: Term


@dataclass(frozen=True, repr=False)
class HonestP(Formula):
    agent: Term


@dataclass(frozen=True, repr=False)
class ContainsP(Formula):
    outer: Term
    inner: Term


@dataclass(frozen=True, repr=False)
class ComputesP(Formula):
    thread: str
    term: Term
    flavour: str = "any"  # dh, hash or any (decided by the term at evaluation)


@dataclass(frozen=True, repr=False)
class EqP(Formula):
    left: Term
    right: Term


@dataclass(frozen=True, repr=False)
class OrderP(Formula):
    first: ActionP
    second: ActionP


@dataclass(frozen=True, repr=False)
class Not(Formula):
    body: Formula


@dataclass(frozen=True, repr=False)
class And(Formula):
    parts: Tuple[Formula, ...]


@dataclass(frozen=True, repr=False)
class Or(Formula):
    parts: Tuple[Formula, ...]


@dataclass(frozen=True, repr=False)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Binder:
    """`thread X [of A]`, `party X` (threads plus the intruder), or a term variable."""
    kind: str                    # thread, party, term
    name: str
    var: Optional[Var] = None    # term binders
    of: Optional[Term] = None    # thread binders restricted to an agent


@dataclass(frozen=True, repr=False)
class Quant(Formula):
    q: str  # forall / exists
    binders: Tuple[Binder, ...]
    body: Formula


@dataclass(frozen=True, repr=False)
class Modal(Formula):
    pre: Formula
    program: Tuple[Action, ...]
    thread: str
    post: Formula


def hat(name: str) -> Var:
    """The agent executing thread `name`, written ^name."""
    return Var("^" + name, "agent")


# ---------------------------------------------------------------------------
# printing


def _t(t: Term, sigma=None) -> str:
    if sigma:
        t = apply(sigma, t, None, partial=True)
    return show(t)


def show_formula(f: Formula, sigma: Optional[Dict] = None, threads: Optional[Dict] = None) -> str:
    threads = threads or {}

    def th(name):
        if name in threads:
            v = threads[name]
            return "I" if v == INTRUDER else f"T{v}"
        return name

    def go(f, top=True) -> str:
        if isinstance(f, TrueF):
            return "true"
        if isinstance(f, FalseF):
            return "false"
        if isinstance(f, ActionP):
            return f"{_PRED_NAME[f.kind]}({th(f.thread)}, {_t(f.term, sigma)})"
        if isinstance(f, HasP):
            return f"Has({th(f.thread)}, {_t(f.term, sigma)})"
        if isinstance(f, FreshP):
            return f"Fresh({th(f.thread)}, {_t(f.term, sigma)})"
        if isinstance(f, HonestP):
            return f"Honest({_t(f.agent, sigma)})"
        if isinstance(f, ContainsP):
            return f"Contains({_t(f.outer, sigma)}, {_t(f.inner, sigma)})"
        if isinstance(f, ComputesP):
            return f"Computes({th(f.thread)}, {_t(f.term, sigma)})"
        if isinstance(f, EqP):
            return f"{_t(f.left, sigma)} = {_t(f.right, sigma)}"
        if isinstance(f, OrderP):
            return f"{go(f.first)} < {go(f.second)}"
        if isinstance(f, Not):
            if isinstance(f.body, EqP):
                return f"{_t(f.body.left, sigma)} != {_t(f.body.right, sigma)}"
            return f"~{go(f.body, False)}"
        if isinstance(f, And):
            s = " & ".join(go(p, False) for p in f.parts)
        elif isinstance(f, Or):
            s = " | ".join(go(p, False) for p in f.parts)
        elif isinstance(f, Implies):
            s = f"{go(f.left, False)} => {go(f.right, False)}"
        elif isinstance(f, Quant):
            bs = []
            for b in f.binders:
                if b.kind == "term":
                    v = b.var
                    bs.append(v.name if v.var_sort == "message" else f"{v.name}:{v.var_sort}")
                else:
                    bs.append(f"{b.kind} {b.name}" + (f" of {_t(b.of, sigma)}" if b.of is not None else ""))
            s = f"{f.q} {', '.join(bs)}. {go(f.body)}"
        elif isinstance(f, Modal):
            from .protocol import format_action
            prog = "; ".join(format_action(a) for a in f.program)
            pre = "" if isinstance(f.pre, TrueF) else go(f.pre, False) + " "
            s = f"{pre}[{prog}]_{f.thread} {go(f.post)}"
        else:
            raise TypeError(f)
        return s if top else f"({s})"

    return go(f)


# ---------------------------------------------------------------------------
# parser


class _Scope:
    def __init__(self):
        self.terms: Dict[str, Var] = {}
        self.threads: Dict[str, str] = {}  # name -> kind

    def child(self) -> "_Scope":
        s = _Scope()
        s.terms = dict(self.terms)
        s.threads = dict(self.threads)
        return s


class FormulaParser:
    def __init__(self, text: str):
        self.ts = TokenStream(text)

    def parse(self) -> Formula:
        f = self.formula(_Scope())
        if self.ts.tok.kind != "eof":
            self.ts.fail("end of formula")
        return f

    # formula := implies ; quantifiers and modal posts extend to the right
    def formula(self, scope) -> Formula:
        left = self.disj(scope)
        if self.ts.accept("=>"):
            return Implies(left, self.formula(scope))
        return left

    def disj(self, scope) -> Formula:
        parts = [self.conj(scope)]
        while self.ts.accept("|"):
            parts.append(self.conj(scope))
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conj(self, scope) -> Formula:
        parts = [self.unary(scope)]
        while self.ts.accept("&"):
            parts.append(self.unary(scope))
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def unary(self, scope) -> Formula:
        ts = self.ts
        if ts.accept("~"):
            return Not(self.unary(scope))
        if ts.at("forall", "exists"):
            return self.quant(scope)
        if ts.at("["):
            return self.modal(TrueF(), scope)
        f = self.primary(scope)
        if ts.at("["):
            return self.modal(f, scope)
        return f

    def quant(self, scope) -> Formula:
        ts = self.ts
        q = ts.next().text
        inner = scope.child()
        binders = []
        while True:
            tok = ts.ident("binder")
            if tok.text in ("thread", "party") and ts.tok.kind == "ident":
                name = ts.next().text
                of = None
                if tok.text == "thread" and ts.accept("of"):
                    of = self.term(inner)
                inner.threads[name] = tok.text
                inner.terms.pop(name, None)
                binders.append(Binder(tok.text, name, None, of))
            else:
                sort = "message"
                if ts.accept(":"):
                    st = ts.ident("sort")
                    if st.text not in SORTS:
                        raise DSLSemanticError(f"unknown sort {st.text!r}", st.line, st.col)
                    sort = st.text
                v = Var(tok.text, sort)
                inner.terms[tok.text] = v
                inner.threads.pop(tok.text, None)
                binders.append(Binder("term", tok.text, v))
            if not ts.accept(","):
                break
        ts.expect(".")
        return Quant(q, tuple(binders), self.formula(inner))

    def modal(self, pre: Formula, scope) -> Formula:
        ts = self.ts
        ts.expect("[")
        inner = scope.child()
        program = []
        while not ts.at("]"):
            program.append(self.program_action(inner))
            if not ts.accept(";"):
                break
        ts.expect("]")
        tok = ts.ident("_Thread")
        name = tok.text[1:] if tok.text.startswith("_") else ""
        if not name:
            name = ts.ident("thread variable").text
        if name not in scope.threads:
            raise DSLSemanticError(f"unbound thread variable {name}", tok.line, tok.col)
        post = self.formula(inner)
        return Modal(pre, tuple(program), name, post)

    def program_action(self, scope) -> Action:
        ts = self.ts
        tp = self._terms(scope)
        if ts.accept("new"):
            return New(self.term(scope))
        if ts.accept("send"):
            return Send(tp.tuple_())
        if ts.accept("receive"):
            return Receive(tp.tuple_())
        if ts.accept("verify"):
            a = tp.term()
            ts.expect(",")
            b = tp.term()
            ts.expect(",")
            return VerifyAct(a, b, tp.term())
        out = tp.term()
        ts.expect(":=")
        op = ts.expect("enc", "dec", "sign").text
        a = tp.term()
        ts.expect(",")
        b = tp.term()
        return {"enc": EncAct, "dec": DecAct, "sign": SignAct}[op](out, a, b)

    def _terms(self, scope) -> TermParser:
        def resolve(tok: Token, sort: Optional[str]) -> Term:
            v = scope.terms.get(tok.text)
            if v is not None:
                if sort is not None and sort != v.var_sort:
                    raise DSLSemanticError(f"{tok.text} is bound with sort {v.var_sort}", tok.line, tok.col)
                return v
            if tok.text in scope.threads:
                raise DSLSemanticError(f"thread variable {tok.text} used as a term (write ^{tok.text})",
                                       tok.line, tok.col)
            if tok.text[:1].isupper() and sort in (None, "agent"):
                return Agent(tok.text)
            raise DSLSemanticError(f"unbound variable {tok.text}", tok.line, tok.col)

        def hat_(tok: Token) -> Term:
            if tok.text not in scope.threads:
                raise DSLSemanticError(f"unbound thread variable {tok.text}", tok.line, tok.col)
            return hat(tok.text)

        return TermParser(self.ts, resolve, hat_)

    def term(self, scope) -> Term:
        return self._terms(scope).term()

    def thread_ref(self, scope) -> str:
        tok = self.ts.ident("thread variable")
        if tok.text not in scope.threads:
            raise DSLSemanticError(f"unbound thread variable {tok.text}", tok.line, tok.col)
        return tok.text

    def primary(self, scope) -> Formula:
        ts = self.ts
        tok = ts.tok
        if ts.accept("("):
            # parenthesised formula or a tuple term compared with =
            save = ts.i
            try:
                f = self.formula(scope)
                ts.expect(")")
                return f
            except DSLSemanticError:
                raise
            except Exception:
                ts.i = save - 1
        if ts.accept("true"):
            return TrueF()
        if ts.accept("false"):
            return FalseF()
        if tok.kind == "ident" and ts.peek().text == "(":
            name = tok.text
            if name in PREDICATES:
                a = self.action_atom(scope)
                if ts.accept("<"):
                    if not (ts.tok.text in PREDICATES and ts.peek().text == "("):
                        ts.fail("action predicate after '<'")
                    return OrderP(a, self.action_atom(scope))
                return a
            if name in ("Has", "Fresh", "Computes", "ComputesDH", "ComputesDh", "ComputesHash"):
                ts.next()
                ts.expect("(")
                th = self.thread_ref(scope)
                ts.expect(",")
                t = self._terms(scope).tuple_()
                ts.expect(")")
                if name == "Has":
                    return HasP(th, t)
                if name == "Fresh":
                    return FreshP(th, t)
                flavour = {"Computes": "any", "ComputesHash": "hash"}.get(name, "dh")
                return ComputesP(th, t, flavour)
            if name == "Honest":
                ts.next()
                ts.expect("(")
                a = self.term(scope)
                ts.expect(")")
                return HonestP(a)
            if name == "Contains":
                ts.next()
                ts.expect("(")
                a = self.term(scope)
                ts.expect(",")
                b = self._terms(scope).tuple_()
                ts.expect(")")
                return ContainsP(a, b)
        left = self.term(scope)
        op = ts.expect("=", "!=").text
        right = self.term(scope)
        eq = EqP(left, right)
        return eq if op == "=" else Not(eq)

    def action_atom(self, scope) -> ActionP:
        ts = self.ts
        name = ts.next().text
        ts.expect("(")
        th = self.thread_ref(scope)
        ts.expect(",")
        t = self._terms(scope).tuple_()
        ts.expect(")")
        return ActionP(PREDICATES[name], th, t)


def parse_formula(text: str) -> Formula:
    return FormulaParser(text).parse()


# ---------------------------------------------------------------------------
# evaluation

Env = Tuple[Dict[str, object], Dict[Var, Term]]  # thread bindings, term bindings


def _bind_thread(run: Run, env: Env, name: str, tid) -> Optional[Env]:
    threads, sigma = env
    if name in threads:
        return env if threads[name] == tid else None
    agent = INTRUDER_AGENT if tid == INTRUDER else run.thread(tid).agent
    h = hat(name)
    if h in sigma and sigma[h] != agent:
        return None
    t2 = dict(threads)
    t2[name] = tid
    s2 = dict(sigma)
    s2[h] = agent
    return (t2, s2)


def _free(t: Term, sigma) -> bool:
    return any(v not in sigma for v in variables(t))


class Evaluator:
    """Evaluates closed formulas on a run. Has is memoized through the run's
    cached knowledge objects."""

    def __init__(self, run: Run, config: Optional[SemanticsConfig] = None):
        self.run = run
        self.config = config or run.config
        # formula variables are always matched with their sorts
        self.mconfig = self.config.with_(typed=True)
        self._prefixes: Dict[int, Run] = {len(run.events): run}

    # -- helpers -----------------------------------------------------------
    def at(self, n: int) -> Run:
        r = self._prefixes.get(n)
        if r is None:
            r = self.run.prefix(n)
            self._prefixes[n] = r
        return r

    def ground(self, t: Term, sigma) -> Term:
        try:
            return apply(sigma, t, self.config)
        except TermError as e:
            raise EvalError(str(e)) from None

    def thread_domain(self, run: Run, b: Binder, env: Env) -> List[object]:
        out: List[object] = [t.tid for t in run.threads]
        agent = None if b.of is None else self.ground(b.of, env[1])
        if agent is not None:
            out = [t for t in out if run.thread(t).agent == agent]
        if b.kind == "party" and agent in (None, INTRUDER_AGENT):
            out.append(INTRUDER)
        return out

    def term_domain(self, run: Run, v: Var) -> List[Term]:
        if v.var_sort == "agent":
            return list(run.agents())
        return [t for t in run.domain() if subsort(t.sort, v.var_sort)]

    def events_of(self, run: Run, kind: str, tid) -> List[Event]:
        if tid == INTRUDER:
            return [e for e in run.virtual_sends() if kind == "send"]
        return [e for e in run.events if e.tid == tid and e.kind == kind]

    def all_events(self, run: Run, kind: str) -> List[Event]:
        evs = [e for e in run.events if e.kind == kind]
        if kind == "send":
            evs = evs + run.virtual_sends()
        return evs

    def knowledge(self, run: Run, tid):
        if tid == INTRUDER:
            return run.intruder_knowledge()
        return run.thread_knowledge(tid)

    def has(self, run: Run, tid, t: Term) -> bool:
        return self.knowledge(run, tid).derivable(normalize_dh(t, self.config))

    # -- truth -------------------------------------------------------------
    def holds(self, f: Formula, env: Optional[Env] = None, run: Optional[Run] = None) -> bool:
        return self.eval(f, env or ({}, {}), run or self.run)

    def eval(self, f: Formula, env: Env, run: Run) -> bool:
        threads, sigma = env
        cfg = self.config
        if isinstance(f, TrueF):
            return True
        if isinstance(f, FalseF):
            return False
        if isinstance(f, ActionP):
            tid = self._tid(f.thread, threads)
            t = self.ground(f.term, sigma)
            return any(event_term(e.action) == t for e in self.events_of(run, f.kind, tid))
        if isinstance(f, HasP):
            return self.has(run, self._tid(f.thread, threads), self.ground(f.term, sigma))
        if isinstance(f, FreshP):
            tid = self._tid(f.thread, threads)
            return tid != INTRUDER and run.fresh(tid, self.ground(f.term, sigma))
        if isinstance(f, HonestP):
            a = self.ground(f.agent, sigma)
            if a not in run.ctx.honest:
                return False
            return all(run.at_boundary(t.tid) for t in run.threads if t.agent == a)
        if isinstance(f, ContainsP):
            return contains(self.ground(f.outer, sigma), self.ground(f.inner, sigma), cfg)
        if isinstance(f, ComputesP):
            return self.computes(run, self._tid(f.thread, threads), self.ground(f.term, sigma), f.flavour)
        if isinstance(f, EqP):
            return self.ground(f.left, sigma) == self.ground(f.right, sigma)
        if isinstance(f, OrderP):
            return any(True for _ in self._order(f, env, run))
        if isinstance(f, Not):
            return not self.eval(f.body, env, run)
        if isinstance(f, And):
            return all(self.eval(p, env, run) for p in f.parts)
        if isinstance(f, Or):
            return any(self.eval(p, env, run) for p in f.parts)
        if isinstance(f, Implies):
            return (not self.eval(f.left, env, run)) or self.eval(f.right, env, run)
        if isinstance(f, Quant):
            if f.q == "forall":
                return next(self.falsifiers(f, env, run), None) is None
            return any(True for _ in self.witnesses(f, env, run))
        if isinstance(f, Modal):
            return next(self._modal_failures(f, env, run), None) is None
        raise TypeError(f)

    def _tid(self, name: str, threads):
        if name not in threads:
            raise EvalError(f"unbound thread variable {name}")
        return threads[name]

    def computes(self, run: Run, tid, t: Term, flavour: str = "any") -> bool:
        if isinstance(t, DhH) and flavour in ("dh", "any"):
            a, b = t.first, t.second
            return (self.has(run, tid, a) and self.has(run, tid, DhG(b))) or \
                (self.has(run, tid, b) and self.has(run, tid, DhG(a)))
        if isinstance(t, Hash) and flavour in ("hash", "any"):
            return self.has(run, tid, t.key) and self.has(run, tid, t.payload)
        raise EvalError(f"Computes is defined for h(.,.) and hash terms only, got {show(t)}")

    # -- quantifiers -------------------------------------------------------
    def _completions(self, binders: Sequence[Binder], env: Env, run: Run,
                     restrict: Optional[Callable[[object], bool]] = None) -> Iterator[Env]:
        """All ways to bind the binders still unbound in `env`."""
        threads, sigma = env
        lead = next((b for b in binders if b.kind != "term"), None) if restrict else None
        todo = []
        for b in binders:
            if b.kind == "term":
                if b.var not in sigma:
                    todo.append(b)
            elif b.name not in threads:
                todo.append(b)
            elif b is lead and not restrict(threads[b.name]):
                return
        if not todo:
            yield env
            return

        def rec(i: int, env: Env):
            if i == len(todo):
                yield env
                return
            b = todo[i]
            if b.kind == "term":
                for t in self.term_domain(run, b.var):
                    s2 = dict(env[1])
                    s2[b.var] = t
                    yield from rec(i + 1, (env[0], s2))
            else:
                for tid in self.thread_domain(run, b, env):
                    if b is lead and not restrict(tid):
                        continue
                    e2 = _bind_thread(run, env, b.name, tid)
                    if e2 is not None:
                        yield from rec(i + 1, e2)

        yield from rec(0, env)

    def _scoped(self, binders: Sequence[Binder], env: Env) -> Env:
        """Drop outer bindings shadowed by these binders."""
        threads, sigma = env
        names = {b.name for b in binders}
        if not any(n in threads or Var(n) in sigma for n in names) and \
                not any(b.var in sigma for b in binders if b.var is not None):
            return env
        t2 = {k: v for k, v in threads.items() if k not in names}
        s2 = {k: v for k, v in sigma.items()
              if not (isinstance(k, Var) and (k.name in names or k.name[1:] in names))}
        return (t2, s2)

    def _check_binding(self, binders, env: Env, run: Run) -> bool:
        """Solutions found by matching must still respect binder domains."""
        threads, sigma = env
        for b in binders:
            if b.kind == "term":
                v = sigma.get(b.var)
                if v is not None and not subsort(v.sort, b.var.var_sort):
                    return False
            else:
                tid = threads.get(b.name)
                if tid is None:
                    continue
                if tid == INTRUDER and b.kind != "party":
                    return False
                if b.of is not None and tid != INTRUDER:
                    if run.thread(tid).agent != self.ground(b.of, sigma):
                        return False
        return True

    def falsifiers(self, f: Quant, env: Env, run: Run,
                   restrict: Optional[Callable[[object], bool]] = None) -> Iterator[Env]:
        """Bindings of a universal's binders under which the body is false."""
        binders, body = self._prefix(f, "forall")
        env = self._scoped(binders, env)
        if isinstance(body, Implies):
            trigger, seen = body.left, set()
            for partial in self.solve(trigger, env, run):
                if not self._check_binding(binders, partial, run):
                    continue
                for full in self._completions(binders, partial, run, restrict):
                    key = _env_key(full)
                    if key in seen:
                        continue
                    seen.add(key)
                    if self.eval(trigger, full, run) and not self.eval(body.right, full, run):
                        yield full
        elif isinstance(body, Modal):
            seen = set()
            for partial in self._modal_triggers(body, env, run):
                if not self._check_binding(binders, partial, run):
                    continue
                for full in self._completions(binders, partial, run, restrict):
                    key = _env_key(full)
                    if key in seen:
                        continue
                    seen.add(key)
                    if not self.eval(body, full, run):
                        yield full
        else:
            for full in self._completions(binders, env, run, restrict):
                if not self.eval(body, full, run):
                    yield full

    def witnesses(self, f: Quant, env: Env, run: Run) -> Iterator[Env]:
        binders, body = self._prefix(f, "exists")
        env = self._scoped(binders, env)
        seen = set()
        for partial in self.solve(body, env, run):
            if not self._check_binding(binders, partial, run):
                continue
            for full in self._completions(binders, partial, run):
                key = _env_key(full)
                if key in seen:
                    continue
                seen.add(key)
                if self.eval(body, full, run):
                    yield full

    @staticmethod
    def _prefix(f: Quant, q: str) -> Tuple[Tuple[Binder, ...], Formula]:
        binders = list(f.binders)
        body = f.body
        while isinstance(body, Quant) and body.q == q:
            binders.extend(body.binders)
            body = body.body
        return tuple(binders), body

    # -- solving: candidate bindings from the run ---------------------------
    def solve(self, f: Formula, env: Env, run: Run) -> Iterator[Env]:
        """Yield extensions of env that may satisfy f. Complete: every full
        binding making f true extends some yielded env. Variables that cannot
        be bound by matching are left for the caller to enumerate."""
        threads, sigma = env
        if isinstance(f, ActionP):
            yield from self._solve_action(f, env, run)
        elif isinstance(f, OrderP):
            for e, _, _ in self._order(f, env, run):
                yield e
        elif isinstance(f, And):
            parts = sorted(f.parts, key=_solve_rank)
            yield from self._solve_all(parts, env, run)
        elif isinstance(f, Or):
            for p in f.parts:
                yield from self.solve(p, env, run)
        elif isinstance(f, ContainsP) and not _free(f.outer, sigma) and _free(f.inner, sigma):
            outer = self.ground(f.outer, sigma)
            inner = f.inner
            seen = set()
            for s in subterms(normalize_dh(outer, self.config)):
                if s in seen:
                    continue
                seen.add(s)
                m = match_term(inner, s, sigma, self.mconfig)
                if m is not None:
                    yield (threads, m)
        elif isinstance(f, EqP) and (_free(f.left, sigma) != _free(f.right, sigma)):
            pat, val = (f.left, f.right) if _free(f.left, sigma) else (f.right, f.left)
            m = match_term(pat, self.ground(val, sigma), sigma, self.mconfig)
            if m is not None:
                yield (threads, m)
        elif isinstance(f, (HasP, FreshP, ComputesP)) and f.thread not in threads:
            for t in run.threads:
                e2 = _bind_thread(run, env, f.thread, t.tid)
                if e2 is not None:
                    yield e2
        elif isinstance(f, Quant) and f.q == "exists":
            # bind nothing, but prune when already decidable
            if self._closed(f, env) and not self.eval(f, env, run):
                return
            yield env
        else:
            if self._closed(f, env) and not self.eval(f, env, run):
                return
            yield env

    def _solve_all(self, parts, env, run):
        if not parts:
            yield env
            return
        for e in self.solve(parts[0], env, run):
            yield from self._solve_all(parts[1:], e, run)

    def _closed(self, f: Formula, env: Env) -> bool:
        threads, sigma = env
        for name in formula_threads(f):
            if name not in threads:
                return False
        for v in formula_vars(f):
            if v not in sigma:
                return False
        return True

    def _solve_action(self, f: ActionP, env: Env, run: Run) -> Iterator[Env]:
        threads, sigma = env
        if f.thread in threads:
            events = self.events_of(run, f.kind, threads[f.thread])
        else:
            events = self.all_events(run, f.kind)
        pattern = apply(sigma, f.term, self.config, partial=True)
        for e in events:
            e2 = _bind_thread(run, env, f.thread, e.tid)
            if e2 is None:
                continue
            m = match_term(apply(e2[1], pattern, self.config, partial=True), event_term(e.action),
                           e2[1], self.mconfig)
            if m is not None:
                yield (e2[0], m)

    def _order(self, f: OrderP, env: Env, run: Run) -> Iterator[Tuple[Env, Event, Event]]:
        for e1 in self._solve_action(f.first, env, run):
            for ev1 in self._matching_events(f.first, e1, run):
                for e2 in self._solve_action(f.second, e1, run):
                    for ev2 in self._matching_events(f.second, e2, run):
                        if ev1.position() < ev2.position():
                            yield e2, ev1, ev2

    def _matching_events(self, a: ActionP, env: Env, run: Run) -> List[Event]:
        threads, sigma = env
        t = apply(sigma, a.term, self.config, partial=True)
        out = []
        for e in self.events_of(run, a.kind, threads[a.thread]):
            if match_term(t, event_term(e.action), sigma, self.mconfig) is not None:
                out.append(e)
        return out

    # -- modal triples -----------------------------------------------------
    def _segments(self, f: Modal, env: Env, run: Run) -> Iterator[Tuple[Env, int, int]]:
        """Contiguous segments of a thread's events matching the program."""
        threads, sigma = env
        tids = [threads[f.thread]] if f.thread in threads else [t.tid for t in run.threads]
        n = len(f.program)
        for tid in tids:
            e0 = _bind_thread(run, env, f.thread, tid)
            if e0 is None:
                continue
            evs = run.thread_events(tid)
            for i in range(len(evs) - n + 1):
                s = dict(e0[1])
                ok = True
                for pat, ev in zip(f.program, evs[i:i + n]):
                    if type(pat) is not type(ev.action):
                        ok = False
                        break
                    for pf, gf in zip(pat.fields(), ev.action.fields()):
                        m = match_term(pf, gf, s, self.mconfig)
                        if m is None:
                            ok = False
                            break
                        s = m
                    if not ok:
                        break
                if ok:
                    yield (e0[0], s), evs[i].index, evs[i + n - 1].index + 1

    def _modal_triggers(self, f: Modal, env: Env, run: Run) -> Iterator[Env]:
        for e, start, _ in self._segments(f, env, run):
            before = self.at(start) if run is self.run else run.prefix(start)
            yield from self.solve(f.pre, e, before)

    def _modal_failures(self, f: Modal, env: Env, run: Run) -> Iterator[Env]:
        for e, start, end in self._segments(f, env, run):
            before = self.at(start) if run is self.run else run.prefix(start)
            after = self.at(end) if run is self.run else run.prefix(end)
            for pe in self.solve(f.pre, e, before):
                if not self._closed(f.pre, pe):
                    raise EvalError("modal pre-condition has variables not fixed by the program")
                if self.eval(f.pre, pe, before) and not self.eval(f.post, pe, after):
                    yield pe


def _solve_rank(f: Formula) -> int:
    if isinstance(f, ActionP):
        return 0
    if isinstance(f, OrderP):
        return 1
    if isinstance(f, (ContainsP, EqP)):
        return 2
    if isinstance(f, (Or,)):
        return 3
    return 4


def _env_key(env: Env):
    threads, sigma = env
    return (tuple(sorted((k, str(v)) for k, v in threads.items())),
            frozenset(sigma.items()))


def formula_threads(f: Formula) -> set:
    """Free thread variable names."""
    if isinstance(f, (ActionP, HasP, FreshP, ComputesP)):
        return {f.thread} | {v.name[1:] for v in variables(f.term) if v.name.startswith("^")}
    if isinstance(f, Quant):
        inner = formula_threads(f.body)
        for b in f.binders:
            if b.of is not None:
                inner |= {v.name[1:] for v in variables(b.of) if v.name.startswith("^")}
        return inner - {b.name for b in f.binders if b.kind != "term"}
    if isinstance(f, Modal):
        return formula_threads(f.pre) | formula_threads(f.post) | {f.thread}
    if isinstance(f, OrderP):
        return formula_threads(f.first) | formula_threads(f.second)
    return {v.name[1:] for v in formula_vars(f) if v.name.startswith("^")} | \
        set().union(*[formula_threads(c) for c in _children(f)])


def _children(f: Formula) -> List[Formula]:
    if isinstance(f, Not):
        return [f.body]
    if isinstance(f, (And, Or)):
        return list(f.parts)
    if isinstance(f, Implies):
        return [f.left, f.right]
    return []


def formula_vars(f: Formula) -> set:
    """Free term variables (hat variables included)."""
    if isinstance(f, (ActionP, HasP, FreshP, ComputesP)):
        return set(variables(f.term)) | {hat(f.thread)}
    if isinstance(f, HonestP):
        return set(variables(f.agent))
    if isinstance(f, ContainsP):
        return set(variables(f.outer)) | set(variables(f.inner))
    if isinstance(f, EqP):
        return set(variables(f.left)) | set(variables(f.right))
    if isinstance(f, OrderP):
        return formula_vars(f.first) | formula_vars(f.second)
    if isinstance(f, Quant):
        inner = formula_vars(f.body)
        for b in f.binders:
            if b.of is not None:
                inner |= set(variables(b.of))
        bound = {b.var for b in f.binders if b.kind == "term"}
        bound |= {hat(b.name) for b in f.binders if b.kind != "term"}
        return inner - bound
    if isinstance(f, Modal):
        prog = set()
        for a in f.program:
            for x in a.fields():
                prog |= set(variables(x))
        return (formula_vars(f.pre) | formula_vars(f.post) | prog) - set()
    out = set()
    for c in _children(f):
        out |= formula_vars(c)
    return out


def _modal_bound(f: Modal) -> set:
    out = set()
    for a in f.program:
        for x in a.fields():
            out |= set(variables(x))
    return out


# ---------------------------------------------------------------------------
# public entry points


def eval_formula(run: Run, f: Formula, config: Optional[SemanticsConfig] = None) -> bool:
    return Evaluator(run, config).holds(f)


def eval_atom(run: Run, atom: Formula, env: Optional[Env] = None) -> bool:
    if isinstance(atom, (Quant, And, Or, Not, Implies, Modal)):
        raise EvalError("not an atom")
    return Evaluator(run).holds(atom, env)


def eval_computes_dh(run: Run, tid: int, t: Term) -> bool:
    if not isinstance(normalize_dh(t, run.config), DhH):
        raise EvalError("ComputesDh needs a term h(a,b)")
    return Evaluator(run).computes(run, tid, normalize_dh(t, run.config), "dh")


def eval_computes_hash(run: Run, tid: int, t: Term) -> bool:
    if not isinstance(t, Hash):
        raise EvalError("ComputesHash needs a term hash{a}K")
    return Evaluator(run).computes(run, tid, t, "hash")


@dataclass
class Instance:
    """A closed instance of a schema: the body with its top-level binders fixed."""
    formula: Formula
    threads: Dict[str, object]
    sigma: Dict[Var, Term]

    def show(self) -> str:
        sig = {k: v for k, v in self.sigma.items()}
        return show_formula(self.formula, sig, self.threads)

    def env(self) -> Env:
        return (dict(self.threads), dict(self.sigma))


def schema_binders(f: Formula) -> Tuple[Tuple[Binder, ...], Formula]:
    if isinstance(f, Quant) and f.q == "forall":
        return Evaluator._prefix(f, "forall")
    return (), f


def axiom_instances(run: Run, schema: Formula) -> List[Instance]:
    """All instantiations of the schema's top-level universal binders over the
    run's threads, agents and term domain, in deterministic order."""
    binders, body = schema_binders(schema)
    ev = Evaluator(run)
    out = []
    for threads, sigma in ev._completions(binders, ({}, {}), run):
        out.append(Instance(body, threads, sigma))
    return out


def violation(run: Run, f: Formula, restrict: Optional[Callable[[object], bool]] = None,
              evaluator: Optional[Evaluator] = None) -> Optional[Instance]:
    """A falsifying instance of f on the run, or None if f holds.

    For a top-level universal the instance fixes its binders; `restrict`
    limits the first thread binder (used by the per-block checker)."""
    ev = evaluator or Evaluator(run)
    if isinstance(f, Quant) and f.q == "forall":
        binders, body = Evaluator._prefix(f, "forall")
        for env in ev.falsifiers(f, ({}, {}), run, restrict):
            return Instance(body, env[0], env[1])
        return None
    if not ev.holds(f):
        return Instance(f, {}, {})
    return None


def replay(run: Run, inst: Instance) -> bool:
    """Re-evaluate a stored instance; False means the counterexample stands."""
    return Evaluator(run).holds(inst.formula, inst.env())
