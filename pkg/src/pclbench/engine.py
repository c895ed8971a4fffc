"""Bounded enumeration of protocol runs against a Dolev-Yao network.

Honest threads execute their basic sequences atomically: a scheduling step
picks a thread (possibly a new one) and runs its whole next block. Sends
only grow the intruder's knowledge, so deferring other threads until the
end of a block loses no reachable receive. Creation is lazy and thread ids
are canonical slot numbers, so the same run is produced whatever order the
threads were started in. Sleep sets prune interleavings that differ only in
the order of independent blocks of different threads.
"""
from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import (
    Callable, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Set, Tuple,
)

from .config import Bounds, SemanticsConfig
from .deduction import Knowledge, decryption_key
from .protocol import (
    Action, DecAct, EncAct, New, Protocol, Receive, Role, Send, SignAct, VerifyAct,
    split_points,
)
from .terms import (
    Agent, DhG, Enc, Nonce, PrivKey, PubKey, Sig, SymKey, Term, Var,
    apply, match_term, normalize_dh, show, subsort, subterms, variables,
)

INTRUDER = "I"
INTRUDER_NONCES = (Nonce("n", INTRUDER, "nonce"), Nonce("e", INTRUDER, "dhpriv"))


@dataclass(frozen=True)
class ThreadInfo:
    tid: int
    role: str
    agent: Agent
    honest: bool
    params: Tuple[Tuple[Var, Term], ...]
    instance: int = 0

    def label(self) -> str:
        return f"T{self.tid}({self.role},{self.agent.name})"


@dataclass(frozen=True)
class Event:
    index: int
    tid: object          # thread id, or INTRUDER for synthesized sends
    action: Action       # ground
    pc: int = -1         # role position of the action; -1 for virtual events
    virtual: bool = False

    @property
    def kind(self) -> str:
        return self.action.kind

    def position(self) -> float:
        # virtual sends sit just before the receive they explain
        return self.index - 0.5 if self.virtual else float(self.index)


def event_terms(action: Action) -> Tuple[Term, ...]:
    """Terms an action adds to its thread's knowledge."""
    if isinstance(action, (New, Send, Receive)):
        return action.fields()
    if isinstance(action, (EncAct, DecAct, SignAct)):
        return (action.var,)
    return ()


def format_action(action: Action) -> str:
    f = action.fields()
    if isinstance(action, (New, Send, Receive)):
        body = show(f[0])
        if body.startswith("(") and not isinstance(action, New):
            body = body[1:-1]
        return f"{action.kind} {body}"
    if isinstance(action, VerifyAct):
        return f"verify {show(f[0])}, {show(f[1])}, {show(f[2])}"
    return f"{action.kind} {show(f[0])} := {show(f[1])}, {show(f[2])}"


# ---------------------------------------------------------------------------
# static context


def _sym_labels(protocol: Protocol) -> Set[Tuple[str, int]]:
    out = set()
    terms: List[Term] = list(protocol.setup.intruder_knows)
    for role in protocol.roles:
        for a in role.actions:
            terms.extend(a.fields())
        terms.extend(t for _, t in role.fixed)
    for t in terms:
        for s in subterms(t):
            if isinstance(s, SymKey):
                out.add((s.label, len(s.agents)))
    return out


class Context:
    """Everything about an enumeration that does not change between states."""

    def __init__(self, protocol: Protocol, bounds: Bounds, config: SemanticsConfig):
        self.protocol = protocol
        self.bounds = bounds
        self.config = config
        setup = protocol.setup
        self.pool: Tuple[Agent, ...] = setup.agents
        self.honest: FrozenSet[Agent] = frozenset(setup.honest)
        self.labels = sorted(_sym_labels(protocol))
        self.roles: Dict[str, Role] = {r.name: r for r in protocol.roles}
        self.blocks: Dict[str, List[Tuple[int, int]]] = {}
        self.block_of: Dict[str, List[int]] = {}
        for r in protocol.roles:
            cuts = split_points(r.actions) + [len(r.actions)]
            spans = [(cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1) if cuts[i] < cuts[i + 1]]
            self.blocks[r.name] = spans
            owner = []
            for j, (a, b) in enumerate(spans):
                owner.extend([j] * (b - a))
            self.block_of[r.name] = owner
        self.boundaries = {name: {a for a, _ in spans} | {len(self.roles[name].actions)}
                           for name, spans in self.blocks.items()}

        # canonical thread slots: role order, then assignment order, then instance
        self.slots: List[Tuple[str, Tuple[Agent, ...], int]] = []
        self.slot_of: Dict[Tuple[str, Tuple[Agent, ...], int], int] = {}
        self.assignments: Dict[str, List[Tuple[Agent, ...]]] = {}
        for r in protocol.roles:
            limit = bounds.threads_for(r.name)
            assigns = []
            self_pos = r.params.index(r.self_param)
            for combo in itertools.permutations(self.pool, len(r.params)):
                if combo[self_pos] in self.honest:
                    assigns.append(combo)
            self.assignments[r.name] = assigns if limit > 0 else []
            for combo in self.assignments[r.name]:
                for inst in range(limit):
                    self.slot_of[(r.name, combo, inst)] = len(self.slots)
                    self.slots.append((r.name, combo, inst))

        self.params_constants: List[Term] = []
        for r in protocol.roles:
            for _, t in r.fixed:
                if t not in self.params_constants:
                    self.params_constants.append(t)
        self.intruder_initial = self._intruder_initial()
        self._refined: Dict[Tuple[str, int], Tuple[Term, tuple]] = {}

    def sym_keys(self, agents: Iterable[Agent]) -> List[SymKey]:
        """All shared keys (for labels used in the protocol) involving any of `agents`."""
        agents = set(agents)
        out = []
        for label, arity in self.labels:
            for combo in itertools.product(self.pool, repeat=arity):
                if agents.intersection(combo):
                    out.append(SymKey(label, combo))
        return out

    def _intruder_initial(self) -> List[Term]:
        terms: List[Term] = []
        terms.extend(self.pool)
        terms.extend(PubKey(a) for a in self.pool)
        terms.extend(self.protocol.setup.intruder_knows)
        terms.extend(INTRUDER_NONCES)
        dishonest = [a for a in self.pool if a not in self.honest]
        terms.extend(PrivKey(a) for a in dishonest)
        terms.extend(self.sym_keys(dishonest))
        terms.extend(self.params_constants)
        out, seen = [], set()
        for t in terms:
            t = normalize_dh(t, self.config)
            if t not in seen:
                seen.add(t)
                out.append(t)
        return out

    def thread_initial(self, role: Role, agent: Agent, params: Sequence[Tuple[Var, Term]]) -> List[Term]:
        terms: List[Term] = list(self.pool)
        terms.extend(PubKey(a) for a in self.pool)
        terms.append(PrivKey(agent))
        terms.extend(self.sym_keys([agent]))
        terms.extend(t for _, t in params if not isinstance(t, Agent))
        return terms

    def refined(self, role: Role, start: int) -> Tuple[Term, Tuple[Tuple[Var, Term], ...]]:
        """Receive pattern with later verify/dec guards of the same block
        folded in: a variable that must verify as sig{p}A is replaced by
        that signature pattern, one that must decrypt under K by enc{_}K.
        Returns the refined pattern and the replaced (variable, template)
        pairs. Guards still run afterwards, so this only prunes."""
        key = (role.name, start)
        hit = self._refined.get(key)
        if hit is not None:
            return hit
        recv = role.actions[start]
        pattern = recv.pattern
        pvars = set(variables(pattern))
        end = next(b for a, b in self.blocks[role.name] if a == start)
        repl: Dict[Var, Term] = {}
        for a in role.actions[start + 1:end]:
            if isinstance(a, VerifyAct) and isinstance(a.sig, Var) and a.sig in pvars \
                    and a.sig not in repl:
                repl[a.sig] = Sig(a.payload, a.signer)
            elif isinstance(a, DecAct) and isinstance(a.cipher, Var) and a.cipher in pvars \
                    and a.cipher not in repl:
                repl[a.cipher] = Enc(Var(f"_{a.var.name}", a.var.var_sort), a.key)
        # templates may only mention variables the pattern itself binds or
        # that are already bound; otherwise leave the variable alone
        bound_later = {v for a in role.actions[start + 1:end] for v in _outs(a)}
        repl = {v: t for v, t in repl.items()
                if not any(w in bound_later for w in variables(t))}
        if repl:
            pattern = apply(repl, pattern, None, partial=True)
        hit = (pattern, tuple(repl.items()))
        self._refined[key] = hit
        return hit


def _outs(a: Action) -> List[Var]:
    out = a.out()
    return [out] if isinstance(out, Var) else []


# ---------------------------------------------------------------------------
# dynamic state


class ThreadState:
    __slots__ = ("info", "pc", "sigma", "terms")

    def __init__(self, info: ThreadInfo, pc: int, sigma: Dict[Var, Term], terms: Tuple[Term, ...]):
        self.info = info
        self.pc = pc
        self.sigma = sigma
        self.terms = terms


class State:
    __slots__ = ("ctx", "threads", "events", "snapshots", "created")

    def __init__(self, ctx: Context, threads: Dict[int, ThreadState], events: Tuple[Event, ...],
                 snapshots: Tuple[Knowledge, ...], created: Dict[str, int]):
        self.ctx = ctx
        self.threads = threads
        self.events = events
        self.snapshots = snapshots  # intruder knowledge before event i, plus final
        self.created = created

    @property
    def intruder(self) -> Knowledge:
        return self.snapshots[-1]

    @classmethod
    def initial(cls, ctx: Context) -> "State":
        k0 = Knowledge(ctx.intruder_initial, ctx.config, ctx.bounds.max_intruder_depth)
        return cls(ctx, {}, (), (k0,), {r.name: 0 for r in ctx.protocol.roles})


@dataclass
class Move:
    key: tuple
    tid: int
    actions: List[Tuple[int, Action]]  # (pc, ground action)
    thread: ThreadState
    create: bool


class _Blocked(Exception):
    pass


def _new_thread(ctx: Context, tid: int) -> ThreadState:
    role_name, combo, inst = ctx.slots[tid]
    role = ctx.roles[role_name]
    params = tuple(zip(role.params, combo)) + tuple(role.fixed)
    agent = combo[role.params.index(role.self_param)]
    info = ThreadInfo(tid, role_name, agent, agent in ctx.honest, params, inst)
    sigma = {v: normalize_dh(t, ctx.config) for v, t in params}
    return ThreadState(info, 0, sigma, tuple(ctx.thread_initial(role, agent, params)))


def _thread_knows(ctx: Context, terms: Sequence[Term], goal: Term) -> bool:
    goal = normalize_dh(goal, ctx.config)
    if goal in terms:
        return True
    return Knowledge(terms, ctx.config, ctx.bounds.max_intruder_depth).derivable(goal)


def _exec(ctx: Context, ts: ThreadState, action: Action, sigma: Dict[Var, Term],
          terms: List[Term]) -> Action:
    """Execute one non-receive action in place; raise _Blocked on a failed guard."""
    config = ctx.config
    if isinstance(action, New):
        v = action.var
        value = Nonce(v.name, ts.info.tid, v.var_sort)
        sigma[v] = value
        return New(value)
    if isinstance(action, Send):
        return Send(apply(sigma, action.msg, config))
    if isinstance(action, EncAct):
        value = normalize_dh(Enc(apply(sigma, action.payload, config), apply(sigma, action.key, config)), config)
        sigma[action.var] = value
        return EncAct(value, value.payload, value.key)
    if isinstance(action, DecAct):
        c = apply(sigma, action.cipher, config)
        k = apply(sigma, action.key, config)
        if not isinstance(c, Enc) or normalize_dh(c.key, config) != k:
            raise _Blocked
        dk = decryption_key(k, config.key_scheme)
        if dk is None or not _thread_knows(ctx, terms, dk):
            raise _Blocked
        value = c.payload
        if config.typed and not subsort(value.sort, action.var.var_sort):
            raise _Blocked
        sigma[action.var] = value
        return DecAct(value, c, k)
    if isinstance(action, SignAct):
        p = apply(sigma, action.payload, config)
        s = apply(sigma, action.signer, config)
        if not _thread_knows(ctx, terms, PrivKey(s)):
            raise _Blocked
        value = Sig(p, s)
        sigma[action.var] = value
        return SignAct(value, p, s)
    if isinstance(action, VerifyAct):
        sg = apply(sigma, action.sig, config)
        p = apply(sigma, action.payload, config)
        s = apply(sigma, action.signer, config)
        if sg != normalize_dh(Sig(p, s), config):
            raise _Blocked
        return VerifyAct(sg, p, s)
    raise TypeError(f"unexpected action {action!r}")


def _receive_candidates(ctx: Context, ts: ThreadState, action: Receive,
                        knowledge: Knowledge) -> List[Tuple[Dict[Var, Term], Term]]:
    role = ctx.roles[ts.info.role]
    pattern, repl = ctx.refined(role, ts.pc)
    found = knowledge.solve(pattern, ts.sigma)
    out = []
    for sigma, msg in found:
        if repl:
            sigma = dict(sigma)
            for v, template in repl:
                sigma[v] = apply(sigma, template, ctx.config)
                for w in variables(template):
                    if w.name.startswith("_"):
                        sigma.pop(w, None)
        out.append((sigma, msg))
    out.sort(key=lambda st: st[1].order_key())
    return out


def thread_steps(ctx: Context, ts: ThreadState, knowledge: Knowledge,
                 stop: Optional[int] = None) -> List[Tuple[tuple, List[Tuple[int, Action]], ThreadState]]:
    """All ways thread `ts` can advance from its pc up to `stop` (default: one
    action). Returns (candidate key, ground actions, new thread state)."""
    role = ctx.roles[ts.info.role]
    end = ts.pc + 1 if stop is None else stop
    if ts.pc >= len(role.actions):
        return []
    first = role.actions[ts.pc]
    if isinstance(first, Receive):
        starts = [(dict(s), msg) for s, msg in _receive_candidates(ctx, ts, first, knowledge)]
    else:
        starts = [(dict(ts.sigma), None)]
    out = []
    for sigma, msg in starts:
        terms = list(ts.terms)
        acts: List[Tuple[int, Action]] = []
        try:
            for pc in range(ts.pc, end):
                a = role.actions[pc]
                if isinstance(a, Receive):
                    if pc != ts.pc:
                        break
                    ga: Action = Receive(msg)
                else:
                    ga = _exec(ctx, ts, a, sigma, terms)
                acts.append((pc, ga))
                terms.extend(event_terms(ga))
        except _Blocked:
            continue
        new_ts = ThreadState(ts.info, ts.pc + len(acts), sigma, tuple(terms))
        out.append(((msg,), acts, new_ts))
    return out


def _block_end(ctx: Context, role_name: str, pc: int) -> int:
    j = ctx.block_of[role_name][pc]
    return ctx.blocks[role_name][j][1]


def moves(state: State) -> List[Move]:
    """Enabled block moves that fit within the length bound."""
    ctx = state.ctx
    room = ctx.bounds.max_run_length - len(state.events)
    if room <= 0:
        return []
    out: List[Move] = []
    knowledge = state.intruder

    def add(ts: ThreadState, create: bool):
        role = ctx.roles[ts.info.role]
        if ts.pc >= len(role.actions):
            return
        end = _block_end(ctx, role.name, ts.pc)
        if end - ts.pc > room:
            return
        for ckey, acts, new_ts in thread_steps(ctx, ts, knowledge, end):
            if len(acts) != end - ts.pc:
                continue
            key = (ts.info.tid, ts.pc, ckey[0], role.name if create else None)
            out.append(Move(key, ts.info.tid, acts, new_ts, create))

    for tid in sorted(state.threads):
        add(state.threads[tid], False)
    for role in ctx.protocol.roles:
        limit = ctx.bounds.threads_for(role.name)
        if state.created[role.name] >= limit:
            continue
        for combo in ctx.assignments[role.name]:
            for inst in range(limit):
                tid = ctx.slot_of[(role.name, combo, inst)]
                if tid not in state.threads:
                    add(_new_thread(ctx, tid), True)
                    break
    out.sort(key=lambda m: (m.tid, m.key[2].order_key() if m.key[2] is not None else ()))
    return out


def apply_move(state: State, move: Move) -> State:
    ctx = state.ctx
    threads = dict(state.threads)
    threads[move.tid] = move.thread
    created = state.created
    if move.create:
        created = dict(created)
        created[move.thread.info.role] += 1
    events = list(state.events)
    snaps = list(state.snapshots)
    k = snaps[-1]
    for pc, a in move.actions:
        events.append(Event(len(events), move.tid, a, pc))
        if isinstance(a, Send):
            k = k.extend([a.msg])
        snaps.append(k)
    return State(ctx, threads, tuple(events), tuple(snaps), created)


def independent(k1: tuple, k2: tuple) -> bool:
    if k1[0] == k2[0]:
        return False
    if k1[3] is not None and k1[3] == k2[3]:
        return False  # both start a thread of the same role
    return True


# ---------------------------------------------------------------------------
# runs


class Run:
    """A finished (maximal or length-capped) execution history."""

    def __init__(self, ctx: Context, events: Tuple[Event, ...], snapshots: Tuple[Knowledge, ...],
                 threads: Mapping[int, ThreadState]):
        self.ctx = ctx
        self.protocol = ctx.protocol
        self.config = ctx.config
        self.bounds = ctx.bounds
        self.events = events
        self.snapshots = snapshots
        self._states = dict(threads)
        self.threads: List[ThreadInfo] = [threads[t].info for t in sorted(threads)]
        self._tk: Dict[Tuple[int, int], Knowledge] = {}
        self._virtual: Optional[List[Event]] = None
        self._domain: Optional[List[Term]] = None

    @classmethod
    def from_state(cls, state: State) -> "Run":
        return cls(state.ctx, state.events, state.snapshots, state.threads)

    def __len__(self) -> int:
        return len(self.events)

    def thread(self, tid: int) -> ThreadInfo:
        return self._states[tid].info

    def role(self, tid: int) -> Role:
        return self.ctx.roles[self._states[tid].info.role]

    def thread_events(self, tid) -> List[Event]:
        return [e for e in self.events if e.tid == tid]

    def pc(self, tid: int) -> int:
        return sum(1 for e in self.events if e.tid == tid)

    def sigma(self, tid: int) -> Dict[Var, Term]:
        return self._states[tid].sigma

    def at_boundary(self, tid: int) -> bool:
        info = self._states[tid].info
        return self.pc(tid) in self.ctx.boundaries[info.role]

    def intruder_knowledge(self, upto: Optional[int] = None) -> Knowledge:
        """Intruder knowledge before event `upto` (default: at the end)."""
        if upto is None:
            return self.snapshots[-1]
        return self.snapshots[upto]

    def thread_knowledge(self, tid: int, upto: Optional[int] = None) -> Knowledge:
        n = len(self.events) if upto is None else upto
        key = (tid, n)
        hit = self._tk.get(key)
        if hit is None:
            ts = self._states[tid]
            info = ts.info
            terms = list(self.ctx.thread_initial(self.ctx.roles[info.role], info.agent, info.params))
            for e in self.events[:n]:
                if e.tid == tid:
                    terms.extend(event_terms(e.action))
            hit = Knowledge(terms, self.config, self.bounds.max_intruder_depth)
            self._tk[key] = hit
        return hit

    def prefix(self, n: int) -> "Run":
        if n >= len(self.events):
            return self
        events = self.events[:n]
        states = {}
        for tid, ts in self._states.items():
            k = sum(1 for e in events if e.tid == tid)
            if k or tid in {e.tid for e in events}:
                states[tid] = ThreadState(ts.info, k, ts.sigma, ts.terms)
        return Run(self.ctx, events, self.snapshots[:n + 1], states)

    def sent_messages(self, upto: Optional[int] = None) -> List[Term]:
        events = self.events if upto is None else self.events[:upto]
        return [e.action.msg for e in events if isinstance(e.action, Send)]

    def virtual_sends(self) -> List[Event]:
        """Intruder sends synthesized for receives whose message no honest
        thread sent earlier verbatim."""
        if self._virtual is None:
            out = []
            for e in self.events:
                if isinstance(e.action, Receive):
                    earlier = self.sent_messages(e.index)
                    if e.action.msg not in earlier:
                        out.append(Event(e.index, INTRUDER, Send(e.action.msg), -1, True))
            self._virtual = out
        return self._virtual

    def domain(self) -> List[Term]:
        """Finite term domain for quantifiers: every subterm of the run."""
        if self._domain is None:
            seen: Set[Term] = set()
            for e in self.events:
                for f in e.action.fields():
                    seen.update(subterms(f))
            for t in self.ctx.intruder_initial:
                seen.update(subterms(t))
            for ts in self._states.values():
                for _, v in ts.info.params:
                    seen.update(subterms(v))
            self._domain = sorted(seen, key=Term.order_key)
        return self._domain

    def agents(self) -> List[Agent]:
        return list(self.ctx.pool)

    # -- freshness --------------------------------------------------------
    def generated(self, tid: int) -> Set[Term]:
        return {e.action.var for e in self.events if e.tid == tid and isinstance(e.action, New)}

    def fresh(self, tid: int, x: Term) -> bool:
        while isinstance(x, DhG):
            x = x.exp
        if x not in self.generated(tid):
            return False
        for e in self.events:
            if e.tid == tid and isinstance(e.action, Send) and _exposes(e.action.msg, x):
                return False
        return True

    # -- serialization ----------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for e in self.events:
            info = self._states[e.tid].info
            lines.append(f"#{e.index}  {info.label()}  {format_action(e.action)}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol.name,
            "config": self.config.as_dict(),
            "bounds": self.bounds.as_dict(),
            "threads": [
                {
                    "id": t.tid,
                    "role": t.role,
                    "agent": t.agent.name,
                    "honest": t.honest,
                    "params": {v.name: show(x) for v, x in t.params},
                }
                for t in self.threads
            ],
            "events": [
                {
                    "index": e.index,
                    "thread": e.tid,
                    "action": e.kind,
                    "terms": [show(f) for f in e.action.fields()],
                }
                for e in self.events
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    def __repr__(self) -> str:
        return f"Run({self.protocol.name}, {len(self.events)} events)"


def _exposes(msg: Term, x: Term) -> bool:
    """Does `x` occur in `msg` other than under g(.)?"""
    stack = [msg]
    while stack:
        s = stack.pop()
        if s == x:
            return True
        if isinstance(s, DhG):
            continue
        stack.extend(s.children())
    return False


# ---------------------------------------------------------------------------
# enumeration


def _check_bounds(bounds: Bounds) -> None:
    for name in ("max_threads_per_role", "max_run_length", "max_intruder_depth"):
        if getattr(bounds, name) < 1:
            raise ValueError(f"{name} must be >= 1")


def _dfs(state: State, sleep: FrozenSet[tuple], reduction: bool) -> Iterator[State]:
    mv = moves(state)
    if not mv:
        yield state
        return
    done: List[tuple] = []
    for m in mv:
        if reduction and m.key in sleep:
            continue
        child_sleep: FrozenSet[tuple] = frozenset()
        if reduction:
            child_sleep = frozenset(k for k in itertools.chain(sleep, done) if independent(k, m.key))
        yield from _dfs(apply_move(state, m), child_sleep, reduction)
        done.append(m.key)


def enumerate_runs(protocol: Protocol, bounds: Bounds, config: SemanticsConfig,
                   reduction: str = "sleep") -> Iterator[Run]:
    """Depth-first, deterministic stream of maximal or length-capped runs."""
    _check_bounds(bounds)
    if reduction not in ("sleep", "none"):
        raise ValueError(f"unknown reduction {reduction!r}")
    ctx = Context(protocol, bounds, config)
    for st in _dfs(State.initial(ctx), frozenset(), reduction == "sleep"):
        yield Run.from_state(st)


def subtree_tasks(protocol: Protocol, bounds: Bounds, config: SemanticsConfig,
                  reduction: str = "sleep") -> Tuple[Context, State, List[Tuple[Move, FrozenSet[tuple]]]]:
    """Top-level moves with the sleep sets their subtrees start with."""
    _check_bounds(bounds)
    ctx = Context(protocol, bounds, config)
    root = State.initial(ctx)
    tasks = []
    done: List[tuple] = []
    for m in moves(root):
        sleep = frozenset(k for k in done if independent(k, m.key)) if reduction == "sleep" else frozenset()
        tasks.append((m, sleep))
        done.append(m.key)
    return ctx, root, tasks


def _subtree_worker(args):
    protocol, bounds, config, reduction, index, fn = args
    ctx, root, tasks = subtree_tasks(protocol, bounds, config, reduction)
    move, sleep = tasks[index]
    states = _dfs(apply_move(root, move), sleep, reduction == "sleep")
    return fn(Run.from_state(s) for s in states)


def map_subtrees(protocol: Protocol, bounds: Bounds, config: SemanticsConfig,
                 fn: Callable[[Iterator[Run]], object], workers: int = 1,
                 reduction: str = "sleep") -> List[object]:
    """Apply `fn` to the run stream of each top-level subtree, in order.

    With workers > 1 subtrees run in a process pool; results come back in
    subtree order, so callers can merge deterministically. `fn` must be
    picklable for the parallel path.
    """
    ctx, root, tasks = subtree_tasks(protocol, bounds, config, reduction)
    if not tasks:
        return [fn(iter([Run.from_state(root)]))]
    if workers <= 1 or len(tasks) == 1:
        out = []
        for move, sleep in tasks:
            states = _dfs(apply_move(root, move), sleep, reduction == "sleep")
            out.append(fn(Run.from_state(s) for s in states))
        return out
    jobs = [(protocol, bounds, config, reduction, i, fn) for i in range(len(tasks))]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_subtree_worker, jobs))


def enabled_events(state: State) -> List[Event]:
    """Single-action view of what can happen next: for every live thread (and
    every thread that could be started) its next action, grounded once per
    admissible receive message. Guard failures yield nothing."""
    ctx = state.ctx
    out: List[Event] = []
    candidates: List[ThreadState] = [state.threads[t] for t in sorted(state.threads)]
    for role in ctx.protocol.roles:
        limit = ctx.bounds.threads_for(role.name)
        if state.created[role.name] >= limit:
            continue
        for combo in ctx.assignments[role.name]:
            for inst in range(limit):
                tid = ctx.slot_of[(role.name, combo, inst)]
                if tid not in state.threads:
                    candidates.append(_new_thread(ctx, tid))
                    break
    for ts in candidates:
        for _, acts, _ in thread_steps(ctx, ts, state.intruder):
            pc, a = acts[0]
            out.append(Event(len(state.events), ts.info.tid, a, pc))
    return out


def executable(protocol: Protocol, pattern: Sequence[Tuple[str, str, Term]], bounds: Bounds,
               config: SemanticsConfig) -> Optional[Run]:
    """Find a run containing events matching `pattern` in order.

    `pattern` is a list of (action kind, thread label, term); equal labels
    denote the same thread and term variables are shared across entries.
    Interleavings are explored without reduction so orderings between
    unrelated threads are all visible.
    """
    if not pattern:
        ctx = Context(protocol, bounds, config)
        return Run.from_state(State.initial(ctx))
    for run in enumerate_runs(protocol, bounds, config, reduction="none"):
        if match_sequence(run, pattern) is not None:
            return run
    return None


def event_term(action: Action) -> Term:
    """The term an action predicate talks about."""
    if isinstance(action, (Send, Receive)):
        return action.msg
    if isinstance(action, New):
        return action.var
    if isinstance(action, (EncAct, SignAct)):
        return action.var
    if isinstance(action, DecAct):
        return action.cipher
    if isinstance(action, VerifyAct):
        return action.sig
    raise TypeError(action)


def match_sequence(run: Run, pattern: Sequence[Tuple[str, str, Term]]):
    """Indices of events matching `pattern` in increasing order, or None."""
    config = run.config

    def search(i: int, start: int, sigma: Dict[Var, Term], threads: Dict[str, object]):
        if i == len(pattern):
            return []
        kind, label, term = pattern[i]
        for e in run.events[start:]:
            if e.kind != kind:
                continue
            if label in threads and threads[label] != e.tid:
                continue
            s = match_term(term, event_term(e.action), sigma, config)
            if s is None:
                continue
            t2 = dict(threads)
            t2[label] = e.tid
            rest = search(i + 1, e.index + 1, s, t2)
            if rest is not None:
                return [e.index] + rest
        return None

    return search(0, 0, {}, {})
