"""Bounded checking of axioms and invariants, in two modes.

`check` evaluates a formula on every enumerated run of the protocol.
`check_honesty_mode` mimics reasoning by basic sequences: every basic
sequence becomes a role of its own, with the variables it does not bind
turned into fixed symbolic parameters known to the intruder, so sequences
can execute in any order and from any starting knowledge. With the
precedence rule on, each sequence keeps the actions that precede it in its
original role.
"""
from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple, Union

from .axioms import AxiomEntry, custom
from .config import Bounds, SemanticsConfig
from .engine import Run, map_subtrees
from .logic import Evaluator, Formula, Instance, replay, violation
from .protocol import (
    BasicSequence, Protocol, Role, action_binds, action_uses, basic_sequences,
    role_basic_sequences,
)
from .terms import Nonce, Var, show

HOLDS = "holds-within-bounds"
COUNTEREXAMPLE = "counterexample"


@dataclass
class Witness:
    run: Run
    instance: Instance
    events: List[int]

    def replays_false(self) -> bool:
        return not replay(self.run, self.instance)

    def to_dict(self) -> dict:
        return {
            "instance": self.instance.show(),
            "bindings": {**{k: ("I" if v == "I" else f"T{v}") for k, v in sorted(self.instance.threads.items())},
                         **{v.name: show(t) for v, t in sorted(self.instance.sigma.items(),
                                                              key=lambda kv: kv[0].name)
                            if not v.name.startswith("^")}},
            "events": list(self.events),
            "trace": self.run.to_text().splitlines(),
        }


@dataclass
class Verdict:
    name: str
    protocol: str
    outcome: str
    bounds: Bounds
    config: SemanticsConfig
    runs: int
    seconds: float
    witness: Optional[Witness] = None
    scope: str = ""  # basic-sequence label in honesty mode

    @property
    def holds(self) -> bool:
        return self.outcome == HOLDS

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "check": self.name,
            "protocol": self.protocol,
            "scope": self.scope or "runs",
            "outcome": self.outcome,
            "bounds": {
                "threads": self.bounds.max_threads_per_role,
                "length": self.bounds.max_run_length,
                "depth": self.bounds.max_intruder_depth,
            },
            "config": self.config.as_dict(),
            "statistics": {"runs": self.runs},
            "witness": self.witness.to_dict() if self.witness else None,
        }
        if timing:
            d["statistics"]["seconds"] = round(self.seconds, 3)
        return d

    def to_text(self) -> str:
        b = self.bounds
        head = f"{self.name} on {self.protocol}"
        if self.scope:
            head += f" [{self.scope}]"
        lines = [f"{head}: {self.outcome}",
                 f"  bounds: threads={b.max_threads_per_role} length={b.max_run_length} "
                 f"depth={b.max_intruder_depth}",
                 "  config: " + " ".join(f"{k}={v}" for k, v in self.config.as_dict().items()),
                 f"  runs explored: {self.runs} in {self.seconds:.2f}s"]
        if self.witness:
            w = self.witness
            lines.append(f"  failing instance: {w.instance.show()}")
            lines.append(f"  witness run (relevant events {w.events}):")
            lines.extend("    " + l for l in w.run.to_text().splitlines())
        return "\n".join(lines)


def _entry(axiom: Union[AxiomEntry, Formula, str]) -> Tuple[str, Formula]:
    if isinstance(axiom, AxiomEntry):
        return axiom.name, axiom.formula
    if isinstance(axiom, str):
        e = custom("formula", axiom)
        return e.name, e.formula
    return "formula", axiom


@dataclass(frozen=True)
class _Scan:
    """Per-subtree worker: counts runs and finds the first violation."""
    formula: Formula
    role: Optional[str] = None
    min_pc: int = 0

    def restrict(self, run: Run):
        if self.role is None:
            return None
        return lambda tid: tid != "I" and run.thread(tid).role == self.role and run.pc(tid) > self.min_pc

    def __call__(self, runs: Iterator[Run]):
        n = 0
        for run in runs:
            inst = violation(run, self.formula, self.restrict(run))
            if inst is not None:
                return n + 1, n
            n += 1
        return n, None


def _scan_subtrees(protocol: Protocol, bounds: Bounds, config: SemanticsConfig, scan: _Scan,
                   workers: int) -> Tuple[int, Optional[Tuple[Run, Instance]]]:
    """Runs explored and the first violation in deterministic run order."""
    if workers <= 1:
        found: List[Tuple[Run, Instance]] = []
        counted = [0]

        def fn(runs):
            for run in runs:
                counted[0] += 1
                inst = violation(run, scan.formula, scan.restrict(run))
                if inst is not None:
                    found.append((run, inst))
                    return True
            return False

        # stop at the first subtree that yields a counterexample
        for hit in _lazy_subtrees(protocol, bounds, config, fn):
            if hit:
                break
        return counted[0], (found[0] if found else None)

    results = map_subtrees(protocol, bounds, config, scan, workers=workers)
    total = 0
    for i, (n, pos) in enumerate(results):
        total += n
        if pos is not None:
            run = _nth_run_of_subtree(protocol, bounds, config, i, pos)
            inst = violation(run, scan.formula, scan.restrict(run))
            return total, (run, inst)
    return total, None


def _lazy_subtrees(protocol, bounds, config, fn):
    from .engine import _dfs, apply_move, subtree_tasks, Run as _Run
    ctx, root, tasks = subtree_tasks(protocol, bounds, config)
    if not tasks:
        yield fn(iter([_Run.from_state(root)]))
        return
    for move, sleep in tasks:
        yield fn(_Run.from_state(s) for s in _dfs(apply_move(root, move), sleep, True))


def _nth_run_of_subtree(protocol, bounds, config, index: int, pos: int) -> Run:
    from .engine import _dfs, apply_move, subtree_tasks
    ctx, root, tasks = subtree_tasks(protocol, bounds, config)
    if not tasks:
        return Run.from_state(root)
    move, sleep = tasks[index]
    for i, s in enumerate(_dfs(apply_move(root, move), sleep, True)):
        if i == pos:
            return Run.from_state(s)
    raise RuntimeError("subtree changed between passes")


def _witness(run: Run, inst: Instance) -> Witness:
    tids = set(inst.threads.values())
    events = [e.index for e in run.events if e.tid in tids]
    return Witness(run, inst, events)


def check(protocol: Protocol, axiom: Union[AxiomEntry, Formula, str], bounds: Bounds,
          config: SemanticsConfig, workers: int = 1) -> Verdict:
    """Evaluate the formula on every bounded run; report the first failure."""
    if isinstance(axiom, AxiomEntry):
        axiom.check_config(config)
    name, formula = _entry(axiom)
    t0 = time.perf_counter()
    n, hit = _scan_subtrees(protocol, bounds, config, _Scan(formula), workers)
    dt = time.perf_counter() - t0
    if hit is None:
        return Verdict(name, protocol.name, HOLDS, bounds, config, n, dt)
    return Verdict(name, protocol.name, COUNTEREXAMPLE, bounds, config, n, dt, _witness(*hit))


# ---------------------------------------------------------------------------
# honesty mode


@dataclass(frozen=True)
class BlockRole:
    """A synthetic role standing for one basic sequence."""
    seq: BasicSequence
    role: Role
    prefix_len: int  # actions inherited from the original role (precedence rule)


def _free_vars(role: Role, actions) -> List[Var]:
    bound: Set[Var] = set(role.params)
    free: List[Var] = []
    for a in actions:
        for v in action_uses(a):
            if v not in bound and v not in free:
                free.append(v)
        bound.update(action_binds(a, bound))
    return free


def block_roles(protocol: Protocol, precedence: bool) -> List[BlockRole]:
    out = []
    for role in protocol.roles:
        for bs in role_basic_sequences(role, len(out) + 1):
            prefix = role.actions[:bs.start] if precedence else ()
            actions = tuple(prefix) + bs.actions
            fixed = tuple((v, Nonce(v.name, "param", v.var_sort)) for v in _free_vars(role, actions))
            name = f"{role.name}_{bs.label}"
            out.append(BlockRole(bs, Role(name, role.params, role.self_param, actions, fixed),
                                 len(prefix)))
    return out


def block_protocol(protocol: Protocol, precedence: bool) -> Tuple[Protocol, List[BlockRole]]:
    blocks = block_roles(protocol, precedence)
    return Protocol(f"{protocol.name}/blocks", protocol.setup, tuple(b.role for b in blocks)), blocks


def check_honesty_mode(protocol: Protocol, axiom: Union[AxiomEntry, Formula, str], bounds: Bounds,
                       config: SemanticsConfig, workers: int = 1) -> Dict[str, Verdict]:
    """One verdict per basic sequence (keyed by its label, e.g. BS2).

    The invariant's leading thread binder is restricted to threads of the
    sequence's synthetic role that executed at least one of its actions."""
    if isinstance(axiom, AxiomEntry):
        axiom.check_config(config)
    name, formula = _entry(axiom)
    synth, blocks = block_protocol(protocol, config.precedence_rule)
    out: Dict[str, Verdict] = {}
    for b in blocks:
        t0 = time.perf_counter()
        scan = _Scan(formula, b.role.name, b.prefix_len)
        n, hit = _scan_subtrees(synth, bounds, config, scan, workers)
        dt = time.perf_counter() - t0
        label = b.seq.label
        if hit is None:
            out[label] = Verdict(name, protocol.name, HOLDS, bounds, config, n, dt, scope=label)
        else:
            out[label] = Verdict(name, protocol.name, COUNTEREXAMPLE, bounds, config, n, dt,
                                 _witness(*hit), scope=label)
    return out


def sequence_outcomes(protocol: Protocol, verdicts: Dict[str, Verdict]) -> Counter:
    """Multiset of (basic sequence text, outcome) pairs, independent of order."""
    from .protocol import format_action
    text = {bs.label: "; ".join(format_action(a) for a in bs.actions) for bs in basic_sequences(protocol)}
    return Counter((text[k], v.outcome) for k, v in verdicts.items())


# ---------------------------------------------------------------------------
# statistics used by the hash collapse study


def hash_collapse_stats(protocol: Protocol, bounds: Bounds, config: SemanticsConfig) -> Tuple[int, int]:
    """(instances, satisfied) over all runs: pairs of an honest thread X and a
    keyed hash t from the run's term domain with Has(X, t); satisfied when
    Computes(X, t) holds as well."""
    from .engine import enumerate_runs
    from .terms import Hash
    total = good = 0
    for run in enumerate_runs(protocol, bounds, config):
        ev = Evaluator(run, config)
        hashes = [t for t in run.domain() if isinstance(t, Hash)]
        for th in run.threads:
            if not th.honest:
                continue
            for t in hashes:
                if ev.has(run, th.tid, t):
                    total += 1
                    if ev.computes(run, th.tid, t, "hash"):
                        good += 1
    return total, good
