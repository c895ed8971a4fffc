"""pclbench command line.

Exit status: 0 when the outcome is the expected one (a check holds within
bounds, a reproduction agrees), 1 when it is not, 2 on usage or input errors.
Every option can also be set through PCLBENCH_<OPTION> environment
variables, e.g. PCLBENCH_THREADS=1 or PCLBENCH_TYPED=0; flags win.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

from . import axioms, bench, repro
from .axioms import FeatureMismatch
from .config import Bounds, BoundsError, SemanticsConfig, key_scheme
from .engine import enumerate_runs
from .protocol import basic_sequences, format_action, format_protocol, load_protocol
from .syntax import DSLError

ENV_PREFIX = "PCLBENCH_"


class UsageError(Exception):
    pass


def _env(name: str) -> Optional[str]:
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))


def _onoff(value: str) -> bool:
    v = value.strip().lower()
    if v in ("on", "1", "true", "yes"):
        return True
    if v in ("off", "0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {value!r}")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    sem = common.add_argument_group("semantics")
    sem.add_argument("--typed", dest="typed", action="store_true", default=None)
    sem.add_argument("--untyped", dest="typed", action="store_false")
    sem.add_argument("--dh-theory", type=_onoff, metavar="on|off")
    sem.add_argument("--keys", metavar="sym|asym|split")
    sem.add_argument("--precedence", type=_onoff, metavar="on|off")
    bnd = common.add_argument_group("bounds")
    bnd.add_argument("--threads", type=int, metavar="N")
    bnd.add_argument("--length", type=int, metavar="N")
    bnd.add_argument("--depth", type=int, metavar="N")
    out = common.add_argument_group("output")
    out.add_argument("--format", choices=("text", "json-like"))
    out.add_argument("--output", metavar="PATH")
    out.add_argument("--workers", type=int, metavar="N")

    p = argparse.ArgumentParser(prog="pclbench", description="Bounded checking of protocol logic axioms.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("parse", parents=[common], help="print a protocol and its basic sequences")
    s.add_argument("file")

    s = sub.add_parser("runs", parents=[common], help="enumerate bounded runs")
    s.add_argument("file")
    s.add_argument("--limit", type=int, default=None, metavar="N")

    s = sub.add_parser("check", parents=[common], help="check an axiom or invariant")
    s.add_argument("file")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--axiom", metavar="NAME")
    g.add_argument("--invariant", metavar="NAME")
    g.add_argument("--formula-file", metavar="PATH")
    s.add_argument("--blocks", action="store_true",
                   help="check per basic sequence instead of on whole runs")

    sub.add_parser("axioms", parents=[common], help="list the catalogue")

    s = sub.add_parser("repro", parents=[common], help="run a reproduction case")
    s.add_argument("case", help="case name or 'all'")
    return p


def _resolve(args) -> None:
    """Fill unset options from the environment, then from defaults."""
    def pick(name, conv, default):
        v = getattr(args, name)
        if v is None:
            raw = _env(name)
            if raw is not None:
                try:
                    v = conv(raw)
                except (ValueError, argparse.ArgumentTypeError) as e:
                    raise UsageError(f"{ENV_PREFIX}{name.upper()}: {e}") from None
        setattr(args, name, default if v is None else v)

    pick("typed", _onoff, True)
    pick("dh_theory", _onoff, False)
    pick("keys", str, "split")
    pick("precedence", _onoff, False)
    pick("threads", int, None)
    pick("length", int, None)
    pick("depth", int, None)
    pick("format", str, "text")
    pick("output", str, None)
    pick("workers", int, 1)
    if args.format not in ("text", "json-like"):
        raise UsageError(f"unknown format {args.format!r}")
    try:
        args.keys = key_scheme(args.keys)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")


def _config(args) -> SemanticsConfig:
    return SemanticsConfig(typed=args.typed, dh_theory=args.dh_theory, key_scheme=args.keys,
                           precedence_rule=args.precedence)


def _bounds(args, explicit_only: bool = False) -> Optional[Bounds]:
    given = (args.threads, args.length, args.depth)
    if explicit_only and all(v is None for v in given):
        return None
    d = Bounds()
    try:
        return Bounds(args.threads if args.threads is not None else d.max_threads_per_role,
                      args.length if args.length is not None else d.max_run_length,
                      args.depth if args.depth is not None else d.max_intruder_depth)
    except BoundsError as e:
        raise UsageError(str(e)) from None


def _emit(args, text: str) -> None:
    if args.output:
        with open(args.output, "w") as f:
            f.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2)


def cmd_parse(args) -> int:
    p = load_protocol(args.file)
    if args.format == "json-like":
        seqs = [{"label": bs.label, "role": bs.role, "start": bs.start,
                 "actions": [format_action(a) for a in bs.actions]} for bs in basic_sequences(p)]
        _emit(args, _dump({"protocol": p.name, "text": format_protocol(p).splitlines(),
                           "basic_sequences": seqs}))
        return 0
    lines = [format_protocol(p).rstrip(), "", "basic sequences:"]
    for bs in basic_sequences(p):
        lines.append(f"  {bs.label} ({bs.role}, from action {bs.start + 1}): "
                     + "; ".join(format_action(a) for a in bs.actions))
    _emit(args, "\n".join(lines))
    return 0


def cmd_runs(args) -> int:
    p = load_protocol(args.file)
    out = []
    for i, run in enumerate(enumerate_runs(p, _bounds(args), _config(args))):
        if args.limit is not None and i >= args.limit:
            break
        if args.format == "json-like":
            out.append(run.to_dict())
        elif args.output:
            out.append(f"run {i}\n{run.to_text()}\n")
        else:
            print(f"run {i}")
            print(run.to_text())
            print()
    if args.format == "json-like":
        _emit(args, _dump(out))
    elif args.output:
        _emit(args, "\n".join(out))
    return 0


def _load_entry(args) -> axioms.AxiomEntry:
    if args.formula_file:
        try:
            with open(args.formula_file) as f:
                text = f.read()
        except OSError as e:
            raise UsageError(f"cannot read {args.formula_file}: {e.strerror}") from None
        return axioms.custom(os.path.basename(args.formula_file), text.strip())
    name = args.axiom or args.invariant
    try:
        return axioms.get(name)
    except KeyError as e:
        raise UsageError(e.args[0]) from None


def cmd_check(args) -> int:
    p = load_protocol(args.file)
    entry = _load_entry(args)
    bounds, config = _bounds(args), _config(args)
    if args.blocks:
        verdicts = bench.check_honesty_mode(p, entry, bounds, config, args.workers)
        if args.format == "json-like":
            _emit(args, _dump([v.to_dict() for v in verdicts.values()]))
        else:
            _emit(args, "\n\n".join(v.to_text() for v in verdicts.values()))
        return 0 if all(v.holds for v in verdicts.values()) else 1
    v = bench.check(p, entry, bounds, config, args.workers)
    _emit(args, _dump(v.to_dict()) if args.format == "json-like" else v.to_text())
    return 0 if v.holds else 1


def cmd_axioms(args) -> int:
    entries = [axioms.get(n) for n in axioms.names()]
    if args.format == "json-like":
        _emit(args, _dump([{"name": e.name, "kind": e.kind, "formula": str(e.formula),
                            "about": e.citation, "requires": dict(e.requires)} for e in entries]))
        return 0
    lines = []
    for e in entries:
        req = "" if not e.requires else "  [needs " + ", ".join(f"{k}={v}" for k, v in e.requires) + "]"
        lines.append(f"{e.name} ({e.kind}): {e.citation}{req}")
        lines.append(f"    {e.formula}")
    _emit(args, "\n".join(lines))
    return 0


def cmd_repro(args) -> int:
    names = list(repro.CASES) if args.case == "all" else [args.case]
    for n in names:
        if n not in repro.CASES:
            raise UsageError(f"unknown case {n!r}; known: {', '.join(repro.CASES)}, all")
    bounds = _bounds(args, explicit_only=True)
    reports = [repro.reproduce(n, bounds, args.workers) for n in names]
    if args.format == "json-like":
        body = reports[0].to_dict() if len(reports) == 1 else [r.to_dict() for r in reports]
        _emit(args, _dump(body))
    else:
        _emit(args, "\n\n".join(r.to_text() for r in reports))
    return 0 if all(r.ok for r in reports) else 1


COMMANDS = {"parse": cmd_parse, "runs": cmd_runs, "check": cmd_check,
            "axioms": cmd_axioms, "repro": cmd_repro}


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        _resolve(args)
        return COMMANDS[args.command](args)
    except (UsageError, FeatureMismatch) as e:
        print(f"pclbench: error: {e}", file=sys.stderr)
        return 2
    except DSLError as e:
        print(f"pclbench: {getattr(args, 'file', '')}:{e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"pclbench: error: {e.filename}: {e.strerror}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
