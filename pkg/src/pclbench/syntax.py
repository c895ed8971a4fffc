"""Tokenizer and term grammar shared by the protocol and formula languages."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

from .terms import DhG, DhH, Enc, Hash, PrivKey, PubKey, Sig, SymKey, Term, tup


class DSLError(Exception):
    """Parse or validation failure with a source position."""

    kind = "error"

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line else ""
        super().__init__(f"{where}{self.kind}: {message}")


class DSLSyntaxError(DSLError):
    kind = "syntax error"


class DSLSemanticError(DSLError):
    kind = "semantic error"


@dataclass(frozen=True)
class Token:
    kind: str  # ident, num, op, eof
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[^\W\d]\w*'*)
  | (?P<op>:=|=>|!=|<=|[{}()\[\],;:~&|<=^.!*+\-/@])
""", re.VERBOSE | re.UNICODE)


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("ident", "num", "op"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class TokenStream:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("op", "ident") and t.text in texts

    def next(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def accept(self, text: str) -> Optional[Token]:
        if self.at(text):
            return self.next()
        return None

    def expect(self, *texts: str) -> Token:
        if self.at(*texts):
            return self.next()
        self.fail(" or ".join(repr(t) for t in texts))

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind == "ident":
            return self.next()
        self.fail(what)

    def fail(self, expected: str):
        t = self.tok
        got = "end of input" if t.kind == "eof" else repr(t.text)
        raise DSLSyntaxError(f"expected {expected}, got {got}", t.line, t.col)


# Identifiers with a fixed meaning in term position.
TERM_KEYWORDS = {"enc", "sig", "hash", "g", "h", "pk", "sk", "k"}


class TermParser:
    """Recursive-descent parser for message terms.

    Identifier resolution is delegated to `resolve(token, sort_or_None)` so
    each language can decide between variables, constants and binders.
    `hat(token)` handles `^Y` in formulas; protocols leave it unset.
    """

    def __init__(self, ts: TokenStream, resolve: Callable[[Token, Optional[str]], Term],
                 hat: Optional[Callable[[Token], Term]] = None):
        self.ts = ts
        self.resolve = resolve
        self.hat = hat

    def tuple_(self) -> Term:
        items = [self.term()]
        while self.ts.accept(","):
            items.append(self.term())
        return tup(*items)

    def term(self) -> Term:
        ts = self.ts
        t = ts.tok
        if ts.accept("("):
            inner = self.tuple_()
            ts.expect(")")
            return inner
        if ts.at("^"):
            if self.hat is None:
                ts.fail("term")
            ts.next()
            return self.hat(ts.ident("thread variable"))
        if t.kind != "ident":
            ts.fail("term")
        name = t.text
        nxt = ts.peek()
        if name in ("enc", "sig", "hash") and nxt.text == "{":
            ts.next()
            ts.next()
            payload = self.tuple_()
            ts.expect("}")
            key = self.key_term()
            return {"enc": Enc, "sig": Sig, "hash": Hash}[name](payload, key)
        if nxt.text == "(" and (name in ("g", "h", "pk", "sk", "k") or name.startswith("k_")):
            ts.next()
            ts.next()
            args = [self.term()]
            while ts.accept(","):
                args.append(self.term())
            ts.expect(")")
            return self._apply(t, name, args)
        ts.next()
        sort = None
        if ts.at(":") and ts.peek().kind == "ident":
            ts.next()
            sort = ts.next().text
        return self.resolve(t, sort)

    def key_term(self) -> Term:
        """Key position after enc{..}/sig{..}/hash{..}: a single primary term."""
        return self.term()

    def _apply(self, tok: Token, name: str, args: Sequence[Term]) -> Term:
        def arity(n):
            if len(args) != n:
                raise DSLSyntaxError(f"{name} takes {n} argument(s)", tok.line, tok.col)
        if name == "g":
            arity(1)
            return DhG(args[0])
        if name == "h":
            arity(2)
            return DhH(args[0], args[1])
        if name == "pk":
            arity(1)
            return PubKey(args[0])
        if name == "sk":
            arity(1)
            return PrivKey(args[0])
        label = "k" if name == "k" else name
        return SymKey(label, tuple(args))
