"""Tokenizer and recursive-descent parser for the jet-expression DSL.

Grammar (whitespace insignificant between tokens):

    expr    := ["-"] term (("+" | "-") term)*
    term    := factor ("*" factor)*
    factor  := atom ["^" INT]
    atom    := rational | call | name | "(" expr ")"
    call    := IDENT "(" name ("," name)* ")"
    rational:= NUMBER ["/" NUMBER]

NUMBER is an unsigned integer or decimal literal; decimals are read
exactly (0.5 -> 1/2).  IDENT is a base name optionally followed by a
single underscore and a derivative suffix; the suffix is a
concatenation of independent-variable names (argument names, for
calls).  A suffix that resolves to more than one distinct multi-index
is rejected as ambiguous.
"""
from __future__ import annotations

import re
from fractions import Fraction
from typing import Collection, Sequence

from .core import Expr, Indep, VarSpace, make_formal

__all__ = ["parse", "DslError"]


class DslError(ValueError):
    """Syntax or name-resolution failure, carrying the offending position."""

    def __init__(self, message: str, text: str, pos: int):
        self.pos = pos
        caret = " " * pos + "^"
        super().__init__(f"{message} (column {pos})\n  {text}\n  {caret}")


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<ident>[A-Za-z][A-Za-z0-9]*(?:_[A-Za-z0-9]+)?)"
    r"|(?P<op>[-+*^(),/]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    out = []
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m or m.end() == m.start():
            # skip pure whitespace tail
            if text[i:].strip() == "":
                break
            raise DslError(f"unexpected character {text[i:].lstrip()[0]!r}", text,
                           len(text) - len(text[i:].lstrip()))
        kind = m.lastgroup
        val = m.group(kind)
        out.append((kind, val, m.start(kind)))
        i = m.end()
    out.append(("end", "", len(text)))
    return out


def _suffix_multisets(suffix: str, names: Sequence[str]) -> set[tuple[int, ...]]:
    """All multi-indices the suffix can spell as a concatenation of names."""
    n = len(suffix)
    reach: list[set[tuple[int, ...]]] = [set() for _ in range(n + 1)]
    reach[0].add(tuple(0 for _ in names))
    for i in range(n):
        if not reach[i]:
            continue
        for k, name in enumerate(names):
            if suffix.startswith(name, i):
                j = i + len(name)
                for vec in reach[i]:
                    bumped = list(vec)
                    bumped[k] += 1
                    reach[j].add(tuple(bumped))
    return reach[n]


class _Parser:
    def __init__(self, text: str, space: VarSpace, harmonic: Collection[str]):
        self.text = text
        self.space = space
        self.harmonic = frozenset(harmonic)
        self.toks = _tokenize(text)
        self.k = 0

    def _peek(self):
        return self.toks[self.k]

    def _next(self):
        t = self.toks[self.k]
        self.k += 1
        return t

    def _expect(self, val: str):
        kind, got, pos = self._next()
        if got != val:
            raise DslError(f"expected {val!r}, got {got or 'end of input'!r}",
                           self.text, pos)

    def _err(self, msg: str, pos: int):
        raise DslError(msg, self.text, pos)

    # --- grammar ---

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self._peek()
        if kind != "end":
            self._err(f"unexpected {val!r}", pos)
        return e

    def expr(self) -> Expr:
        neg = False
        if self._peek()[1] == "-":
            self._next()
            neg = True
        e = self.term()
        if neg:
            e = -e
        while self._peek()[1] in ("+", "-"):
            op = self._next()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self._peek()[1] == "*":
            self._next()
            e = e * self.factor()
        return e

    def factor(self) -> Expr:
        e = self.atom()
        if self._peek()[1] == "^":
            self._next()
            kind, val, pos = self._next()
            if kind != "num" or "." in val:
                self._err("exponent must be a positive integer", pos)
            n = int(val)
            if n < 1:
                self._err("exponent must be >= 1", pos)
            e = e ** n
        return e

    def atom(self) -> Expr:
        kind, val, pos = self._next()
        if val == "(":
            e = self.expr()
            self._expect(")")
            return e
        if val == "-":
            return -self.atom()
        if kind == "num":
            c = Fraction(val) if "." in val else Fraction(int(val))
            if self._peek()[1] == "/":
                self._next()
                k2, v2, p2 = self._next()
                if k2 != "num":
                    self._err("expected a number after '/'", p2)
                denom = Fraction(v2) if "." in v2 else Fraction(int(v2))
                if denom == 0:
                    self._err("division by zero", p2)
                c = c / denom
            return Expr.const(self.space, c)
        if kind == "ident":
            if self._peek()[1] == "(":
                return self.call(val, pos)
            return self.name_atom(val, pos)
        self._err(f"unexpected {val or 'end of input'!r}", pos)

    def name_atom(self, ident: str, pos: int) -> Expr:
        base, _, suffix = ident.partition("_")
        sp = self.space
        if base in sp.parameters:
            if suffix:
                self._err(f"cannot differentiate parameter {base!r}", pos)
            return Expr.param(sp, base)
        if base in sp.independent:
            if suffix:
                self._err(f"cannot take a derivative of independent variable {base!r}",
                          pos)
            return Expr.indep(sp, sp.indep_index(base))
        if base in sp.dependent:
            alpha = sp.dep_index(base)
            if not suffix:
                return Expr.jet(sp, alpha, sp.zero_multi_index())
            vecs = _suffix_multisets(suffix, sp.independent)
            if not vecs:
                self._err(f"cannot resolve derivative suffix {suffix!r} "
                          f"against independents {list(sp.independent)}", pos)
            if len(vecs) > 1:
                self._err(f"ambiguous derivative suffix {suffix!r}: "
                          f"{sorted(vecs)}", pos)
            return Expr.jet(sp, alpha, next(iter(vecs)))
        self._err(f"unknown identifier {base!r}", pos)

    def call(self, ident: str, pos: int) -> Expr:
        base, _, suffix = ident.partition("_")
        self._expect("(")
        args = []
        while True:
            kind, val, apos = self._next()
            if kind != "ident" or "_" in val:
                self._err("formal-symbol arguments must be plain coordinate names",
                          apos)
            args.append(self._coord(val, apos))
            kind, val, cpos = self._next()
            if val == ")":
                break
            if val != ",":
                self._err(f"expected ',' or ')', got {val!r}", cpos)
        arg_names = []
        for a in args:
            if isinstance(a, Indep):
                arg_names.append(self.space.independent[a.index])
            else:
                arg_names.append(self.space.dependent[a.alpha])
        if suffix:
            vecs = _suffix_multisets(suffix, arg_names)
            if not vecs:
                self._err(f"cannot resolve derivative suffix {suffix!r} "
                          f"against arguments {arg_names}", pos)
            if len(vecs) > 1:
                self._err(f"ambiguous derivative suffix {suffix!r}: {sorted(vecs)}",
                          pos)
            deriv = next(iter(vecs))
        else:
            deriv = tuple(0 for _ in args)
        try:
            atom, sign = make_formal(base, tuple(args), deriv,
                                     harmonic=base in self.harmonic)
        except ValueError as exc:
            self._err(str(exc), pos)
        e = Expr.from_atom(self.space, atom)
        return e if sign == 1 else -e

    def _coord(self, name: str, pos: int):
        sp = self.space
        if name in sp.independent:
            return Indep(sp.indep_index(name))
        if name in sp.dependent:
            from .core import Deriv
            return Deriv(sp.dep_index(name), sp.zero_multi_index())
        self._err(f"unknown coordinate {name!r} in formal-symbol arguments", pos)


def parse(text: str, space: VarSpace, harmonic: Collection[str] = ()) -> Expr:
    """Parse DSL text into a canonical expression over the given space."""
    return _Parser(text, space, harmonic).parse()
