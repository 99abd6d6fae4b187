"""Render expressions back into the textual DSL accepted by the parser."""
from __future__ import annotations

from fractions import Fraction

from .core import Deriv, Expr, Formal, Indep, Param

__all__ = ["to_dsl", "coord_name", "atom_name"]


def _suffix(space, orders) -> str:
    return "".join(name * n for name, n in zip(space.independent, orders))


def coord_name(space, coord) -> str:
    """DSL spelling of a jet coordinate."""
    if isinstance(coord, Indep):
        return space.independent[coord.index]
    base = space.dependent[coord.alpha]
    suf = _suffix(space, coord.orders)
    return f"{base}_{suf}" if suf else base


def atom_name(space, atom) -> str:
    if isinstance(atom, (Indep, Deriv)):
        return coord_name(space, atom)
    if isinstance(atom, Param):
        return atom.name
    if isinstance(atom, Formal):
        arg_names = [coord_name(space, a) for a in atom.args]
        suf = "".join(name * n for name, n in zip(arg_names, atom.deriv))
        head = f"{atom.name}_{suf}" if suf else atom.name
        return f"{head}({','.join(arg_names)})"
    raise TypeError(atom)


def _frac(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def to_dsl(e: Expr) -> str:
    if not e.terms:
        return "0"
    parts: list[str] = []
    for mono, coeff in e.terms:
        factors = []
        for atom, exp in mono:
            s = atom_name(e.space, atom)
            factors.append(s if exp == 1 else f"{s}^{exp}")
        mag = abs(coeff)
        if not factors:
            body = _frac(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = "*".join([_frac(mag)] + factors)
        parts.append(("-" if coeff < 0 else "+", body))
    sign, body = parts[0]
    out = (sign if sign == "-" else "") + body
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out
