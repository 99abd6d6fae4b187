"""Exact symbolic expressions over jet-space coordinates.

Expressions are stored in an eagerly normalized form: an expanded sum of
monomials with rational coefficients, each monomial a sorted tuple of
(atom, power) pairs.  Construction via the arithmetic operators keeps every
value canonical, so structural equality is semantic equality for the
polynomial fragment.  Coefficients are `fractions.Fraction`, never floats.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Union

__all__ = [
    "VarSpace",
    "JetCoord",
    "Indep",
    "Deriv",
    "Param",
    "Formal",
    "make_formal",
    "Expr",
    "total_derivative",
    "total_derivative_multi",
    "partial_wrt",
    "substitute",
    "free_coords",
    "free_formals",
    "max_order",
    "normalize",
    "NonHarmonicBindingError",
]

_NAME_OK = lambda s: s.isidentifier() and "_" not in s


@dataclass(frozen=True)
class VarSpace:
    """Named independent/dependent variables and symbolic parameters."""

    independent: tuple[str, ...]
    dependent: tuple[str, ...]
    parameters: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "independent", tuple(self.independent))
        object.__setattr__(self, "dependent", tuple(self.dependent))
        object.__setattr__(self, "parameters", tuple(self.parameters))
        if not self.independent:
            raise ValueError("need at least one independent variable")
        if not self.dependent:
            raise ValueError("need at least one dependent variable")
        names = self.independent + self.dependent + self.parameters
        for n in names:
            if not _NAME_OK(n):
                raise ValueError(f"bad variable name {n!r} (alphanumeric, no underscores)")
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique across all three lists")

    @property
    def p(self) -> int:
        return len(self.independent)

    @property
    def q(self) -> int:
        return len(self.dependent)

    def indep_index(self, name: str) -> int:
        return self.independent.index(name)

    def dep_index(self, name: str) -> int:
        return self.dependent.index(name)

    def zero_multi_index(self) -> tuple[int, ...]:
        return (0,) * self.p


# ---------------------------------------------------------------------------
# Atoms.  Every monomial factor is one of these; each provides a sort key so
# monomials and term lists have a single canonical ordering.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Indep:
    """An independent variable x^i, by index into VarSpace.independent."""

    index: int

    def key(self):
        return (0, self.index)


@dataclass(frozen=True)
class Deriv:
    """Jet coordinate u^alpha_J; empty J is the dependent variable itself."""

    alpha: int
    orders: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "orders", tuple(self.orders))
        if any(o < 0 for o in self.orders):
            raise ValueError("derivative orders must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.orders)

    def bump(self, i: int) -> "Deriv":
        o = list(self.orders)
        o[i] += 1
        return Deriv(self.alpha, tuple(o))

    def key(self):
        return (1, self.alpha, self.total, self.orders)


@dataclass(frozen=True)
class Param:
    """Symbolic scalar parameter (e.g. a viscosity left unevaluated)."""

    name: str

    def key(self):
        return (2, self.name)


@dataclass(frozen=True)
class Formal:
    """Opaque function symbol applied to jet coordinates, e.g. h(u) or h(x, y).

    `deriv` counts formal differentiations with respect to each argument
    position.  A symbol flagged `harmonic` (two arguments) is canonicalized
    with the rewrite d2/darg0^2 -> -d2/darg1^2, so its first-argument order
    is always 0 or 1; `make_formal` returns the compensating sign.
    """

    name: str
    args: tuple["JetCoord", ...]
    deriv: tuple[int, ...]
    harmonic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        object.__setattr__(self, "deriv", tuple(self.deriv))
        if len(self.args) != len(self.deriv):
            raise ValueError("derivative multi-index must match argument count")
        if len(set(self.args)) != len(self.args):
            raise ValueError("formal function arguments must be distinct coordinates")
        if self.harmonic and len(self.args) != 2:
            raise ValueError("harmonic flag requires exactly two arguments")

    def key(self):
        return (3, self.name, tuple(a.key() for a in self.args), self.deriv, self.harmonic)


JetCoord = Union[Indep, Deriv]
Atom = Union[Indep, Deriv, Param, Formal]


def make_formal(name: str, args, deriv, harmonic: bool = False) -> tuple[Formal, int]:
    """Build a Formal atom in canonical form; returns (atom, sign)."""
    deriv = tuple(deriv)
    sign = 1
    if harmonic and deriv[0] >= 2:
        steps = deriv[0] // 2
        sign = -1 if steps % 2 else 1
        deriv = (deriv[0] % 2, deriv[1] + 2 * steps)
    return Formal(name, tuple(args), deriv, harmonic), sign


# Monomial: sorted tuple of (atom, positive int power).
Monomial = tuple[tuple[Atom, int], ...]

_RatLike = Union[int, Fraction]


def _as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v)
    raise TypeError(f"expected exact rational, got {type(v).__name__}")


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    d: dict[Atom, int] = {}
    for atom, e in a:
        d[atom] = d.get(atom, 0) + e
    for atom, e in b:
        d[atom] = d.get(atom, 0) + e
    return tuple(sorted(d.items(), key=lambda kv: kv[0].key()))


def _mono_key(m: Monomial):
    return tuple((atom.key(), e) for atom, e in m)


class Expr:
    """Canonical polynomial over jet coordinates, parameters, formal symbols."""

    __slots__ = ("space", "terms", "_hash")

    def __init__(self, space: VarSpace, terms: Mapping[Monomial, Fraction] | None = None):
        self.space = space
        items = []
        if terms:
            for m, c in terms.items():
                if c != 0:
                    items.append((m, c))
        items.sort(key=lambda mc: _mono_key(mc[0]))
        self.terms: tuple[tuple[Monomial, Fraction], ...] = tuple(items)
        self._hash = hash((space, self.terms))

    # -- constructors -------------------------------------------------------

    @staticmethod
    def const(space: VarSpace, value) -> "Expr":
        v = _as_fraction(value)
        return Expr(space, {(): v} if v else {})

    @staticmethod
    def from_atom(space: VarSpace, atom: Atom, sign: int = 1) -> "Expr":
        return Expr(space, {((atom, 1),): Fraction(sign)})

    @staticmethod
    def zero(space: VarSpace) -> "Expr":
        return Expr(space, {})

    @staticmethod
    def indep(space: VarSpace, index: int) -> "Expr":
        if not 0 <= index < space.p:
            raise IndexError(f"independent index {index} out of range")
        return Expr.from_atom(space, Indep(index))

    @staticmethod
    def jet(space: VarSpace, alpha: int, orders: Iterable[int]) -> "Expr":
        orders = tuple(orders)
        if not 0 <= alpha < space.q:
            raise IndexError(f"dependent index {alpha} out of range")
        if len(orders) != space.p:
            raise ValueError("multi-index length must match independent count")
        return Expr.from_atom(space, Deriv(alpha, orders))

    @staticmethod
    def param(space: VarSpace, name: str) -> "Expr":
        if name not in space.parameters:
            raise KeyError(f"unknown parameter {name!r}")
        return Expr.from_atom(space, Param(name))

    # -- predicates ---------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(m == () for m, _ in self.terms)

    def constant_value(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        if self.is_constant():
            return self.terms[0][1]
        raise ValueError("expression is not constant")

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: "Expr"):
        if self.space != other.space:
            raise ValueError("expressions live in different variable spaces")

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Expr.const(self.space, other)
        if not isinstance(other, Expr):
            return NotImplemented
        self._check(other)
        d = dict(self.terms)
        for m, c in other.terms:
            d[m] = d.get(m, Fraction(0)) + c
        return Expr(self.space, d)

    __radd__ = __add__

    def __neg__(self):
        return Expr(self.space, {m: -c for m, c in self.terms})

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Expr.const(self.space, other)
        if not isinstance(other, Expr):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            c = _as_fraction(other)
            return Expr(self.space, {m: v * c for m, v in self.terms})
        if not isinstance(other, Expr):
            return NotImplemented
        self._check(other)
        d: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = _mono_mul(m1, m2)
                d[m] = d.get(m, Fraction(0)) + c1 * c2
        return Expr(self.space, d)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 1:
            raise ValueError("integer exponent >= 1 required")
        out = self
        for _ in range(n - 1):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Expr.const(self.space, other)
        if not isinstance(other, Expr):
            return NotImplemented
        return self.space == other.space and self.terms == other.terms

    def __hash__(self):
        return self._hash

    def __repr__(self):
        from .printer import to_dsl

        return f"Expr({to_dsl(self)!r})"

    def __str__(self):
        from .printer import to_dsl

        return to_dsl(self)


def normalize(e: Expr) -> Expr:
    """Expressions are canonical by construction; provided for symmetry."""
    return e


# ---------------------------------------------------------------------------
# Calculus
# ---------------------------------------------------------------------------


def _atom_total_derivative(space: VarSpace, atom: Atom, i: int) -> Expr:
    if isinstance(atom, Indep):
        return Expr.const(space, 1 if atom.index == i else 0)
    if isinstance(atom, Deriv):
        return Expr.from_atom(space, atom.bump(i))
    if isinstance(atom, Param):
        return Expr.zero(space)
    if isinstance(atom, Formal):
        # chain rule over the (jet-coordinate) arguments
        out = Expr.zero(space)
        for pos, arg in enumerate(atom.args):
            d_arg = _atom_total_derivative(space, arg, i)
            if d_arg.is_zero():
                continue
            bumped = list(atom.deriv)
            bumped[pos] += 1
            fa, sign = make_formal(atom.name, atom.args, bumped, atom.harmonic)
            out = out + Expr.from_atom(space, fa, sign) * d_arg
        return out
    raise TypeError(atom)


def total_derivative(e: Expr, i: Union[int, str]) -> Expr:
    """Total derivative D_i: bumps jet coordinates, chain rule on formal symbols."""
    if isinstance(i, str):
        i = e.space.indep_index(i)
    if not 0 <= i < e.space.p:
        raise IndexError(f"independent index {i} out of range")
    space = e.space
    out: dict[Monomial, Fraction] = {}
    for mono, coeff in e.terms:
        for j, (atom, exp) in enumerate(mono):
            d_atom = _atom_total_derivative(space, atom, i)
            if d_atom.is_zero():
                continue
            rest: dict[Atom, int] = {a: p for a, p in mono}
            if exp == 1:
                del rest[atom]
            else:
                rest[atom] = exp - 1
            rest_mono = tuple(sorted(rest.items(), key=lambda kv: kv[0].key()))
            piece = Expr(space, {rest_mono: coeff * exp}) * d_atom
            for m, c in piece.terms:
                out[m] = out.get(m, Fraction(0)) + c
    return Expr(space, out)


def total_derivative_multi(e: Expr, orders: Iterable[int]) -> Expr:
    """Apply D_J for a multi-index over the independent variables (axis order)."""
    out = e
    for i, n in enumerate(orders):
        for _ in range(n):
            out = total_derivative(out, i)
    return out


def partial_wrt(e: Expr, coord: JetCoord) -> Expr:
    """Partial derivative treating every jet coordinate as an independent symbol.

    Formal symbols follow the chain rule through their arguments: the partial
    of h(u) with respect to u is h_u(u).
    """
    space = e.space
    out: dict[Monomial, Fraction] = {}
    for mono, coeff in e.terms:
        for atom, exp in mono:
            piece = None
            if atom == coord:
                piece = Expr.const(space, 1)
            elif isinstance(atom, Formal) and coord in atom.args:
                pos = atom.args.index(coord)
                bumped = list(atom.deriv)
                bumped[pos] += 1
                fa, sign = make_formal(atom.name, atom.args, bumped, atom.harmonic)
                piece = Expr.from_atom(space, fa, sign)
            if piece is None:
                continue
            rest: dict[Atom, int] = {a: p for a, p in mono}
            if exp == 1:
                del rest[atom]
            else:
                rest[atom] = exp - 1
            rest_mono = tuple(sorted(rest.items(), key=lambda kv: kv[0].key()))
            term = Expr(space, {rest_mono: coeff * exp}) * piece
            for m, c in term.terms:
                out[m] = out.get(m, Fraction(0)) + c
    return Expr(space, out)


def free_coords(e: Expr) -> set[JetCoord]:
    """All jet coordinates read by the expression, including formal arguments."""
    out: set[JetCoord] = set()
    for mono, _ in e.terms:
        for atom, _ in mono:
            if isinstance(atom, (Indep, Deriv)):
                out.add(atom)
            elif isinstance(atom, Formal):
                out.update(atom.args)
    return out


def free_formals(e: Expr) -> set[Formal]:
    out: set[Formal] = set()
    for mono, _ in e.terms:
        for atom, _ in mono:
            if isinstance(atom, Formal):
                out.add(atom)
    return out


def max_order(e: Expr) -> int:
    orders = [0]
    for mono, _ in e.terms:
        for atom, _ in mono:
            if isinstance(atom, Deriv):
                orders.append(atom.total)
            elif isinstance(atom, Formal):
                orders.extend(a.total for a in atom.args if isinstance(a, Deriv))
    return max(orders)


class NonHarmonicBindingError(ValueError):
    """Raised when a harmonic formal symbol is bound to a non-harmonic target."""


def _laplacian_2d(e: Expr) -> Expr:
    if e.space.p != 2:
        raise ValueError("harmonicity check needs exactly two independent variables")
    return (
        total_derivative(total_derivative(e, 0), 0)
        + total_derivative(total_derivative(e, 1), 1)
    )


def substitute(
    e: Expr,
    coords: Mapping[JetCoord, Expr] | None = None,
    formals: Mapping[str, Expr] | None = None,
) -> Expr:
    """Simultaneous substitution of jet coordinates and formal symbols.

    `formals` maps a formal symbol name to a concrete Expr in that symbol's
    argument coordinates; every derivative atom of the symbol is replaced by
    the matching partial derivative of the target.  Binding a symbol flagged
    harmonic to a target whose Laplacian is nonzero raises
    NonHarmonicBindingError (the canonical form already used harmonicity).
    """
    coords = dict(coords or {})
    formals = dict(formals or {})
    if len(coords) != len(set(coords)):
        raise ValueError("binding keys must be distinct")
    space = e.space

    checked: set[str] = set()
    formal_cache: dict[Formal, Expr] = {}

    def formal_value(atom: Formal) -> Expr:
        if atom in formal_cache:
            return formal_cache[atom]
        target = formals[atom.name]
        if atom.harmonic and atom.name not in checked:
            if not _laplacian_2d(target).is_zero():
                raise NonHarmonicBindingError(
                    f"binding for harmonic symbol {atom.name!r} has nonzero Laplacian"
                )
            checked.add(atom.name)
        val = target
        for pos, n in enumerate(atom.deriv):
            for _ in range(n):
                val = partial_wrt(val, atom.args[pos])
        formal_cache[atom] = val
        return val

    out = Expr.zero(space)
    for mono, coeff in e.terms:
        term = Expr.const(space, coeff)
        for atom, exp in mono:
            if isinstance(atom, (Indep, Deriv)) and atom in coords:
                rep = coords[atom]
            elif isinstance(atom, Formal) and atom.name in formals:
                rep = formal_value(atom)
            else:
                rep = Expr.from_atom(space, atom)
            term = term * rep ** exp if exp > 1 else term * rep
        out = out + term
    return out
