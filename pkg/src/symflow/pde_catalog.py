"""Shipped PDE systems and their symmetry generators.

Two systems: viscous Burgers over (x, t) with the five-generator point
algebra, and two-dimensional Darcy flow over (x, y) with the two
infinite-dimensional generator families (one indexed by a function of u, one
by a harmonic function of x, y) plus the linear sub-family used for training.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Mapping, Optional, Union

from .jetlang import (
    Deriv,
    Expr,
    VarSpace,
    free_coords,
    max_order,
    parse,
    partial_wrt,
    to_dsl,
    total_derivative,
)
from .symmetry_engine import GeneralizedVectorField, check_harmonic

__all__ = [
    "PDESystem",
    "burgers",
    "darcy",
    "darcy_generators",
    "darcy_linear_subalgebra",
    "get_system",
    "BURGERS_REFERENCE_POINT_MULTIPLES",
]


@dataclass(frozen=True)
class PDESystem:
    name: str
    space: VarSpace
    residuals: tuple[Expr, ...]
    params: Mapping[str, Optional[Union[int, float, Fraction]]]
    generators: tuple[GeneralizedVectorField, ...] = ()
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "residuals", tuple(self.residuals))
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "params", dict(self.params))
        for r in self.residuals:
            if r.space != self.space:
                raise ValueError("residual over the wrong variable space")
        for g in self.generators:
            if g.space != self.space:
                raise ValueError("generator over the wrong variable space")
        labels = [g.name for g in self.generators]
        if len(set(labels)) != len(labels):
            raise ValueError("generator labels must be unique")

    @property
    def residual(self) -> Expr:
        if len(self.residuals) != 1:
            raise ValueError("system has multiple residual components")
        return self.residuals[0]

    def generator(self, label: str) -> GeneralizedVectorField:
        for g in self.generators:
            if g.name == label:
                return g
        raise KeyError(
            f"unknown generator {label!r}; have {[g.name for g in self.generators]}"
        )


# Reference table for the pure-multiple point actions of the scaling and
# projective Burgers generators.  Direct computation gives -3 and -3*t; the
# verify report surfaces both values whenever they disagree rather than
# silently preferring one.
BURGERS_REFERENCE_POINT_MULTIPLES: Mapping[str, str] = {
    "v3": "3*nu",
    "v5": "3*nu*t",
}


def burgers(nu: Optional[Union[int, float, Fraction]] = None) -> PDESystem:
    """Viscous Burgers u_t + u*u_x - nu*u_xx = 0 over (x, t).

    nu stays a symbolic parameter in the residual; a numeric value, when
    given, is recorded in params for grid evaluation.
    """
    space = VarSpace(("x", "t"), ("u",), ("nu",))
    res = parse("u_t + u*u_x - nu*u_xx", space)

    def fld(name, xi_x, xi_t, phi_u):
        return GeneralizedVectorField(
            space,
            (parse(xi_x, space), parse(xi_t, space)),
            (parse(phi_u, space),),
            name=name,
        )

    gens = (
        fld("v1", "1", "0", "0"),           # x translation
        fld("v2", "0", "1", "0"),           # t translation
        fld("v3", "x", "2*t", "-u"),        # scaling
        fld("v4", "t", "0", "1"),           # Galilean boost
        fld("v5", "t*x", "t^2", "x - t*u"),  # projective
    )
    if nu is not None and not isinstance(nu, (Real, Fraction)):
        raise TypeError("nu must be numeric or None")
    return PDESystem(
        name="burgers",
        space=space,
        residuals=(res,),
        params={"nu": nu},
        generators=gens,
        notes=(
            "residual stored expanded; all five classical generators ship",
            "point actions of v3/v5: see BURGERS_REFERENCE_POINT_MULTIPLES",
        ),
    )


_DARCY_SPACE = VarSpace(("x", "y"), ("u", "k", "f"))


def _u0(space: VarSpace) -> Deriv:
    return Deriv(space.dep_index("u"), space.zero_multi_index())


def _check_h1(h1: Expr):
    allowed = {_u0(h1.space)}
    if not free_coords(h1) <= allowed:
        raise ValueError("h1 must be a polynomial in u only")
    if max_order(h1) != 0:
        raise ValueError("h1 must not contain derivative coordinates")


def darcy_generators(
    h1: Optional[Expr] = None, h2: Optional[Expr] = None
) -> tuple[GeneralizedVectorField, GeneralizedVectorField]:
    """The two Darcy generator families over (x, y | u, k, f).

    h1/h2 of None keep the indexing functions formal (h1(u), harmonic
    h2(x,y)); concrete expressions instantiate them.  A concrete h2 must be
    harmonic.
    """
    space = _DARCY_SPACE
    if h1 is None:
        h1_u0 = parse("h1(u)", space)
        h1_prime = parse("h1_u(u)", space)
        tag1 = "v1_inf"
    else:
        if h1.space != space:
            raise ValueError("h1 over the wrong variable space")
        _check_h1(h1)
        h1_u0 = h1
        h1_prime = partial_wrt(h1, _u0(space))
        tag1 = f"v1_h={to_dsl(h1)}"
    zero = Expr.zero(space)
    k = parse("k", space)
    v1 = GeneralizedVectorField(
        space,
        (zero, zero),
        (h1_u0, -(k * h1_prime), zero),
        name=tag1,
    )

    if h2 is None:
        h2_x = parse("h2_x(x,y)", space, harmonic={"h2"})
        h2_y = parse("h2_y(x,y)", space, harmonic={"h2"})
        h2_xy = parse("h2_xy(x,y)", space, harmonic={"h2"})
        tag2 = "v2_inf"
    else:
        if h2.space != space:
            raise ValueError("h2 over the wrong variable space")
        if not check_harmonic(h2):
            raise ValueError("h2 must be harmonic in (x, y)")
        h2_x = total_derivative(h2, "x")
        h2_y = total_derivative(h2, "y")
        h2_xy = total_derivative(h2_x, "y")
        tag2 = f"v2_h={to_dsl(h2)}"
    f = parse("f", space)
    v2 = GeneralizedVectorField(
        space,
        (-h2_y, -h2_x),
        (zero, zero, 2 * f * h2_xy),
        name=tag2,
    )
    return v1, v2


def darcy_linear_subalgebra() -> tuple[GeneralizedVectorField, ...]:
    """The two fields from linear harmonic choices h2 = x and h2 = y."""
    space = _DARCY_SPACE
    return (
        darcy_generators(h2=parse("x", space))[1],
        darcy_generators(h2=parse("y", space))[1],
    )


def darcy() -> PDESystem:
    """Darcy flow div(k grad u) + f = 0, stored expanded so every jet
    coordinate is an explicit monomial atom.

    k and f are dependent variables of the jet space (the symmetries act on
    them); at training time their grids are inputs, never network outputs.
    """
    space = _DARCY_SPACE
    res = parse("k_x*u_x + k_y*u_y + k*u_xx + k*u_yy + f", space)
    v1_inf, v2_inf = darcy_generators()
    gens = (v1_inf, v2_inf) + darcy_linear_subalgebra()
    return PDESystem(
        name="darcy",
        space=space,
        residuals=(res,),
        params={},
        generators=gens,
        notes=(
            "residual is the expanded divergence form; the data generator"
            " discretizes the conservative form",
            "training uses the linear sub-family v2_h=x, v2_h=y",
        ),
    )


def get_system(name: str, **kwargs) -> PDESystem:
    """Catalog lookup by name: 'burgers' or 'darcy'."""
    if name == "burgers":
        return burgers(**kwargs)
    if name == "darcy":
        if kwargs:
            raise TypeError("darcy takes no parameters")
        return darcy()
    raise KeyError(f"unknown system {name!r}; catalog has 'burgers', 'darcy'")
