"""Lower symbolic expressions to numeric evaluation on regular grids.

A compiled expression evaluates a canonical polynomial over jet coordinates
by building derivative channels (spectral multipliers on periodic axes, dense
finite-difference matrices elsewhere) and combining them pointwise.  Every
derivative node is linear with a known adjoint (conjugate multiplier or
matrix transpose), so cotangents pull back exactly through `adjoint_grad`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .jetlang import Deriv, Expr, Formal, Indep, Param, VarSpace

__all__ = [
    "Axis",
    "Grid",
    "GridField",
    "DiffScheme",
    "CompiledExpr",
    "compile_expr",
    "relative_l2",
    "mean_sq",
    "interior_slices",
    "equation_error",
]

_MAX_DERIV_ORDER = 3  # per-axis support of the shipped schemes


@dataclass(frozen=True)
class Axis:
    name: str
    n: int
    h: float
    periodic: bool

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("need at least 4 points per axis")
        if self.h <= 0:
            raise ValueError("spacing must be positive")

    def points(self) -> np.ndarray:
        return np.arange(self.n) * self.h


@dataclass(frozen=True)
class Grid:
    axes: tuple[Axis, ...]

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError("axis names must be unique")

    @staticmethod
    def regular(
        names: Sequence[str], shape: Sequence[int], periodic: Sequence[bool]
    ) -> "Grid":
        """Unit-domain grid: h = 1/n on periodic axes, 1/(n-1) otherwise."""
        axes = []
        for name, n, per in zip(names, shape, periodic):
            h = 1.0 / n if per else 1.0 / (n - 1)
            axes.append(Axis(name, n, h, per))
        return Grid(tuple(axes))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.n for a in self.axes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def coordinate_field(self, i: int) -> np.ndarray:
        pts = self.axes[i].points()
        reshape = [1] * len(self.axes)
        reshape[i] = self.axes[i].n
        return np.broadcast_to(pts.reshape(reshape), self.shape).copy()


@dataclass(frozen=True)
class GridField:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid field contains non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class DiffScheme:
    """Per-axis derivative discretization: 'spectral', 'fd2', or 'fd4'."""

    per_axis: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_axis", tuple(self.per_axis))
        for s in self.per_axis:
            if s not in ("spectral", "fd2", "fd4"):
                raise ValueError(f"unknown axis scheme {s!r}")

    def validate(self, grid: Grid):
        if len(self.per_axis) != len(grid.axes):
            raise ValueError("scheme/axis count mismatch")
        for s, a in zip(self.per_axis, grid.axes):
            if s == "spectral" and not a.periodic:
                raise ValueError(f"spectral scheme requires periodic axis {a.name!r}")


# ---------------------------------------------------------------------------
# Derivative operators
# ---------------------------------------------------------------------------


def _fd_weights(x0: float, nodes: np.ndarray, m: int) -> np.ndarray:
    """Fornberg weights for the m-th derivative at x0 from arbitrary nodes."""
    n = len(nodes)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = nodes[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _stencil_width(m: int, acc: int, periodic: bool) -> int:
    # smallest centered width achieving the accuracy; one-sided boundary rows
    # need m + acc nodes to keep the same order, so non-periodic axes widen
    w = 2 * ((m + 1) // 2) - 1 + acc
    if not periodic:
        w = max(w, m + acc)
    return w


@lru_cache(maxsize=None)
def _fd_matrix(n: int, h: float, m: int, acc: int, periodic: bool) -> np.ndarray:
    """Dense n x n differentiation matrix, one-sided closures at boundaries."""
    w = _stencil_width(m, acc, periodic)
    if w > n:
        raise ValueError(f"axis too short (n={n}) for order-{m} acc-{acc} stencil")
    M = np.zeros((n, n))
    half = w // 2
    offsets = np.arange(w) - half
    for i in range(n):
        if periodic:
            idx = (i + offsets) % n
            nodes = (i + offsets) * h
        else:
            s = min(max(i - half, 0), n - w)
            idx = np.arange(s, s + w)
            nodes = idx * h
        M[i, idx] = _fd_weights(i * h, nodes.astype(float), m)
    return M


@lru_cache(maxsize=None)
def _spectral_multiplier(n: int, h: float, m: int) -> np.ndarray:
    """(2*pi*i*f)^m over rfft bins; Nyquist zeroed for odd m."""
    freq = np.fft.rfftfreq(n, d=h)
    mult = (2j * np.pi * freq) ** m
    if m % 2 == 1 and n % 2 == 0:
        mult[-1] = 0.0
    return mult


def _apply_matrix(M: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
    out = np.tensordot(M, arr, axes=(1, axis))
    return np.moveaxis(out, 0, axis)


def _axis_derivative(
    arr: np.ndarray, grid: Grid, scheme: DiffScheme, axis: int, m: int,
    adjoint: bool = False,
) -> np.ndarray:
    # leading non-grid dimensions (e.g. a batch axis) pass through untouched
    off = arr.ndim - len(grid.axes)
    ax = grid.axes[axis]
    kind = scheme.per_axis[axis]
    if kind == "spectral":
        mult = _spectral_multiplier(ax.n, ax.h, m)
        if adjoint:
            mult = np.conj(mult)
        spec = np.fft.rfft(arr, axis=axis + off)
        shape = [1] * arr.ndim
        shape[axis + off] = len(mult)
        spec = spec * mult.reshape(shape)
        return np.fft.irfft(spec, n=ax.n, axis=axis + off)
    acc = 2 if kind == "fd2" else 4
    M = _fd_matrix(ax.n, ax.h, m, acc, ax.periodic)
    if adjoint:
        M = M.T
    return _apply_matrix(M, arr, axis + off)


def _multi_derivative(
    arr: np.ndarray, grid: Grid, scheme: DiffScheme, orders: tuple[int, ...],
    adjoint: bool = False,
) -> np.ndarray:
    # composed per axis in a fixed order; the adjoint reverses it
    axes = range(len(orders))
    for axis in (reversed(axes) if adjoint else axes):
        if orders[axis]:
            arr = _axis_derivative(arr, grid, scheme, axis, orders[axis], adjoint)
    return arr


# ---------------------------------------------------------------------------
# Compiled expression DAG
# ---------------------------------------------------------------------------

# factor slots: ("chan", channel index) or ("coord", axis index)
_Factor = tuple[str, int]


@dataclass(frozen=True)
class CompiledExpr:
    space: VarSpace
    grid: Grid
    scheme: DiffScheme
    # derivative channels (alpha, J); J = all zeros is the field itself
    channels: tuple[tuple[int, tuple[int, ...]], ...]
    # terms: (coefficient, ((factor, power), ...))
    terms: tuple[tuple[float, tuple[tuple[_Factor, int], ...]], ...]

    # -- forward -------------------------------------------------------------

    def _channel_values(
        self, inputs: Mapping[str, np.ndarray], batch: bool
    ) -> tuple[list[np.ndarray], Optional[int]]:
        bsize = None
        fields = {}
        for name in {self.space.dependent[a] for a, _ in self.channels}:
            if name not in inputs:
                raise KeyError(f"missing input slot {name!r}")
            v = inputs[name]
            v = v.values if isinstance(v, GridField) else np.asarray(v, float)
            ok = (v.ndim == len(self.grid.shape) + 1 and v.shape[1:] == self.grid.shape
                  ) if batch else v.shape == self.grid.shape
            if not ok:
                raise ValueError(
                    f"input {name!r} shape {v.shape} != grid {self.grid.shape}"
                    + (" with leading batch axis" if batch else "")
                )
            if batch:
                if bsize is None:
                    bsize = v.shape[0]
                elif v.shape[0] != bsize:
                    raise ValueError("inconsistent batch sizes across inputs")
            fields[name] = v
        if batch and bsize is None:
            raise ValueError("batch evaluation needs at least one field channel")
        out = []
        for alpha, J in self.channels:
            base = fields[self.space.dependent[alpha]]
            out.append(
                base if not any(J) else _multi_derivative(base, self.grid, self.scheme, J)
            )
        return out, bsize

    def eval(
        self, inputs: Mapping[str, Union[np.ndarray, GridField]], batch: bool = False
    ) -> Union[GridField, np.ndarray]:
        """Evaluate on grid-shaped inputs; with batch=True every input carries
        a leading sample axis and a raw array is returned."""
        chans, bsize = self._channel_values(inputs, batch)
        shape = self.grid.shape if not batch else (bsize,) + self.grid.shape
        acc = np.zeros(shape)
        for coeff, factors in self.terms:
            term = np.full(self.grid.shape, coeff)
            for (kind, idx), power in factors:
                base = chans[idx] if kind == "chan" else self.grid.coordinate_field(idx)
                term = term * (base if power == 1 else base ** power)
            acc += term
        return acc if batch else GridField(acc, self.grid)

    # -- reverse -------------------------------------------------------------

    def adjoint_grad(
        self,
        inputs: Mapping[str, Union[np.ndarray, GridField]],
        cotangent: Union[np.ndarray, GridField],
        wrt: str,
        batch: bool = False,
    ) -> Union[GridField, np.ndarray]:
        """d<cotangent, eval(inputs)> / d inputs[wrt], exact for the discrete
        computation."""
        if wrt not in self.space.dependent:
            raise KeyError(f"unknown input slot {wrt!r}")
        cot = cotangent.values if isinstance(cotangent, GridField) else np.asarray(cotangent)
        chans, bsize = self._channel_values(inputs, batch)
        shape = self.grid.shape if not batch else (bsize,) + self.grid.shape
        chan_cot = [np.zeros(shape) for _ in self.channels]
        for coeff, factors in self.terms:
            vals = []
            for (kind, idx), power in factors:
                base = chans[idx] if kind == "chan" else self.grid.coordinate_field(idx)
                vals.append(base)
            for fi, ((kind, idx), power) in enumerate(factors):
                if kind != "chan":
                    continue
                partial = np.full(self.grid.shape, coeff)
                for fj, ((k2, i2), p2) in enumerate(factors):
                    if fj == fi:
                        continue
                    partial = partial * (vals[fj] if p2 == 1 else vals[fj] ** p2)
                if power > 1:
                    partial = partial * (power * vals[fi] ** (power - 1))
                chan_cot[idx] += partial * cot
        alpha_w = self.space.dep_index(wrt)
        grad = np.zeros(shape)
        for (alpha, J), cc in zip(self.channels, chan_cot):
            if alpha != alpha_w:
                continue
            grad += cc if not any(J) else _multi_derivative(
                cc, self.grid, self.scheme, J, adjoint=True
            )
        return grad if batch else GridField(grad, self.grid)

    def dump(self) -> str:
        """Text listing of the evaluation DAG."""
        lines = []
        for i, (alpha, J) in enumerate(self.channels):
            name = self.space.dependent[alpha]
            suffix = "".join(
                nm * k for nm, k in zip(self.space.independent, J)
            )
            lines.append(f"chan[{i}] = D[{suffix or '0'}] {name}")
        for coeff, factors in self.terms:
            parts = [f"{coeff:g}"]
            for (kind, idx), power in factors:
                label = f"chan[{idx}]" if kind == "chan" else self.grid.names[idx]
                parts.append(label if power == 1 else f"{label}^{power}")
            lines.append("term " + " * ".join(parts))
        return "\n".join(lines)


def compile_expr(
    e: Expr,
    grid: Grid,
    scheme: DiffScheme,
    params: Optional[Mapping[str, float]] = None,
) -> CompiledExpr:
    """Lower a symbolic expression to grid evaluation.

    Independent variables of the expression's space must match the grid axes
    in order; every symbolic parameter needs a numeric value; formal function
    symbols are not evaluable and must be instantiated first.
    """
    space = e.space
    scheme.validate(grid)
    if grid.names != space.independent:
        raise ValueError(
            f"grid axes {grid.names} do not match independents {space.independent}"
        )
    params = dict(params or {})
    channels: dict[tuple[int, tuple[int, ...]], int] = {}
    terms = []
    for mono, coeff in e.terms:
        c = float(coeff)
        factors: list[tuple[_Factor, int]] = []
        for atom, power in mono:
            if isinstance(atom, Param):
                if atom.name not in params:
                    raise ValueError(f"unbound parameter {atom.name!r}")
                c *= float(params[atom.name]) ** power
            elif isinstance(atom, Indep):
                factors.append((("coord", atom.index), power))
            elif isinstance(atom, Deriv):
                if any(o > _MAX_DERIV_ORDER for o in atom.orders):
                    raise ValueError(
                        f"derivative order {atom.orders} beyond scheme support"
                    )
                key = (atom.alpha, atom.orders)
                idx = channels.setdefault(key, len(channels))
                factors.append((("chan", idx), power))
            elif isinstance(atom, Formal):
                raise ValueError(
                    f"formal symbol {atom.name!r} cannot be compiled; "
                    "instantiate it first"
                )
            else:
                raise TypeError(atom)
        terms.append((c, tuple(factors)))
    chan_list = tuple(k for k, _ in sorted(channels.items(), key=lambda kv: kv[1]))
    return CompiledExpr(space, grid, scheme, chan_list, tuple(terms))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _values(a) -> np.ndarray:
    return a.values if isinstance(a, GridField) else np.asarray(a, dtype=np.float64)


def mean_sq(a) -> float:
    v = _values(a)
    return float(np.mean(v * v))


def relative_l2(a, b) -> float:
    """||a - b||_2 / ||b||_2 with the discrete 2-norm."""
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise ValueError("shape mismatch")
    denom = float(np.linalg.norm(vb))
    if denom == 0.0:
        raise ValueError("zero-norm reference field")
    return float(np.linalg.norm(va - vb)) / denom


def interior_slices(grid: Grid, rings: int = 2) -> tuple[slice, ...]:
    """Index slices excluding boundary rings on non-periodic axes (where
    one-sided stencils live); periodic axes keep all points."""
    out = []
    for ax in grid.axes:
        if ax.periodic:
            out.append(slice(None))
        else:
            if ax.n <= 2 * rings:
                raise ValueError("axis too short for interior exclusion")
            out.append(slice(rings, ax.n - rings))
    return tuple(out)


def equation_error(residual: Union[np.ndarray, GridField], grid: Grid,
                   rings: int = 2) -> float:
    """sqrt(mean residual^2) over interior points (see interior_slices)."""
    v = _values(residual)[interior_slices(grid, rings)]
    return float(np.sqrt(np.mean(v * v)))
