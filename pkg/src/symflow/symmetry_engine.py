"""Characteristics, prolongations, and on-shell vanishing certificates.

A generalized vector field v = sum_i xi^i d/dx^i + sum_a phi_a d/du^a acts on
a differential function F through its prolongation.  Rather than substituting
the PDE into the result (which needs symbolic division when the leading
coefficient is a field like k), on-shell vanishing is certified by exhibiting
cofactors: target = sum_J c_J * D_J[Delta].  The decomposition doubles as an
auditable witness.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

from .jetlang import (
    Deriv,
    Expr,
    Indep,
    Param,
    VarSpace,
    free_coords,
    parse,
    partial_wrt,
    to_dsl,
    total_derivative,
    total_derivative_multi,
)
from .jetlang.core import Atom, Formal, Monomial, _mono_key, _mono_mul

__all__ = [
    "GeneralizedVectorField",
    "EvolutionaryField",
    "CofactorDecomposition",
    "VerificationStatus",
    "VerificationResult",
    "characteristic",
    "prolong_apply_evolutionary",
    "prolong_apply_point",
    "cofactor_decompose",
    "is_symmetry",
    "check_harmonic",
    "verify_system",
]


@dataclass(frozen=True)
class GeneralizedVectorField:
    """Coefficient bundle (xi per independent, phi per dependent)."""

    space: VarSpace
    xi: tuple[Expr, ...]
    phi: tuple[Expr, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "xi", tuple(self.xi))
        object.__setattr__(self, "phi", tuple(self.phi))
        if len(self.xi) != self.space.p:
            raise ValueError("need one xi per independent variable")
        if len(self.phi) != self.space.q:
            raise ValueError("need one phi per dependent variable")
        for e in self.xi + self.phi:
            if e.space != self.space:
                raise ValueError("coefficient expression over the wrong space")

    @property
    def is_point(self) -> bool:
        from .jetlang import max_order

        return all(max_order(e) == 0 for e in self.xi + self.phi)


@dataclass(frozen=True)
class EvolutionaryField:
    """Field of the form sum_a Q_a d/du^a; Q is the characteristic."""

    space: VarSpace
    Q: tuple[Expr, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "Q", tuple(self.Q))
        if len(self.Q) != self.space.q:
            raise ValueError("need one characteristic component per dependent")
        for e in self.Q:
            if e.space != self.space:
                raise ValueError("characteristic expression over the wrong space")


def characteristic(v: GeneralizedVectorField) -> EvolutionaryField:
    """Q_a = phi_a - sum_i xi^i * u^a_i."""
    space = v.space
    Q = []
    for alpha in range(space.q):
        q = v.phi[alpha]
        for i in range(space.p):
            e_i = tuple(1 if j == i else 0 for j in range(space.p))
            q = q - v.xi[i] * Expr.jet(space, alpha, e_i)
        Q.append(q)
    return EvolutionaryField(space, tuple(Q), name=v.name)


def prolong_apply_evolutionary(Q: EvolutionaryField, F: Expr) -> Expr:
    """pr v_Q[F] = sum over jet coords u^a_J in F of D_J[Q_a] * dF/du^a_J."""
    if F.space != Q.space:
        raise ValueError("field and target live in different variable spaces")
    out = Expr.zero(F.space)
    for c in sorted(free_coords(F), key=lambda a: a.key()):
        if not isinstance(c, Deriv):
            continue
        dF = partial_wrt(F, c)
        if dF.is_zero():
            continue
        out = out + total_derivative_multi(Q.Q[c.alpha], c.orders) * dF
    return out


def prolong_apply_point(v: GeneralizedVectorField, F: Expr) -> Expr:
    """Classical prolongation via pr v[F] = pr v_Q[F] + sum_i xi^i * D_i F."""
    out = prolong_apply_evolutionary(characteristic(v), F)
    for i in range(v.space.p):
        if not v.xi[i].is_zero():
            out = out + v.xi[i] * total_derivative(F, i)
    return out


def check_harmonic(p: Expr) -> bool:
    """True iff p is a polynomial in the independent variables with
    p_xx + p_yy = 0.  Requires a two-dimensional base space."""
    if p.space.p != 2:
        raise ValueError("harmonicity check needs exactly two independent variables")
    for c in free_coords(p):
        if not isinstance(c, Indep):
            raise ValueError("harmonicity check expects a polynomial in x, y only")
    for mono, _ in p.terms:
        for atom, _ in mono:
            if isinstance(atom, (Param, Formal)):
                raise ValueError("harmonicity check expects a polynomial in x, y only")
    lap = total_derivative(total_derivative(p, 0), 0) + total_derivative(
        total_derivative(p, 1), 1
    )
    return lap.is_zero()


# ---------------------------------------------------------------------------
# Cofactor decomposition: target = sum over (residual l, multi-index J) of
# c_{l,J} * D_J[Delta_l], with polynomial cofactors solved exactly.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CofactorDecomposition:
    space: VarSpace
    # (residual index, multi-index J, cofactor) triples, zero cofactors omitted
    terms: tuple[tuple[int, tuple[int, ...], Expr], ...]

    def reconstruct(self, residuals: Sequence[Expr]) -> Expr:
        out = Expr.zero(self.space)
        for l, J, c in self.terms:
            out = out + c * total_derivative_multi(residuals[l], J)
        return out

    def coefficient(self, J: tuple[int, ...], residual: int = 0) -> Expr:
        for l, j, c in self.terms:
            if l == residual and j == J:
                return c
        return Expr.zero(self.space)

    def max_support_order(self) -> int:
        return max((sum(J) for _, J, _ in self.terms), default=0)

    def is_pure_multiple(self) -> bool:
        """All cofactors with |J| >= 1 vanish (target is c * Delta)."""
        return self.max_support_order() == 0

    def witness(self, space: VarSpace) -> dict[str, str]:
        """J (as a derivative suffix over the independents) -> cofactor DSL."""
        out = {}
        for l, J, c in self.terms:
            suffix = "".join(
                name * n for name, n in zip(space.independent, J)
            )
            key = suffix if len(self.terms) == 0 or l == 0 else f"{l}:{suffix}"
            out[key] = to_dsl(c)
        return out


def _multi_indices(p: int, max_order: int):
    """All multi-indices over p axes with total order <= max_order, by order."""
    out = []
    for total in range(max_order + 1):
        for combo in itertools.combinations_with_replacement(range(p), total):
            J = [0] * p
            for i in combo:
                J[i] += 1
            out.append(tuple(J))
    return out


def _candidate_monomials(atoms: Sequence[Atom], max_degree: int):
    out: list[Monomial] = []
    for d in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(len(atoms)), d):
            counts: dict[int, int] = {}
            for i in combo:
                counts[i] = counts.get(i, 0) + 1
            mono = tuple(
                sorted(((atoms[i], n) for i, n in counts.items()),
                       key=lambda kv: kv[0].key())
            )
            out.append(mono)
    return out


def _atoms_of(e: Expr) -> set[Atom]:
    out: set[Atom] = set()
    for mono, _ in e.terms:
        for atom, _ in mono:
            out.add(atom)
    return out


def _peel(columns: list[dict[Monomial, Fraction]],
          target: dict[Monomial, Fraction]) -> set[int]:
    """Drop columns whose coefficient is forced to zero: a column owning a
    monomial that appears in no other live column and not in the target
    cannot participate (column monomials never cancel within a column)."""
    alive = set(range(len(columns)))
    incidence: dict[Monomial, set[int]] = {}
    for j, col in enumerate(columns):
        for m in col:
            incidence.setdefault(m, set()).add(j)
    count = {m: len(owners) for m, owners in incidence.items()}
    work = [m for m, c in count.items() if c == 1 and m not in target]
    while work:
        m = work.pop()
        if count.get(m, 0) != 1 or m in target:
            continue
        owners = incidence[m] & alive
        if len(owners) != 1:
            continue
        j = owners.pop()
        alive.discard(j)
        for m2 in columns[j]:
            count[m2] -= 1
            if count[m2] == 1 and m2 not in target:
                work.append(m2)
    return alive


def _solve_exact(columns: list[dict[Monomial, Fraction]],
                 target: dict[Monomial, Fraction]) -> Optional[list[Fraction]]:
    """Solve sum_j x_j * columns[j] = target exactly over the rationals.

    Sparse insertion echelon: each monomial contributes one equation over the
    column unknowns; rows are reduced against existing pivots as they arrive.
    """
    n = len(columns)
    alive = sorted(_peel(columns, target))
    if not alive:
        return [Fraction(0)] * n if not target else None

    equations: dict[Monomial, dict[int, Fraction]] = {}
    for j in alive:
        for m, c in columns[j].items():
            equations.setdefault(m, {})[j] = c
    for m in target:
        equations.setdefault(m, {})

    pivots: dict[int, tuple[dict[int, Fraction], Fraction]] = {}
    for m in sorted(equations, key=_mono_key):
        row = dict(equations[m])
        rhs = target.get(m, Fraction(0))
        while row:
            lead = min(row)
            if lead not in pivots:
                inv = 1 / row[lead]
                row = {c: v * inv for c, v in row.items()}
                pivots[lead] = (row, rhs * inv)
                break
            prow, prhs = pivots[lead]
            f = row.pop(lead)
            for c, v in prow.items():
                if c == lead:
                    continue
                nv = row.get(c, Fraction(0)) - f * v
                if nv:
                    row[c] = nv
                else:
                    row.pop(c, None)
            rhs -= f * prhs
        else:
            if rhs != 0:
                return None

    x = [Fraction(0)] * n
    for lead in sorted(pivots, reverse=True):
        row, rhs = pivots[lead]
        val = rhs
        for c, v in row.items():
            if c != lead:
                val -= v * x[c]
        x[lead] = val
    return x


def _residual_list(pde) -> tuple[Sequence[Expr], VarSpace]:
    residuals = getattr(pde, "residuals", pde)
    residuals = list(residuals)
    if not residuals:
        raise ValueError("need at least one residual")
    return residuals, residuals[0].space


def cofactor_decompose(
    target: Expr,
    pde,
    max_order: int = 2,
    max_degree: int = 3,
) -> Optional[CofactorDecomposition]:
    """Search for target = sum c_{l,J} * D_J[Delta_l] with |J| <= max_order.

    Cofactors are polynomials of degree <= max_degree.  The search escalates
    through stages (smaller J supports and atom sets first) so a returned
    witness has minimal derivative support.  Returns None when no
    decomposition exists within the bounds; that is inconclusive, not a
    disproof.
    """
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    residuals, space = _residual_list(pde)
    if target.space != space:
        raise ValueError("target and residuals live in different spaces")
    if target.is_zero():
        return CofactorDecomposition(space, ())

    derived: dict[tuple[int, tuple[int, ...]], Expr] = {}
    for l, res in enumerate(residuals):
        for J in _multi_indices(space.p, max_order):
            derived[(l, J)] = total_derivative_multi(res, J)

    base_atoms: list[Atom] = [Indep(i) for i in range(space.p)]
    base_atoms += [Param(nm) for nm in space.parameters]
    formal_atoms = sorted(
        (a for a in _atoms_of(target) if isinstance(a, Formal)),
        key=lambda a: a.key(),
    )
    # stage two admits jet coordinates of the target and the residuals
    # themselves in cofactors; bounded search, a miss is never a disproof
    jet_atoms: set[Atom] = set()
    for e in [target, *residuals]:
        jet_atoms.update(a for a in _atoms_of(e) if isinstance(a, Deriv))
    stage_atoms = [
        base_atoms + formal_atoms,
        base_atoms + formal_atoms + sorted(jet_atoms, key=lambda a: a.key()),
    ]

    target_map = {m: c for m, c in target.terms}
    for order_bound in range(max_order + 1):
        Js = _multi_indices(space.p, order_bound)
        for atoms in stage_atoms:
            monos = _candidate_monomials(atoms, max_degree)
            if len(monos) * len(Js) * len(residuals) > 200_000:
                raise ValueError(
                    "cofactor search space too large; lower max_order/max_degree"
                )
            keys: list[tuple[int, tuple[int, ...], Monomial]] = []
            columns: list[dict[Monomial, Fraction]] = []
            for l in range(len(residuals)):
                for J in Js:
                    dj = derived[(l, J)]
                    for m in monos:
                        col = {}
                        for rm, rc in dj.terms:
                            col[_mono_mul(m, rm)] = rc
                        if col:
                            keys.append((l, J, m))
                            columns.append(col)
            sol = _solve_exact(columns, target_map)
            if sol is None:
                continue
            coeffs: dict[tuple[int, tuple[int, ...]], dict[Monomial, Fraction]] = {}
            for (l, J, m), x in zip(keys, sol):
                if x != 0:
                    coeffs.setdefault((l, J), {})
                    coeffs[(l, J)][m] = coeffs[(l, J)].get(m, Fraction(0)) + x
            terms = tuple(
                (l, J, Expr(space, cmap))
                for (l, J), cmap in sorted(coeffs.items())
                if not Expr(space, cmap).is_zero()
            )
            deco = CofactorDecomposition(space, terms)
            if (deco.reconstruct(residuals) - target).is_zero():
                return deco
            # exact solve should always reconstruct; fall through defensively
    return None


# ---------------------------------------------------------------------------
# Verification verdicts
# ---------------------------------------------------------------------------


class VerificationStatus(Enum):
    CERTIFIED = "certified"
    REFUTED = "refuted"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class VerificationResult:
    status: VerificationStatus
    field_name: str
    targets: tuple[Expr, ...]
    decompositions: tuple[Optional[CofactorDecomposition], ...]
    note: str = ""


def _every_monomial_has_jet(e: Expr) -> bool:
    for mono, _ in e.terms:
        if not any(isinstance(atom, Deriv) for atom, _ in mono):
            return False
    return True


def _refutable(target: Expr, residuals: Sequence[Expr]) -> bool:
    """Sound impossibility check: every monomial of every D_J[Delta] contains
    a jet coordinate (differentiation preserves that), so a target monomial
    with no jet coordinate at all cannot be matched by any decomposition."""
    if not all(_every_monomial_has_jet(r) for r in residuals):
        return False
    return not _every_monomial_has_jet(target)


Field = Union[GeneralizedVectorField, EvolutionaryField]


def is_symmetry(
    field: Field,
    pde,
    max_order: int = 2,
    max_degree: int = 3,
) -> VerificationResult:
    """Certify (or refute, or give up on) the field being a symmetry of pde.

    Certified: the prolongation action on every residual decomposes through
    the residuals and their total derivatives.  Refuted: a monomial of some
    action contains no jet coordinate, which no decomposition can produce.
    Otherwise inconclusive at the given bounds.
    """
    residuals, _ = _residual_list(pde)
    targets = []
    for F in residuals:
        if isinstance(field, EvolutionaryField):
            targets.append(prolong_apply_evolutionary(field, F))
        else:
            targets.append(prolong_apply_point(field, F))
    decos: list[Optional[CofactorDecomposition]] = []
    status = VerificationStatus.CERTIFIED
    for t in targets:
        if _refutable(t, residuals):
            return VerificationResult(
                VerificationStatus.REFUTED,
                field.name,
                tuple(targets),
                tuple(None for _ in targets),
                note="action has a monomial free of jet coordinates",
            )
        d = cofactor_decompose(t, residuals, max_order, max_degree)
        decos.append(d)
        if d is None:
            status = VerificationStatus.INCONCLUSIVE
    return VerificationResult(status, field.name, tuple(targets), tuple(decos))


def verify_system(
    pde,
    max_order: int = 2,
    max_degree: int = 3,
    reference_multiples: Optional[Mapping[str, str]] = None,
) -> list[dict]:
    """Verify every catalog generator of pde; one JSON-able record per
    (generator, residual).

    reference_multiples maps generator names to DSL constants from the
    catalog's reference table for pure-multiple point actions.  When the
    computed cofactor differs from the table, both values are recorded in the
    note instead of silently preferring either.
    """
    residuals, space = _residual_list(pde)
    refs = dict(reference_multiples or {})
    records = []
    for gen in pde.generators:
        t0 = time.perf_counter()
        result = is_symmetry(gen, pde, max_order, max_degree)
        dt = time.perf_counter() - t0
        for ridx in range(len(residuals)):
            deco = result.decompositions[ridx]
            note = result.note
            if (
                gen.name in refs
                and deco is not None
                and deco.is_pure_multiple()
            ):
                computed = deco.coefficient(space.zero_multi_index(), ridx)
                expected = parse(refs[gen.name], space)
                if computed != expected:
                    note = (
                        f"computed pure multiple {to_dsl(computed)} disagrees "
                        f"with reference table value {refs[gen.name]}"
                    )
            records.append(
                {
                    "pde": getattr(pde, "name", ""),
                    "generator": gen.name,
                    "residual": ridx,
                    "status": result.status.value,
                    "action": to_dsl(result.targets[ridx]),
                    "witness": deco.witness(space) if deco is not None else None,
                    "seconds": round(dt, 6),
                    "note": note,
                }
            )
    return records
