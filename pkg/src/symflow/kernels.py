"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The only loops that dominate runtime are the Darcy matrix-vector product and
its conjugate-gradient driver; both live here.  Backend selection:

    SYMFLOW_BACKEND=numba   force numba (error if unavailable)
    SYMFLOW_BACKEND=numpy   force the vectorized numpy fallback
    unset                   numba when importable, else numpy

`benchmarks/bench_kernels.py` times the two paths against each other.
"""
from __future__ import annotations

import os
from typing import Optional

import numpy as np

__all__ = ["backend_name", "darcy_face_coefficients", "darcy_matvec", "darcy_cg"]


def _pick_backend() -> str:
    forced = os.environ.get("SYMFLOW_BACKEND", "").strip().lower()
    if forced == "numpy":
        return "numpy"
    if forced == "numba":
        import numba  # noqa: F401  (raise if missing)

        return "numba"
    if forced:
        raise ValueError(f"SYMFLOW_BACKEND must be 'numba' or 'numpy', not {forced!r}")
    try:
        import numba  # noqa: F401

        return "numba"
    except ImportError:
        return "numpy"


_BACKEND = _pick_backend()


def backend_name() -> str:
    return _BACKEND


def darcy_face_coefficients(k: np.ndarray) -> tuple[np.ndarray, ...]:
    """Harmonic-mean face permeabilities for the conservative 5-point stencil.

    k has shape (n, n) over the full grid; returns west/east/south/north face
    arrays over the interior block (n-2, n-2).
    """
    kc = k[1:-1, 1:-1]
    harm = lambda a, b: 2.0 * a * b / (a + b)
    kw = harm(kc, k[:-2, 1:-1])
    ke = harm(kc, k[2:, 1:-1])
    ks = harm(kc, k[1:-1, :-2])
    kn = harm(kc, k[1:-1, 2:])
    return kw, ke, ks, kn


def _matvec_numpy(kw, ke, ks, kn, v, h2):
    out = (kw + ke + ks + kn) * v
    out[1:, :] -= kw[1:, :] * v[:-1, :]
    out[:-1, :] -= ke[:-1, :] * v[1:, :]
    out[:, 1:] -= ks[:, 1:] * v[:, :-1]
    out[:, :-1] -= kn[:, :-1] * v[:, 1:]
    return out / h2


if _BACKEND == "numba":
    from numba import njit

    @njit(cache=True)
    def _matvec_numba(kw, ke, ks, kn, v, h2):  # pragma: no cover - jitted
        m, n = v.shape
        out = np.empty_like(v)
        for i in range(m):
            for j in range(n):
                acc = (kw[i, j] + ke[i, j] + ks[i, j] + kn[i, j]) * v[i, j]
                if i > 0:
                    acc -= kw[i, j] * v[i - 1, j]
                if i < m - 1:
                    acc -= ke[i, j] * v[i + 1, j]
                if j > 0:
                    acc -= ks[i, j] * v[i, j - 1]
                if j < n - 1:
                    acc -= kn[i, j] * v[i, j + 1]
                out[i, j] = acc / h2
        return out

    def darcy_matvec(kw, ke, ks, kn, v, h2):
        return _matvec_numba(kw, ke, ks, kn, v, h2)

else:

    def darcy_matvec(kw, ke, ks, kn, v, h2):
        return _matvec_numpy(kw, ke, ks, kn, v, h2)


def darcy_cg(
    k: np.ndarray,
    f: np.ndarray,
    h: float,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
) -> np.ndarray:
    """Solve the zero-Dirichlet conservative Darcy discretization by CG.

    -div(k grad u) = f on the interior of a uniform (n, n) grid with spacing
    h.  Returns the full-grid solution with zero boundary.  Raises on
    non-convergence (the operator is SPD, so CG is the natural solver).
    """
    n = k.shape[0]
    if k.shape != (n, n) or f.shape != (n, n):
        raise ValueError("k and f must be square and same shape")
    kw, ke, ks, kn = darcy_face_coefficients(k)
    b = f[1:-1, 1:-1].copy()
    h2 = h * h
    v = np.zeros_like(b)
    r = b - darcy_matvec(kw, ke, ks, kn, v, h2)
    p = r.copy()
    rs = float(np.vdot(r, r))
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros((n, n))
    if max_iter is None:
        max_iter = 20 * n * n
    it = 0
    while np.sqrt(rs) > tol * b_norm:
        if it >= max_iter:
            raise RuntimeError(
                f"CG failed to reach {tol:g} within {max_iter} iterations"
            )
        Ap = darcy_matvec(kw, ke, ks, kn, p, h2)
        alpha = rs / float(np.vdot(p, Ap))
        v += alpha * p
        r -= alpha * Ap
        rs_new = float(np.vdot(r, r))
        p = r + (rs_new / rs) * p
        rs = rs_new
        it += 1
    u = np.zeros((n, n))
    u[1:-1, 1:-1] = v
    return u
