"""Projected SOR for the per-step linear complementarity problems.

Solves z >= psi, A z - b >= 0, (z - psi)^T (A z - b) = 0 for sparse SPD A,
with the projection applied only to the constrained index set (field values;
flux/derivative unknowns stay unconstrained). The residual is
max_i |min(A z - b, z - psi)_i| over constrained rows and |A z - b|_i over
free rows, measured relative to max(1, ||b||_inf).

The sweep kernel is JIT-compiled with numba when available; a pure-python
fallback keeps small problems usable without it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["LcpStepProblem", "solve_lcp", "LcpError"]

DEFAULT_OMEGA = 1.4
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


class LcpError(RuntimeError):
    pass


def _psor_sweeps(indptr, indices, data, diag, b, x, psi, constrained,
                 omega, tol, max_iter):
    n = b.shape[0]
    res = np.inf
    for sweep in range(max_iter):
        for i in range(n):
            rowdot = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                rowdot += data[k] * x[indices[k]]
            xi = x[i] + omega * (b[i] - rowdot) / diag[i]
            if constrained[i] and xi < psi[i]:
                xi = psi[i]
            x[i] = xi
        res = 0.0
        for i in range(n):
            rowdot = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                rowdot += data[k] * x[indices[k]]
            w = rowdot - b[i]
            if constrained[i]:
                slack = x[i] - psi[i]
                m = w if w < slack else slack
                m = -m if m < 0.0 else m
            else:
                m = -w if w < 0.0 else w
            if m > res:
                res = m
        if res <= tol:
            return sweep + 1, res
    return max_iter, res


try:  # pragma: no cover - exercised implicitly
    from numba import njit

    _psor_sweeps = njit(cache=True, fastmath=False)(_psor_sweeps)
except ImportError:  # pragma: no cover
    pass


@dataclass(eq=False)
class LcpStepProblem:
    """One time-step complementarity system on the reduced DOF set."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    obstacle: np.ndarray          # psi, meaningful on constrained rows
    constrained: np.ndarray       # bool mask

    def __post_init__(self):
        if self.matrix.shape[0] != self.rhs.shape[0]:
            raise ValueError("matrix/rhs size mismatch")

    def residual(self, z: np.ndarray) -> float:
        w = self.matrix @ z - self.rhs
        scale = max(1.0, float(np.abs(self.rhs).max(initial=0.0)))
        res_c = np.abs(np.minimum(w, z - self.obstacle))[self.constrained]
        res_f = np.abs(w)[~self.constrained]
        vals = np.concatenate([res_c, res_f]) if res_f.size or res_c.size else np.zeros(1)
        return float(vals.max()) / scale


def solve_lcp(problem: LcpStepProblem, x0: np.ndarray,
              omega: float = DEFAULT_OMEGA, tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER) -> tuple[np.ndarray, int, float]:
    """Projected SOR from the warm start x0; returns (z, sweeps, residual)."""
    a = problem.matrix.tocsr()
    diag = a.diagonal()
    if np.any(diag <= 0.0):
        raise LcpError("matrix has non-positive diagonal entries (not SPD?)")
    x = np.array(x0, dtype=float)
    x[problem.constrained] = np.maximum(x[problem.constrained],
                                        problem.obstacle[problem.constrained])
    scale = max(1.0, float(np.abs(problem.rhs).max(initial=0.0)))
    sweeps, res = _psor_sweeps(
        a.indptr, a.indices, a.data, diag, problem.rhs, x,
        problem.obstacle, problem.constrained.astype(np.bool_),
        omega, tol * scale, max_iter)
    res /= scale
    if res > tol:
        raise LcpError(
            f"projected SOR did not reach tol={tol} in {max_iter} sweeps (residual {res:.3e})")
    return x, int(sweeps), float(res)
