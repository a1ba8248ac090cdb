"""Theta-method time marching of the condensed DPG systems.

The implicit matrix is assembled and factorised once per coefficient regime
(constant coefficients make it time-invariant) and reused across steps; each
step only rebuilds the right-hand side from the previous state, applies the
current Dirichlet data through the constraint reduction and back-substitutes.
theta = 1 is backward Euler, theta = 0.5 Crank-Nicolson.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from . import assembly as asm
from .assembly import ElementOperators, ReducedSystem
from .forms import FormSpec, NormSpec
from .lcp import DEFAULT_MAX_ITER, DEFAULT_OMEGA, DEFAULT_TOL, LcpStepProblem, solve_lcp
from .meshing import Mesh1D

__all__ = ["TimeGrid", "TransientSolution", "ThetaStepper", "StepProblem", "advance_theta"]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] in time-to-maturity."""

    T: float
    n_steps: int
    dtau: float
    times: np.ndarray

    @staticmethod
    def build(T: float, n_steps: int) -> "TimeGrid":
        if n_steps < 1:
            raise ValueError("need at least one time step")
        return TimeGrid(T, n_steps, T / n_steps, np.linspace(0.0, T, n_steps + 1))


@dataclass(eq=False)
class TransientSolution:
    """Per-step DOF vectors plus per-step diagnostics."""

    times: np.ndarray
    states: np.ndarray                      # (n_steps+1, n_dofs)
    eta: Optional[np.ndarray] = None        # residual indicator per step (index 0 unused)
    lcp_iterations: Optional[np.ndarray] = None
    lcp_residuals: Optional[np.ndarray] = None

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1


class ThetaStepper:
    """Cached reduced system for one (mesh, form, norm, constraints) regime."""

    def __init__(self, ops: ElementOperators, reduced: ReducedSystem):
        self.ops = ops
        self.reduced = reduced
        self.matrix_reduced = reduced.reduce_matrix(ops.matrix)
        self._lu = None
        self._dirichlet_cols = ops.matrix[:, reduced.dirichlet_ids].toarray() \
            if len(reduced.dirichlet_ids) else np.zeros((ops.dof_map.n_dofs, 0))

    def _factor(self):
        if self._lu is None:
            self._lu = spla.splu(self.matrix_reduced.tocsc())
        return self._lu

    def _reduced_rhs(self, rhs_full: np.ndarray, bc_values: np.ndarray) -> np.ndarray:
        shifted = rhs_full - self._dirichlet_cols @ bc_values
        return self.reduced.T.T @ shifted

    def step(self, prev_state: np.ndarray, bc_values: Sequence[float],
             extra_l: Optional[np.ndarray] = None) -> np.ndarray:
        """One unconstrained theta-step with Dirichlet data at the new level."""
        bc = np.asarray(bc_values, dtype=float)
        rhs = self.ops.condensed_rhs(prev_state, extra_l)
        u_red = self._factor().solve(self._reduced_rhs(rhs, bc))
        asm._count_solve()
        if not np.all(np.isfinite(u_red)):
            raise np.linalg.LinAlgError("time step produced non-finite values")
        return self.reduced.expand(u_red, bc)

    def step_lcp(self, prev_state: np.ndarray, bc_values: Sequence[float],
                 obstacle_full: np.ndarray, constrained_ids: np.ndarray,
                 omega: float = DEFAULT_OMEGA, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER,
                 extra_l: Optional[np.ndarray] = None) -> tuple[np.ndarray, int, float]:
        """One obstacle-constrained step solved by projected SOR."""
        bc = np.asarray(bc_values, dtype=float)
        rhs = self.ops.condensed_rhs(prev_state, extra_l)
        b_red = self._reduced_rhs(rhs, bc)
        pos = self.reduced.pos
        n_red = self.reduced.n_reduced
        constrained = np.zeros(n_red, dtype=bool)
        psi = np.full(n_red, -np.inf)
        red_ids = pos[constrained_ids]
        inside = red_ids >= 0           # constrained DOFs eliminated by BCs drop out
        constrained[red_ids[inside]] = True
        psi[red_ids[inside]] = obstacle_full[constrained_ids[inside]]
        problem = LcpStepProblem(self.matrix_reduced, b_red, psi, constrained)
        x0 = prev_state[self.reduced.keep]
        z, sweeps, res = solve_lcp(problem, x0, omega=omega, tol=tol, max_iter=max_iter)
        asm._count_solve()
        return self.reduced.expand(z, bc), sweeps, res

    def indicator(self, prev_state: np.ndarray, new_state: np.ndarray,
                  extra_l: Optional[np.ndarray] = None) -> float:
        l_e = self.ops.element_loads(prev_state, extra_l)
        _, eta = self.ops.residual_indicator(new_state, l_e)
        return eta


@dataclass(frozen=True)
class StepProblem:
    """Bundle describing one semi-discrete problem for the public stepper."""

    mesh: Mesh1D
    form: FormSpec
    norm: NormSpec
    p: int
    dp: int = 2


def advance_theta(state_n: np.ndarray, theta: float, dtau: float,
                  problem: StepProblem, bc: Mapping[int, float]) -> np.ndarray:
    """Advance one theta-step; convenience wrapper building the operators.

    Pricing loops use ThetaStepper directly so the factorisation is reused;
    this entry point re-derives the form with the requested theta/dtau and
    performs a single step with Dirichlet data ``bc`` (DOF id -> value).
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    if not np.all(np.isfinite(state_n)):
        raise ValueError("previous state contains non-finite values")
    import dataclasses

    form = dataclasses.replace(problem.form, theta=theta, dtau=dtau)
    ops = ElementOperators(problem.mesh, form, problem.norm, problem.p, problem.dp)
    ids = sorted(bc)
    reduced = ReducedSystem(ops.dof_map.n_dofs, ids)
    stepper = ThetaStepper(ops, reduced)
    return stepper.step(state_n, np.array([bc[i] for i in ids]))
