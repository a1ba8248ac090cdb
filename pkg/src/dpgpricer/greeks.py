"""Delta, Gamma and parameter sensitivities of the grid solutions.

Under x = ln S the chain rule gives Delta = u_x / S and
Gamma = (u_xx - u_x) / S^2. The ultraweak formulation carries u_x as its own
trial unknown, so Delta comes for free (no additional solves); Gamma needs
one elementwise derivative of that field. Primal results fall back to nodal
differences. Sensitivities with respect to model parameters (rho, vega)
solve the same log-price operator forward in tau with a source assembled
from the base solution's derivatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import assembly as asm
from .assembly import ElementOperators, ReducedSystem
from .contracts import CALL, EUROPEAN, PUT, MarketParams, boundary_values
from .fields import element_values, eval_field, nodal_values
from .forms import PRIMAL, ULTRAWEAK, black_scholes_form, black_scholes_norm, constant
from .meshing import eval_basis, lagrange_basis
from .pricing import Discretization, FreeBoundary, PricingResult
from .stepping import ThetaStepper, TimeGrid, TransientSolution

__all__ = [
    "GreekField",
    "SensitivitySpec",
    "SensitivityResult",
    "delta_from_ultraweak",
    "gamma_from_solution",
    "solve_sensitivity_pde",
    "sensitivity_spec",
]


@dataclass(eq=False)
class GreekField:
    """Delta/Gamma surfaces on the (x, tau) grid plus spot values at tau = T."""

    x_nodes: np.ndarray
    taus: np.ndarray
    delta: Optional[np.ndarray] = None       # (n_steps+1, n_nodes)
    gamma: Optional[np.ndarray] = None
    delta_at_spot: Optional[float] = None
    gamma_at_spot: Optional[float] = None
    gamma_jump_at_boundary: Optional[bool] = None


def _spot_x(result: PricingResult) -> float:
    return math.log(result.market.S0)


def delta_from_ultraweak(result: PricingResult) -> GreekField:
    """Delta read off the ultraweak gradient unknown; no extra solves.

    Delta(S, tau) = u_x(ln S, tau) / S. Raises for primal results, which do
    not carry the gradient as a trial variable.
    """
    if result.dof_map.formulation != ULTRAWEAK:
        raise ValueError("implicit Delta needs an ultraweak result")
    mesh = result.mesh
    xs = mesh.nodes
    s_vals = np.exp(xs)
    states = result.solution.states
    delta = np.empty((states.shape[0], len(xs)))
    for n in range(states.shape[0]):
        delta[n] = nodal_values(mesh, result.dof_map, states[n], "grad") / s_vals
    x0 = _spot_x(result)
    d_spot = result.grad_at(x0) / result.market.S0
    return GreekField(xs.copy(), result.solution.times.copy(), delta=delta,
                      delta_at_spot=float(d_spot))


def _grad_deriv_nodal(result: PricingResult, step: int) -> np.ndarray:
    """d(u_x)/dx at mesh nodes from the gradient-field interpolant."""
    mesh = result.mesh
    dof_map = result.dof_map
    trial = result.trial
    loc = element_values(dof_map, result.solution.states[step], "grad")
    _, dref = eval_basis(trial, trial.nodes)
    slopes = loc @ dref.T * (2.0 / mesh.h)
    left, right = slopes[:, 0], slopes[:, -1]
    out = np.empty(mesh.n_elements + 1)
    out[1:-1] = 0.5 * (right[:-1] + left[1:])
    out[0] = left[0]
    out[-1] = right[-1]
    return out


def _second_difference(values: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / h ** 2
    out[0] = out[1]
    out[-1] = out[-2]
    return out


def _centered_difference(values: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    out[0] = (values[1] - values[0]) / h
    out[-1] = (values[-1] - values[-2]) / h
    return out


def gamma_from_solution(result: PricingResult,
                        boundary: Optional[FreeBoundary] = None) -> GreekField:
    """Gamma(S, tau) = (u_xx - u_x)/S^2 from the grid solution.

    Ultraweak results differentiate the gradient unknown elementwise; primal
    results use second differences of the nodal values. When an American
    early-exercise boundary is supplied, a jump detector compares the Gamma
    levels on either side of the boundary at tau = T.
    """
    mesh = result.mesh
    xs = mesh.nodes
    s_sq = np.exp(2.0 * xs)
    n_states = result.solution.states.shape[0]
    gamma = np.empty((n_states, len(xs)))
    ultra = result.dof_map.formulation == ULTRAWEAK
    if not ultra and result.disc.p == 0:
        raise ValueError("Gamma needs at least a linear trial space")
    for n in range(n_states):
        if ultra:
            ux = nodal_values(mesh, result.dof_map, result.solution.states[n], "grad")
            uxx = _grad_deriv_nodal(result, n)
        else:
            u = nodal_values(mesh, result.dof_map, result.solution.states[n])
            ux = _centered_difference(u, mesh.h)
            uxx = _second_difference(u, mesh.h)
        gamma[n] = (uxx - ux) / s_sq
    x0 = _spot_x(result)
    i0 = mesh.element_of(x0)
    g_spot = float(np.interp(x0, xs, gamma[-1]))
    jump = None
    if boundary is not None:
        jump = _gamma_jump_detector(xs, gamma[-1], boundary)
    return GreekField(xs.copy(), result.solution.times.copy(), gamma=gamma,
                      gamma_at_spot=g_spot, gamma_jump_at_boundary=jump)


def _gamma_jump_detector(xs: np.ndarray, gamma_final: np.ndarray,
                         boundary: FreeBoundary) -> bool:
    """Flag an O(1) Gamma discontinuity across the exercise boundary."""
    x_f = math.log(boundary.s_f[-1])
    h = xs[1] - xs[0]
    j = int(np.clip(np.searchsorted(xs, x_f), 3, len(xs) - 4))
    left = np.median(gamma_final[j - 3:j])          # exercise side: Gamma ~ 0
    right = np.max(gamma_final[j:j + 4])
    scale = max(np.abs(gamma_final).max(), 1e-12)
    return bool((right - left) > 0.25 * scale)


# ---------------------------------------------------------------------------
# Parameter sensitivities (direct method)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensitivitySpec:
    """Derivatives of the operator coefficients w.r.t. one model parameter.

    The log-price operator is A u = -a u'' + b u' + c u; differentiating the
    marched equation in the parameter alpha gives

        d/dtau u_a + A u_a = da*u_xx - db*u_x - dc*u

    with u the base solution. ``d_boundary(tau) -> (left, right)`` carries
    the differentiated Dirichlet data.
    """

    parameter: str
    d_diffusion: Callable
    d_convection: Callable
    d_reaction: Callable
    d_boundary: Callable


def sensitivity_spec(parameter: str, contract, market: MarketParams) -> SensitivitySpec:
    """Coefficient/boundary derivatives for alpha in {spot, r, sigma}."""
    k, t_mat, r = contract.K, market.T, market.r
    zero = constant(0.0)

    def bc_zero(tau):
        return (0.0, 0.0)

    if parameter == "spot":
        # x = ln S is spot-independent; Delta comes from the chain rule instead
        return SensitivitySpec("spot", zero, zero, zero, bc_zero)
    if parameter == "r":
        def bc_r(tau):
            shift = k * tau * math.exp(-r * tau)
            if contract.style == EUROPEAN and contract.right == CALL:
                return (0.0, shift)
            if contract.style == EUROPEAN and contract.right == PUT:
                return (-shift, 0.0)
            return (0.0, 0.0)

        return SensitivitySpec("r", zero, constant(-1.0), constant(1.0), bc_r)
    if parameter == "sigma":
        s = market.sigma
        return SensitivitySpec("sigma", constant(s), constant(s), zero, bc_zero)
    raise ValueError(f"unknown sensitivity parameter {parameter!r}")


@dataclass(eq=False)
class SensitivityResult:
    """Transient sensitivity field u_alpha on the base grid."""

    spec: SensitivitySpec
    mesh: object
    dof_map: object
    trial: object
    times: np.ndarray
    states: np.ndarray

    def value_at(self, x: float, step: int = -1) -> float:
        return float(eval_field(self.mesh, self.dof_map, self.trial,
                                self.states[step], x, "u"))

    @property
    def at_spot(self) -> Callable[[float], float]:
        return self.value_at


def _base_derivatives_at_quad(result: PricingResult, ops: ElementOperators,
                              step: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(u, u_x, u_xx) of the base solution at the quadrature points."""
    state = result.solution.states[step]
    dof_map = result.dof_map
    mesh = result.mesh
    scale = 2.0 / mesh.h
    u_loc = element_values(dof_map, state, "u")
    u_q = u_loc @ ops.vu.T
    if dof_map.formulation == ULTRAWEAK:
        g_loc = element_values(dof_map, state, "grad")
        ux_q = g_loc @ ops.vu.T
        uxx_q = (g_loc @ ops.du.T) * scale
    else:
        ux_q = (u_loc @ ops.du.T) * scale
        u_nodes = nodal_values(mesh, dof_map, state)
        uxx_nodes = _second_difference(u_nodes, mesh.h)
        t = (ops.quad.points + 1.0) / 2.0
        uxx_q = uxx_nodes[:-1, None] * (1.0 - t)[None, :] + uxx_nodes[1:, None] * t[None, :]
    return u_q, ux_q, uxx_q


def solve_sensitivity_pde(contract, market: MarketParams, spec: SensitivitySpec,
                          base: PricingResult) -> SensitivityResult:
    """March the linear sensitivity equation on the base solution's grid.

    Zero initial data (payoffs do not depend on r or sigma away from kinks),
    differentiated Dirichlet data, and a per-step source built from the base
    solution's (u, u_x, u_xx). Uses the base run's theta and step count.
    """
    if base.contract is not contract and base.contract != contract:
        raise ValueError("base result belongs to a different contract")
    mesh = base.mesh
    disc = base.disc
    theta = disc.resolved_theta(contract.style)
    dtau = base.grid.dtau
    form = black_scholes_form(market.r, market.sigma, dtau, theta,
                              disc.formulation)
    norm = black_scholes_norm(market.r, market.sigma, dtau, disc.formulation)
    ops = ElementOperators(mesh, form, norm, disc.p, disc.dp)
    dof_map = ops.dof_map
    reduced = ReducedSystem(dof_map.n_dofs, list(dof_map.boundary_value_ids()))
    stepper = ThetaStepper(ops, reduced)
    trial = lagrange_basis(disc.p, "trial")

    w = ops.quad.weights
    jac = mesh.h / 2.0
    mt = ops.vt.shape[1]

    def source_load(step: int) -> np.ndarray:
        u_q, ux_q, uxx_q = _base_derivatives_at_quad(base, ops, step)
        x_q = ops.x_q
        f_q = (np.broadcast_to(np.asarray(spec.d_diffusion(x_q), dtype=float), x_q.shape) * uxx_q
               - np.broadcast_to(np.asarray(spec.d_convection(x_q), dtype=float), x_q.shape) * ux_q
               - np.broadcast_to(np.asarray(spec.d_reaction(x_q), dtype=float), x_q.shape) * u_q)
        load_v = jac * np.einsum("eq,qi,q->ei", f_q, ops.vt, w)
        if dof_map.formulation == ULTRAWEAK:
            out = np.zeros((mesh.n_elements, 2 * mt))
            out[:, :mt] = load_v
            return out
        return load_v

    n_steps = base.solution.n_steps
    states = np.zeros((n_steps + 1, dof_map.n_dofs))
    state = states[0].copy()
    for n in range(n_steps):
        # theta-weighted source: dt*(theta f^{n+1} + (1-theta) f^n)
        extra = dtau * (theta * source_load(n + 1) + (1.0 - theta) * source_load(n))
        bc = spec.d_boundary(base.solution.times[n + 1])
        state = stepper.step(state, bc, extra_l=extra)
        states[n + 1] = state
    return SensitivityResult(spec, mesh, dof_map, trial,
                             base.solution.times.copy(), states)
