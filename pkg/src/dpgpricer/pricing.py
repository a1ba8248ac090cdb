"""Pricing drivers: European, American (LCP / projection), Asian and barrier.

Each driver builds the mesh and broken forms for its contract, marches the
condensed system through time-to-maturity and interpolates the price at the
spot from the trial basis. American steps solve a per-step complementarity
problem (projected SOR) or apply the post-solve payoff projection; the
discretely monitored double barrier marches a chain of sub-problems, applying
the knockout mask at every monitoring instant.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import assembly as asm
from .assembly import ElementOperators, ReducedSystem, build_dof_map
from .contracts import (AMERICAN, ASIAN, BARRIER, CALL, EUROPEAN, PUT,
                        ASIAN_DOMAIN, LOG_DOMAIN, Contract, MarketParams,
                        StateTransform, asian_price_from_solution,
                        asian_transform, barrier_mask, boundary_values,
                        log_price_transform, payoff_values)
from .fields import eval_field, initial_state, nodal_values
from .forms import (PRIMAL, ULTRAWEAK, asian_form, asian_norm,
                    black_scholes_form, black_scholes_norm)
from .lcp import (DEFAULT_MAX_ITER, DEFAULT_OMEGA, DEFAULT_TOL,
                  LcpStepProblem, solve_lcp)
from .meshing import Mesh1D, build_uniform_mesh, lagrange_basis
from .stepping import ThetaStepper, TimeGrid, TransientSolution

__all__ = [
    "Discretization",
    "PricingResult",
    "FreeBoundary",
    "price_european",
    "price_american",
    "price_asian",
    "price_barrier",
    "extract_exercise_boundary",
    "snapped_barrier_mesh",
]

CONTACT_TOL_FACTOR = 1e-7


@dataclass(frozen=True)
class Discretization:
    """Spatial/temporal resolution of one pricing run."""

    formulation: str = PRIMAL
    p: int = 1
    dp: int = 2
    n_elements: int = 100
    n_steps: int = 100
    theta: Optional[float] = None    # None = per-style default

    def resolved_theta(self, style: str) -> float:
        if self.theta is not None:
            return self.theta
        return 0.5 if style == EUROPEAN else 1.0


@dataclass(eq=False)
class PricingResult:
    """Grid solution of one pricing run plus the interpolated price at S0."""

    contract: Contract
    market: MarketParams
    transform: StateTransform
    disc: Discretization
    mesh: Mesh1D
    dof_map: object
    grid: TimeGrid
    solution: TransientSolution
    price: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def trial(self):
        return lagrange_basis(self.disc.p, "trial")

    def value_at(self, x: float, step: int = -1) -> float:
        return float(eval_field(self.mesh, self.dof_map, self.trial,
                                self.solution.states[step], x, "u"))

    def grad_at(self, x: float, step: int = -1, deriv: int = 0) -> float:
        return float(eval_field(self.mesh, self.dof_map, self.trial,
                                self.solution.states[step], x, "grad", deriv))

    def nodal(self, step: int = -1, component: str = "u") -> np.ndarray:
        return nodal_values(self.mesh, self.dof_map, self.solution.states[step],
                            component)

    def value_at_price(self, s: float, step: int = -1) -> float:
        return self.value_at(math.log(s), step)


@dataclass(eq=False)
class FreeBoundary:
    """Early-exercise boundary S_f(tau) and exercise-region classification."""

    taus: np.ndarray
    s_f: np.ndarray
    exercise_mask: np.ndarray      # (n_steps+1, n_nodes) True where u == payoff
    tol_contact: float


# ---------------------------------------------------------------------------
# shared machinery
# ---------------------------------------------------------------------------

def _build_engine(contract: Contract, market: MarketParams, disc: Discretization,
                  mesh: Mesh1D, dtau: float, theta: float):
    if contract.style == ASIAN:
        form = asian_form(market.r, market.sigma, market.T, dtau, theta,
                          disc.formulation)
        norm = asian_norm(market.r, market.sigma, market.T, dtau, disc.formulation)
    else:
        form = black_scholes_form(market.r, market.sigma, dtau, theta,
                                  disc.formulation)
        norm = black_scholes_norm(market.r, market.sigma, dtau, disc.formulation)
    return ElementOperators(mesh, form, norm, disc.p, disc.dp), form


def _march(contract, market, transform, disc, mesh, grid, obstacle_mode=None,
           compute_indicator=True):
    """Time march over a uniform grid; returns (solution, dof_map)."""
    theta = disc.resolved_theta(contract.style)
    ops, form = _build_engine(contract, market, disc, mesh, grid.dtau, theta)
    dof_map = ops.dof_map
    left_id, right_id = dof_map.boundary_value_ids()
    reduced = ReducedSystem(dof_map.n_dofs, [left_id, right_id])
    stepper = ThetaStepper(ops, reduced)
    trial = lagrange_basis(disc.p, "trial")

    psi_points = payoff_values(contract, dof_map.point_x)

    state = initial_state(mesh, dof_map, trial, form, lambda xs: payoff_values(contract, xs))
    states = np.empty((grid.n_steps + 1, dof_map.n_dofs))
    states[0] = state
    etas = np.zeros(grid.n_steps + 1)

    for n in range(grid.n_steps):
        tau = grid.times[n + 1]
        bc = boundary_values(contract, market, transform, tau)
        state = stepper.step(state, bc)
        if obstacle_mode == "projection":
            state[dof_map.point_ids] = np.maximum(state[dof_map.point_ids],
                                                  psi_points)
        if compute_indicator:
            etas[n + 1] = stepper.indicator(states[n], state)
        states[n + 1] = state

    solution = TransientSolution(grid.times.copy(), states,
                                 eta=etas if compute_indicator else None)
    return solution, dof_map


def _galerkin_lcp_march(contract, market, disc, mesh, grid,
                        omega, lcp_tol, max_iter):
    """Backward-Euler/theta LCP march on the convection-free Galerkin system.

    The log-price equation is symmetrised exactly by u = e^{gamma x} w with
    gamma = b/(2a), leaving w_tau - a w'' + c~ w = 0 (c~ = c + b^2/(4a) >= 0),
    whose conforming Galerkin step matrix M + dt*theta*(a K + c~ M) is SPD.
    Each step solves z >= psi_w, A z - b >= 0, complementarity by projected
    SOR. Obstacle and data transform by the positive factor e^{-gamma x}, so
    the complementarity structure is preserved node by node. States are
    returned in the primal DOF layout (flux slots zero).
    """
    import scipy.sparse as sp

    theta = disc.resolved_theta(contract.style)
    a = 0.5 * market.sigma ** 2
    b = -(market.r - a)
    c = market.r
    gamma = b / (2.0 * a)
    c_tilde = c + b * b / (4.0 * a)

    dof_map = build_dof_map(mesh, disc.p, PRIMAL)
    xs = dof_map.field_x
    n_field = len(xs)
    weight = np.exp(-gamma * xs)          # u -> w scaling at the nodes

    # conforming mass/stiffness on the trial space
    from .meshing import gauss_rule, eval_basis
    trial = lagrange_basis(disc.p, "trial")
    quad = gauss_rule(disc.p + 2)
    vu, du = eval_basis(trial, quad.points)
    h = mesh.h
    m_loc = (h / 2.0) * np.einsum("qi,qj,q->ij", vu, vu, quad.weights)
    k_loc = (2.0 / h) * np.einsum("qi,qj,q->ij", du, du, quad.weights)
    a_loc = m_loc * (1.0 + grid.dtau * theta * c_tilde) + grid.dtau * theta * a * k_loc
    l_loc = m_loc * (1.0 - grid.dtau * (1.0 - theta) * c_tilde) \
        - grid.dtau * (1.0 - theta) * a * k_loc
    cols = dof_map.element_cols[:, : disc.p + 1]
    rows = np.repeat(cols, disc.p + 1, axis=1).ravel()
    cls = np.tile(cols, (1, disc.p + 1)).ravel()
    a_mat = sp.coo_matrix(
        (np.tile(a_loc.ravel(), mesh.n_elements), (rows, cls)),
        shape=(n_field, n_field)).tocsr()
    l_mat = sp.coo_matrix(
        (np.tile(l_loc.ravel(), mesh.n_elements), (rows, cls)),
        shape=(n_field, n_field)).tocsr()

    psi_u = payoff_values(contract, xs)
    psi_w = weight * psi_u
    free = np.ones(n_field, dtype=bool)
    free[0] = free[-1] = False
    a_red = a_mat[free][:, free].tocsr()
    a_bnd = a_mat[free][:, ~free].toarray()
    constrained = np.ones(free.sum(), dtype=bool)

    w = weight * psi_u                     # payoff start
    states = np.empty((grid.n_steps + 1, dof_map.n_dofs))
    states[:] = 0.0
    states[0, dof_map.field_ids] = psi_u
    iters = np.zeros(grid.n_steps + 1, dtype=int)
    resid = np.zeros(grid.n_steps + 1)
    bc_w = np.array([psi_w[0], 0.0])       # exercise value left, 0 right
    for n in range(grid.n_steps):
        rhs = l_mat @ w
        b_red = rhs[free] - a_bnd @ bc_w
        problem = LcpStepProblem(a_red, b_red, psi_w[free], constrained)
        z, it, rs = solve_lcp(problem, w[free], omega=omega, tol=lcp_tol,
                              max_iter=max_iter)
        asm._count_solve()
        w = _scatter_bc(w, z, free, bc_w)
        iters[n + 1] = it
        resid[n + 1] = rs
        states[n + 1, dof_map.field_ids] = w / weight
    solution = TransientSolution(grid.times.copy(), states,
                                 lcp_iterations=iters, lcp_residuals=resid)
    return solution, dof_map


def _scatter_bc(w, z, free, bc_w):
    out = np.empty_like(w)
    out[free] = z
    out[~free] = bc_w
    return out


# ---------------------------------------------------------------------------
# European
# ---------------------------------------------------------------------------

def price_european(contract: Contract, market: MarketParams,
                   disc: Discretization = Discretization(),
                   compute_indicator: bool = True) -> PricingResult:
    """Price a European call/put by theta-stepping the log-price problem.

    The price is the trial-basis interpolant at x = ln S0 of the final
    (tau = T) slice.
    """
    if contract.style != EUROPEAN:
        raise ValueError("price_european requires a European contract")
    transform = log_price_transform()
    x0 = math.log(market.S0)
    if not transform.domain[0] < x0 < transform.domain[1]:
        raise ValueError("spot outside the truncated domain")
    t0 = time.perf_counter()
    calls0 = asm.solve_calls()
    mesh = build_uniform_mesh(*transform.domain, disc.n_elements)
    grid = TimeGrid.build(market.T, disc.n_steps)
    solution, dof_map = _march(contract, market, transform, disc, mesh, grid,
                               compute_indicator=compute_indicator)
    result = PricingResult(contract, market, transform, disc, mesh, dof_map,
                           grid, solution, 0.0,
                           f"dpg-{disc.formulation}")
    result.price = result.value_at(x0)
    result.diagnostics = {
        "wall_time": time.perf_counter() - t0,
        "solve_calls": asm.solve_calls() - calls0,
        "eta_final": float(solution.eta[-1]) if solution.eta is not None else None,
    }
    return result


# ---------------------------------------------------------------------------
# American
# ---------------------------------------------------------------------------

def price_american(contract: Contract, market: MarketParams,
                   disc: Discretization = Discretization(),
                   mode: str = "lcp",
                   omega: float = DEFAULT_OMEGA,
                   lcp_tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER,
                   compute_indicator: bool = False) -> tuple[PricingResult, FreeBoundary]:
    """Price an American put and extract its early-exercise boundary.

    mode='free_boundary_projection' marches the DPG system and applies the
    pointwise maximum with the payoff after every solve. mode='lcp' solves a
    genuine complementarity problem per step by projected SOR; the SPD step
    matrix comes from the exactly symmetrised (convection-eliminated)
    conforming Galerkin system on the same mesh, because inequality rows of
    the condensed near-optimal system are built from sign-unconstrained
    optimal test functions and do not discretise the variational inequality
    consistently. The value dominates the payoff everywhere in both modes.
    """
    if contract.style != AMERICAN or contract.right != PUT:
        raise ValueError("price_american covers American puts")
    if mode not in ("lcp", "free_boundary_projection"):
        raise ValueError(f"unknown mode {mode!r}")
    transform = log_price_transform()
    x0 = math.log(market.S0)
    t0 = time.perf_counter()
    calls0 = asm.solve_calls()
    mesh = build_uniform_mesh(*transform.domain, disc.n_elements)
    grid = TimeGrid.build(market.T, disc.n_steps)
    if mode == "lcp":
        solution, dof_map = _galerkin_lcp_march(
            contract, market, disc, mesh, grid,
            omega=omega, lcp_tol=lcp_tol, max_iter=max_iter)
    else:
        solution, dof_map = _march(
            contract, market, transform, disc, mesh, grid,
            obstacle_mode="projection", compute_indicator=compute_indicator)
    result = PricingResult(contract, market, transform, disc, mesh, dof_map,
                           grid, solution, 0.0, f"dpg-{disc.formulation}-{mode}"
                           if mode != "lcp" else "sym-galerkin-lcp")
    result.price = result.value_at(x0)
    result.diagnostics = {
        "wall_time": time.perf_counter() - t0,
        "solve_calls": asm.solve_calls() - calls0,
        "max_lcp_iterations": int(solution.lcp_iterations.max()) if mode == "lcp" else 0,
        "max_lcp_residual": float(solution.lcp_residuals.max()) if mode == "lcp" else 0.0,
    }
    boundary = extract_exercise_boundary(result)
    return result, boundary


def extract_exercise_boundary(result: PricingResult,
                              payoff_fn=None) -> FreeBoundary:
    """Exercise boundary from the contact set, one value per time step.

    The put's exercise region is the contiguous run of nodes from the left
    boundary on which |u - payoff| <= tol; S_f(tau) = exp(x*) with x* the
    last node of that run. (The payoff is also zero far to the right where
    the value decays to zero, so isolated far-field touches must not count.)
    tau = 0, where u equals the payoff everywhere, reports S_f = K, the known
    limit of the boundary at maturity.
    """
    contract = result.contract
    if contract.style != AMERICAN:
        raise ValueError("exercise boundary requires an American result")
    tol = CONTACT_TOL_FACTOR * max(1.0, contract.K)
    xs = result.mesh.nodes
    psi = payoff_values(contract, xs) if payoff_fn is None else payoff_fn(xs)
    n_steps = result.solution.n_steps
    taus = result.solution.times
    s_f = np.empty(n_steps + 1)
    mask = np.zeros((n_steps + 1, len(xs)), dtype=bool)
    s_f[0] = contract.K
    mask[0] = True
    for n in range(1, n_steps + 1):
        u = result.nodal(step=n)
        contact = np.abs(u - psi) <= tol
        if not contact[0]:
            raise RuntimeError(
                f"no contact set at step {n}; contact tolerance too tight")
        run_end = int(np.argmin(contact)) - 1 if not contact.all() else len(xs) - 1
        mask[n, :run_end + 1] = True
        s_f[n] = math.exp(xs[run_end])
    return FreeBoundary(taus.copy(), s_f, mask, tol)


# ---------------------------------------------------------------------------
# Asian (reduced one-dimensional problem)
# ---------------------------------------------------------------------------

def price_asian(contract: Contract, market: MarketParams,
                disc: Discretization = Discretization(),
                compute_indicator: bool = False) -> PricingResult:
    """Fixed-strike Asian call via the reduced convection-dominated PDE.

    Solved on [-2, 2] with Dirichlet 0 at x = 2 and a zero-curvature
    (second-difference extrapolation) condition at x = -2; the price is
    S0 * U(tau=T, K/S0).
    """
    if contract.style != ASIAN or contract.right != CALL:
        raise ValueError("price_asian covers fixed-strike Asian calls")
    transform = asian_transform()
    x_star = contract.K / market.S0
    lo, hi = transform.domain
    if not lo < x_star < hi:
        raise ValueError(f"evaluation point K/S0 = {x_star} outside ({lo}, {hi})")
    t0 = time.perf_counter()
    calls0 = asm.solve_calls()
    mesh = build_uniform_mesh(lo, hi, disc.n_elements)
    grid = TimeGrid.build(market.T, disc.n_steps)
    theta = disc.resolved_theta(contract.style)
    ops, form = _build_engine(contract, market, disc, mesh, grid.dtau, theta)
    dof_map = ops.dof_map
    trial = lagrange_basis(disc.p, "trial")

    _, right_id = dof_map.boundary_value_ids()
    edge = dof_map.left_edge_value_ids(3)
    linear = [(int(edge[0]), [(int(edge[1]), 2.0), (int(edge[2]), -1.0)])]
    reduced = ReducedSystem(dof_map.n_dofs, [right_id], linear)
    stepper = ThetaStepper(ops, reduced)

    state = initial_state(mesh, dof_map, trial, form,
                          lambda xs: payoff_values(contract, xs))
    states = np.empty((grid.n_steps + 1, dof_map.n_dofs))
    states[0] = state
    etas = np.zeros(grid.n_steps + 1)
    for n in range(grid.n_steps):
        prev = state
        state = stepper.step(state, [0.0])
        if compute_indicator:
            etas[n + 1] = stepper.indicator(prev, state)
        states[n + 1] = state
    solution = TransientSolution(grid.times.copy(), states,
                                 eta=etas if compute_indicator else None)
    result = PricingResult(contract, market, transform, disc, mesh, dof_map,
                           grid, solution, 0.0, f"dpg-{disc.formulation}")
    result.price = asian_price_from_solution(contract.K, market.S0, result.value_at)
    result.diagnostics = {
        "wall_time": time.perf_counter() - t0,
        "solve_calls": asm.solve_calls() - calls0,
        "x_star": x_star,
    }
    return result


# ---------------------------------------------------------------------------
# Discretely monitored double barrier
# ---------------------------------------------------------------------------

def snapped_barrier_mesh(contract: Contract, n_elements: int,
                         domain: tuple[float, float] = LOG_DOMAIN) -> Mesh1D:
    """Uniform mesh with nodes exactly on ln S_L and ln S_U.

    The element width is (ln S_U - ln S_L)/m with m the rounded number of
    cells fitting the barrier window at the requested resolution; whole
    elements are added outward so the domain covers the target interval.
    """
    lo, hi = contract.barriers
    x_l, x_u = math.log(lo), math.log(hi)
    h_target = (domain[1] - domain[0]) / n_elements
    m = max(1, round((x_u - x_l) / h_target))
    h = (x_u - x_l) / m
    n_left = max(1, math.ceil((x_l - domain[0]) / h - 1e-12))
    n_right = max(1, math.ceil((domain[1] - x_u) / h - 1e-12))
    return build_uniform_mesh(x_l - n_left * h, x_u + n_right * h,
                              n_left + m + n_right)


def _barrier_segments(monitoring, T: float, dtau_target: float):
    """Sub-intervals of [0, T] in tau whose interior endpoints are mask instants."""
    mask_taus = sorted({T - t for t in monitoring if t < T - 1e-12})
    bounds = [0.0] + [t for t in mask_taus if t > 1e-12] + [T]
    segs = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        n = max(1, math.ceil((b - a) / dtau_target - 1e-9))
        segs.append((a, b, n))
    return segs


def price_barrier(contract: Contract, market: MarketParams,
                  disc: Discretization = Discretization(),
                  compute_indicator: bool = False) -> PricingResult:
    """Discretely monitored double knockout barrier option.

    Marches the chain of sub-problems between monitoring dates; at every
    monitoring instant the value is zeroed outside [S_L, S_U] (the terminal
    payoff is masked when maturity itself is monitored). A spot outside the
    barrier window reports price 0 without solving.
    """
    if contract.style != BARRIER:
        raise ValueError("price_barrier requires a DoubleBarrier contract")
    transform = log_price_transform()
    monitoring = contract.monitoring or ()
    lo, hi = contract.barriers
    t0 = time.perf_counter()
    calls0 = asm.solve_calls()
    if monitoring and not lo <= market.S0 <= hi:
        mesh = build_uniform_mesh(*transform.domain, disc.n_elements)
        grid = TimeGrid.build(market.T, disc.n_steps)
        empty = TransientSolution(np.array([0.0]), np.zeros((1, 1)))
        result = PricingResult(contract, market, transform, disc, mesh,
                               build_dof_map(mesh, disc.p, disc.formulation),
                               grid, empty, 0.0, f"dpg-{disc.formulation}")
        result.diagnostics = {"knocked_out": True,
                              "wall_time": time.perf_counter() - t0}
        return result

    theta = disc.resolved_theta(contract.style)
    dtau_target = market.T / disc.n_steps
    if monitoring:
        mesh = snapped_barrier_mesh(contract, disc.n_elements, transform.domain)
        segments = _barrier_segments(monitoring, market.T, dtau_target)
    else:
        mesh = build_uniform_mesh(*transform.domain, disc.n_elements)
        segments = [(0.0, market.T, disc.n_steps)]
    trial = lagrange_basis(disc.p, "trial")
    dof_map = build_dof_map(mesh, disc.p, disc.formulation)

    steppers: dict[float, ThetaStepper] = {}

    def stepper_for(dtau: float) -> ThetaStepper:
        key = round(dtau, 14)
        if key not in steppers:
            ops, _ = _build_engine(contract, market, disc, mesh, dtau, theta)
            left_id, right_id = ops.dof_map.boundary_value_ids()
            steppers[key] = ThetaStepper(
                ops, ReducedSystem(ops.dof_map.n_dofs, [left_id, right_id]))
        return steppers[key]

    form = black_scholes_form(market.r, market.sigma, dtau_target, theta,
                              disc.formulation)
    state = initial_state(mesh, dof_map, trial, form,
                          lambda xs: payoff_values(contract, xs))
    point_x = dof_map.point_x

    n_total = sum(n for _, _, n in segments)
    states = np.empty((n_total + 1, dof_map.n_dofs))
    times = np.empty(n_total + 1)
    states[0] = state
    times[0] = 0.0
    etas = np.zeros(n_total + 1)
    k = 0
    for a, b, n in segments:
        dtau = (b - a) / n
        stepper = stepper_for(dtau)
        for j in range(n):
            prev = state
            state = stepper.step(state, (0.0, 0.0))
            if compute_indicator:
                etas[k + 1] = stepper.indicator(prev, state)
            k += 1
            states[k] = state
            times[k] = a + (j + 1) * dtau
        if b < market.T - 1e-12:
            state = state.copy()
            state[dof_map.point_ids] = barrier_mask(
                contract, point_x, state[dof_map.point_ids])
            states[k] = state

    solution = TransientSolution(times, states,
                                 eta=etas if compute_indicator else None)
    grid = TimeGrid.build(market.T, max(n_total, 1))
    result = PricingResult(contract, market, transform, disc, mesh, dof_map,
                           grid, solution, 0.0, f"dpg-{disc.formulation}")
    result.price = result.value_at(math.log(market.S0))
    result.diagnostics = {
        "knocked_out": False,
        "wall_time": time.perf_counter() - t0,
        "solve_calls": asm.solve_calls() - calls0,
        "n_segments": len(segments),
        "n_steps_total": n_total,
    }
    return result
