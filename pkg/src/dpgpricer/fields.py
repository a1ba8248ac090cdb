"""State-vector initialisation and evaluation of the discrete fields.

A full DOF vector holds, depending on the formulation, the field values,
the gradient field (ultraweak), skeleton traces and skeleton fluxes. The
helpers here project payoffs onto that layout, evaluate the trial-basis
interpolant (and its derivative) anywhere in the domain, and sample nodal
values for reporting and error norms.
"""
from __future__ import annotations

import numpy as np

from .assembly import DofMap
from .forms import PRIMAL, ULTRAWEAK, FormSpec
from .meshing import BasisSet, Mesh1D, eval_basis

__all__ = ["initial_state", "eval_field", "nodal_values", "element_values"]


def _node_derivative_matrix(basis: BasisSet) -> np.ndarray:
    """D[i, j] = dphi_j/dxi at the basis' own node i."""
    _, derivs = eval_basis(basis, basis.nodes)
    return derivs


def initial_state(mesh: Mesh1D, dof_map: DofMap, trial: BasisSet,
                  form: FormSpec, payoff_fn) -> np.ndarray:
    """Interpolate the payoff into a full DOF vector at tau = 0.

    Field DOFs interpolate the payoff exactly at the trial nodes; the
    ultraweak gradient field is the elementwise derivative of that
    interpolant; skeleton traces take the payoff value and skeleton fluxes
    take -a(x) times the one-sided-average slope.
    """
    state = np.zeros(dof_map.n_dofs)
    p = dof_map.p
    n_el = dof_map.n_elements
    h = mesh.h
    dref = _node_derivative_matrix(trial)
    state[dof_map.field_ids] = payoff_fn(dof_map.field_x)

    # interpolant slopes at both endpoints of every element
    if dof_map.formulation == PRIMAL:
        u_loc = state[dof_map.element_cols[:, : p + 1]]
    else:
        u_loc = state[dof_map.element_cols[:, : p + 1]]
    slopes = u_loc @ dref.T * (2.0 / h)          # (n_el, p+1) d/dx at trial nodes

    if dof_map.formulation == ULTRAWEAK:
        state[dof_map.grad_ids] = slopes.ravel()
        state[dof_map.trace_ids] = payoff_fn(mesh.nodes)

    left_slope = slopes[:, 0]
    right_slope = slopes[:, -1]
    avg = np.empty(n_el + 1)
    avg[1:-1] = 0.5 * (right_slope[:-1] + left_slope[1:])
    avg[0] = left_slope[0]
    avg[-1] = right_slope[-1]
    a_nodes = np.asarray(form.diffusion(mesh.nodes), dtype=float)
    a_nodes = np.broadcast_to(a_nodes, mesh.nodes.shape)
    state[dof_map.flux_ids] = -a_nodes * avg
    return state


def element_values(dof_map: DofMap, state: np.ndarray, component: str = "u") -> np.ndarray:
    """Local coefficient table (n_el, p+1) of the requested field."""
    p = dof_map.p
    if component == "u":
        return state[dof_map.element_cols[:, : p + 1]]
    if component != "grad":
        raise ValueError(f"unknown component {component!r}")
    if dof_map.formulation != ULTRAWEAK:
        raise ValueError("gradient field only exists for the ultraweak formulation")
    return state[dof_map.element_cols[:, p + 1: 2 * (p + 1)]]


def eval_field(mesh: Mesh1D, dof_map: DofMap, trial: BasisSet, state: np.ndarray,
               x, component: str = "u", deriv: int = 0):
    """Trial-basis interpolant (or its x-derivative) at point(s) x.

    For the primal formulation ``component='grad'`` returns the derivative of
    the field interpolant; for ultraweak it evaluates the gradient unknown.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    loc_u = element_values(dof_map, state, "u")
    use_grad_field = component == "grad" and dof_map.formulation == ULTRAWEAK
    if use_grad_field:
        loc = element_values(dof_map, state, "grad")
        extra_deriv = deriv
    elif component == "grad":
        loc = loc_u
        extra_deriv = deriv + 1
    elif component == "u":
        loc = loc_u
        extra_deriv = deriv
    else:
        raise ValueError(f"unknown component {component!r}")
    out = np.empty_like(xs)
    for i, xi in enumerate(xs):
        e = mesh.element_of(float(xi))
        ref = mesh.to_reference(float(xi), e)
        vals, ders = eval_basis(trial, ref)
        if extra_deriv == 0:
            out[i] = vals @ loc[e]
        elif extra_deriv == 1:
            out[i] = (ders @ loc[e]) * (2.0 / mesh.h)
        else:
            raise ValueError("only first derivatives are available")
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(out[0])
    return out


def nodal_values(mesh: Mesh1D, dof_map: DofMap, state: np.ndarray,
                 component: str = "u") -> np.ndarray:
    """Field samples at the mesh nodes (one-sided values averaged for ultraweak)."""
    p = dof_map.p
    loc = element_values(dof_map, state, component)
    if dof_map.formulation == PRIMAL and component == "u":
        return state[dof_map.field_ids[::p]] if p > 0 else state[dof_map.field_ids]
    if dof_map.formulation == PRIMAL:
        raise ValueError("primal nodal gradients are not single-valued; use eval_field")
    left = loc[:, 0]
    right = loc[:, -1]
    vals = np.empty(mesh.n_elements + 1)
    vals[1:-1] = 0.5 * (right[:-1] + left[1:])
    vals[0] = left[0]
    vals[-1] = right[-1]
    return vals
