"""Element-local assembly, trial-to-test condensation and global solves.

For each element the enriched-test Gram matrix G and the rectangular form
matrix B (columns ordered field | trace | flux) are integrated with Gauss
quadrature, then condensed to the near-optimal normal equations

    A_e = B^T G^{-1} B,   b_e = B^T G^{-1} l,

which scatter-add into a sparse symmetric positive definite global system.
G is inverted only through its Cholesky factor; failure to factor signals a
coefficient or quadrature bug. The Riesz representation of the residual gives
the built-in error indicator, and an independent mixed (saddle-point) solve of
the same equations is provided as a verification oracle.

Everything is vectorised over elements; the per-element public helpers wrap
the same kernels with a batch of one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import PRIMAL, ULTRAWEAK, FormSpec, NormSpec
from .meshing import BasisSet, Mesh1D, QuadratureRule, eval_basis, gauss_rule, lagrange_basis

__all__ = [
    "DofMap",
    "ElementSystem",
    "GlobalSystem",
    "ReducedSystem",
    "ElementOperators",
    "build_dof_map",
    "assemble_gram",
    "assemble_element_forms",
    "condense_element",
    "solve_dpg_system",
    "error_indicator",
    "solve_mixed_reference",
    "solve_calls",
]

# Counts every linear-system solve (direct or iterative) issued by the
# package; post-processing steps are expected to leave it untouched.
_SOLVE_CALLS = 0


def _count_solve(n: int = 1) -> None:
    global _SOLVE_CALLS
    _SOLVE_CALLS += n


def solve_calls() -> int:
    return _SOLVE_CALLS


# ---------------------------------------------------------------------------
# DOF layout
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering of trial unknowns.

    Primal: conforming field nodes shared across interfaces plus one flux
    unknown per skeleton node. Ultraweak: discontinuous per-element field
    pairs (u, u_x) plus one u-trace and one flux unknown per skeleton node.
    ``point_ids``/``point_x`` collect every unknown that carries a point value
    of u (used for payoff projection, knockout masks and obstacles).
    """

    formulation: str
    n_elements: int
    p: int
    n_dofs: int
    element_cols: np.ndarray          # (n_el, n_cols) global ids
    field_ids: np.ndarray             # u point-value dofs, grouped per element for ultraweak
    field_x: np.ndarray
    grad_ids: np.ndarray              # ultraweak u_x dofs (empty for primal)
    trace_ids: np.ndarray             # ultraweak u-trace dofs on the skeleton (empty for primal)
    trace_x: np.ndarray
    flux_ids: np.ndarray              # skeleton flux dofs (both formulations)

    @property
    def point_ids(self) -> np.ndarray:
        if self.formulation == PRIMAL:
            return self.field_ids
        return np.concatenate([self.field_ids, self.trace_ids])

    @property
    def point_x(self) -> np.ndarray:
        if self.formulation == PRIMAL:
            return self.field_x
        return np.concatenate([self.field_x, self.trace_x])

    def boundary_value_ids(self) -> tuple[int, int]:
        """DOFs holding u at x_min / x_max (Dirichlet targets)."""
        if self.formulation == PRIMAL:
            return int(self.field_ids[0]), int(self.field_ids[-1])
        return int(self.trace_ids[0]), int(self.trace_ids[-1])

    def left_edge_value_ids(self, n: int) -> np.ndarray:
        """The n leftmost u-valued skeleton/node DOFs (extrapolation constraints)."""
        if self.formulation == PRIMAL:
            return self.field_ids[:n]
        return self.trace_ids[:n]


def build_dof_map(mesh: Mesh1D, p: int, formulation: str) -> DofMap:
    n_el = mesh.n_elements
    if formulation == PRIMAL:
        n_field = n_el * p + 1
        field_ids = np.arange(n_field)
        field_x = np.linspace(mesh.x_min, mesh.x_max, n_field)
        flux_ids = n_field + np.arange(n_el + 1)
        cols = np.empty((n_el, p + 1 + 2), dtype=np.int64)
        for e in range(n_el):
            cols[e, : p + 1] = e * p + np.arange(p + 1)
            cols[e, p + 1] = flux_ids[e]
            cols[e, p + 2] = flux_ids[e + 1]
        return DofMap(PRIMAL, n_el, p, n_field + n_el + 1, cols,
                      field_ids, field_x,
                      np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
                      np.empty(0), flux_ids)
    if formulation != ULTRAWEAK:
        raise ValueError(f"unknown formulation {formulation!r}")
    nloc = p + 1
    n_u = n_el * nloc
    u_ids = np.arange(n_u)
    g_ids = n_u + np.arange(n_u)
    trace_ids = 2 * n_u + np.arange(n_el + 1)
    flux_ids = 2 * n_u + (n_el + 1) + np.arange(n_el + 1)
    ref = np.linspace(-1.0, 1.0, nloc) if p > 0 else np.array([0.0])
    field_x = np.concatenate([
        mesh.nodes[e] + (ref + 1.0) * mesh.h / 2.0 for e in range(n_el)
    ])
    cols = np.empty((n_el, 2 * nloc + 4), dtype=np.int64)
    for e in range(n_el):
        cols[e, :nloc] = u_ids[e * nloc:(e + 1) * nloc]
        cols[e, nloc:2 * nloc] = g_ids[e * nloc:(e + 1) * nloc]
        cols[e, 2 * nloc] = trace_ids[e]
        cols[e, 2 * nloc + 1] = trace_ids[e + 1]
        cols[e, 2 * nloc + 2] = flux_ids[e]
        cols[e, 2 * nloc + 3] = flux_ids[e + 1]
    return DofMap(ULTRAWEAK, n_el, p, 2 * n_u + 2 * (n_el + 1), cols,
                  u_ids, field_x, g_ids, trace_ids, mesh.nodes.copy(), flux_ids)


# ---------------------------------------------------------------------------
# Batched element kernels
# ---------------------------------------------------------------------------

def _coef(fn, x: np.ndarray) -> np.ndarray:
    out = np.asarray(fn(x), dtype=float)
    return np.broadcast_to(out, x.shape)


def _gram_kernel(norm: NormSpec, x_q: np.ndarray, h: float,
                 vt: np.ndarray, dt: np.ndarray, w: np.ndarray) -> np.ndarray:
    """G_e for a batch of elements; rows/cols span the enriched test space."""
    n_el, nq = x_q.shape
    mt = vt.shape[1]
    two = norm.formulation == ULTRAWEAK
    m_dim = 2 * mt if two else mt
    scale = 2.0 / h
    g = np.zeros((n_el, m_dim, m_dim))
    for term in norm.terms:
        e_vals = np.zeros((n_el, nq, m_dim))
        if term.cv is not None:
            e_vals[:, :, :mt] += _coef(term.cv, x_q)[:, :, None] * vt[None, :, :]
        if term.cdv is not None:
            e_vals[:, :, :mt] += _coef(term.cdv, x_q)[:, :, None] * dt[None, :, :] * scale
        if term.cw is not None:
            if not two:
                raise ValueError("scalar test space cannot carry omega terms")
            e_vals[:, :, mt:] += _coef(term.cw, x_q)[:, :, None] * vt[None, :, :]
        if term.cdw is not None:
            if not two:
                raise ValueError("scalar test space cannot carry omega terms")
            e_vals[:, :, mt:] += _coef(term.cdw, x_q)[:, :, None] * dt[None, :, :] * scale
        g += term.weight * np.einsum("eqi,eqj,q->eij", e_vals, e_vals, w) * (h / 2.0)
    return g


def _spatial_kernel(form: FormSpec, x_q: np.ndarray, h: float,
                    vu: np.ndarray, du: np.ndarray,
                    vt: np.ndarray, dt: np.ndarray, w: np.ndarray,
                    t_left: np.ndarray, t_right: np.ndarray) -> np.ndarray:
    """Spatial part K_e of the step form (the dt*theta bracket, unscaled).

    Columns: primal [field | flux_L flux_R]; ultraweak
    [u | u_x | trace_L trace_R | flux_L flux_R]. Flux columns carry the test
    values with outward-normal sign (-1 left, +1 right); ultraweak trace
    columns pair with omega, flux columns with v.
    """
    n_el, nq = x_q.shape
    nu = vu.shape[1]
    mt = vt.shape[1]
    scale = 2.0 / h
    jac = h / 2.0
    a_q = _coef(form.diffusion, x_q)
    conv_q = _coef(form.diffusion_dx, x_q) + _coef(form.convection, x_q)
    c_q = _coef(form.reaction, x_q)
    if form.formulation == PRIMAL:
        k = np.zeros((n_el, mt, nu + 2))
        k[:, :, :nu] = jac * (
            np.einsum("eq,qj,qi,q->eij", a_q, du * scale, dt * scale, w)
            + np.einsum("eq,qj,qi,q->eij", conv_q, du * scale, vt, w)
            + np.einsum("eq,qj,qi,q->eij", c_q, vu, vt, w)
        )
        k[:, :, nu] = -t_left[None, :]
        k[:, :, nu + 1] = t_right[None, :]
        return k
    # ultraweak: rows [v-block | omega-block]
    k = np.zeros((n_el, 2 * mt, 2 * nu + 4))
    k[:, :mt, :nu] = jac * np.einsum("eq,qj,qi,q->eij", c_q, vu, vt, w)
    k[:, :mt, nu:2 * nu] = jac * (
        np.einsum("eq,qj,qi,q->eij", a_q, vu, dt * scale, w)
        + np.einsum("eq,qj,qi,q->eij", conv_q, vu, vt, w)
    )
    k[:, :mt, 2 * nu + 2] = -t_left[None, :]
    k[:, :mt, 2 * nu + 3] = t_right[None, :]
    k[:, mt:, :nu] = jac * np.einsum("qj,qi,q->ij", vu, dt * scale, w)[None, :, :]
    k[:, mt:, nu:2 * nu] = jac * np.einsum("qj,qi,q->ij", vu, vt, w)[None, :, :]
    k[:, mt:, 2 * nu] = t_left[None, :]
    k[:, mt:, 2 * nu + 1] = -t_right[None, :]
    return k


def _mass_kernel(form: FormSpec, x_q: np.ndarray, h: float,
                 vu: np.ndarray, vt: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(u, v) pairing against the enriched test space; field columns only."""
    n_el, nq = x_q.shape
    nu = vu.shape[1]
    mt = vt.shape[1]
    pair = (h / 2.0) * np.einsum("qj,qi,q->ij", vu, vt, w)
    if form.formulation == PRIMAL:
        m = np.zeros((n_el, mt, nu + 2))
        m[:, :, :nu] = pair[None, :, :]
        return m
    m = np.zeros((n_el, 2 * mt, 2 * nu + 4))
    m[:, :mt, :nu] = pair[None, :, :]
    return m


# ---------------------------------------------------------------------------
# Element systems and condensation
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ElementSystem:
    """Per-element Gram/form/load triplet with its condensed pair."""

    G: np.ndarray
    B: np.ndarray
    l: np.ndarray
    cols: np.ndarray
    A: np.ndarray = field(default=None)
    b: np.ndarray = field(default=None)


def condense_element(G: np.ndarray, B: np.ndarray, l: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(A, b) = (B^T G^{-1} B, B^T G^{-1} l) through a Cholesky solve of G."""
    try:
        chol = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "Gram matrix is not SPD; check norm coefficients/quadrature") from exc
    y = np.linalg.solve(chol, np.column_stack([B, l]))
    z = np.linalg.solve(chol.T, y)
    ginv_b, ginv_l = z[:, :-1], z[:, -1]
    a_mat = B.T @ ginv_b
    a_mat = 0.5 * (a_mat + a_mat.T)
    return a_mat, B.T @ ginv_l


class ElementOperators:
    """Batched Gram/form assembly and condensation over a whole mesh.

    Precomputes everything a time-stepper reuses across steps: the condensed
    stiffness ``A_e``, the condensed previous-state operator
    ``R_e = B^T G^{-1} L`` (L being the explicit-side pairing) and
    ``BtGinv = B^T G^{-1}`` for extra load terms.
    """

    def __init__(self, mesh: Mesh1D, form: FormSpec, norm: NormSpec,
                 p: int, dp: int = 2, n_quad: Optional[int] = None):
        if norm.formulation != form.formulation:
            raise ValueError("form/norm formulation mismatch")
        self.mesh = mesh
        self.form = form
        self.norm = norm
        self.p = p
        self.dp = dp
        self.trial = lagrange_basis(p, "trial")
        self.test = lagrange_basis(p + dp, "enriched-test")
        nq = n_quad if n_quad is not None else (p + dp + 2 + form.extra_quad)
        self.quad = gauss_rule(nq)
        self.dof_map = build_dof_map(mesh, p, form.formulation)

        xi, w = self.quad.points, self.quad.weights
        self.vu, self.du = eval_basis(self.trial, xi)
        self.vt, self.dt = eval_basis(self.test, xi)
        self.t_left, _ = eval_basis(self.test, -1.0)
        self.t_right, _ = eval_basis(self.test, 1.0)
        self.x_q = mesh.nodes[:-1, None] + (xi[None, :] + 1.0) * mesh.h / 2.0

        self.G = _gram_kernel(norm, self.x_q, mesh.h, self.vt, self.dt, w)
        self.K = _spatial_kernel(form, self.x_q, mesh.h, self.vu, self.du,
                                 self.vt, self.dt, w, self.t_left, self.t_right)
        self.Mp = _mass_kernel(form, self.x_q, mesh.h, self.vu, self.vt, w)
        dt_th = form.dtau * form.theta
        dt_ex = form.dtau * (1.0 - form.theta)
        self.B = form.mass_weight * self.Mp + dt_th * self.K
        self.L = form.mass_weight * self.Mp - dt_ex * self.K

        try:
            self.G_chol = np.linalg.cholesky(self.G)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "Gram matrix is not SPD; check norm coefficients/quadrature") from exc
        ginv_b = np.linalg.solve(self.G, self.B)
        self.BtGinv = np.transpose(ginv_b, (0, 2, 1))
        a_e = self.BtGinv @ self.B
        self.A_e = 0.5 * (a_e + np.transpose(a_e, (0, 2, 1)))
        self.R_e = self.BtGinv @ self.L

        n = self.dof_map.n_dofs
        cols = self.dof_map.element_cols
        ncol = cols.shape[1]
        rows = np.repeat(cols, ncol, axis=1).ravel()
        cls = np.tile(cols, (1, ncol)).ravel()
        self.matrix = sp.coo_matrix(
            (self.A_e.ravel(), (rows, cls)), shape=(n, n)).tocsr()

    # -- per-step pieces ---------------------------------------------------

    def element_loads(self, prev_state: np.ndarray,
                      extra_l: Optional[np.ndarray] = None) -> np.ndarray:
        """Test-space load vectors l_e from the previous state (plus sources)."""
        prev_loc = prev_state[self.dof_map.element_cols]
        l_e = np.einsum("emn,en->em", self.L, prev_loc)
        if extra_l is not None:
            l_e = l_e + extra_l
        return l_e

    def condensed_rhs(self, prev_state: np.ndarray,
                      extra_l: Optional[np.ndarray] = None) -> np.ndarray:
        prev_loc = prev_state[self.dof_map.element_cols]
        b_e = np.einsum("enm,em->en", self.R_e, prev_loc)
        if extra_l is not None:
            b_e = b_e + np.einsum("enm,em->en", self.BtGinv, extra_l)
        rhs = np.zeros(self.dof_map.n_dofs)
        np.add.at(rhs, self.dof_map.element_cols.ravel(), b_e.ravel())
        return rhs

    def residual_indicator(self, solution: np.ndarray, l_e: np.ndarray) -> tuple[np.ndarray, float]:
        """eta_e^2 = r^T G^{-1} r with r = l_e - B_e u_e; returns (eta_e, eta)."""
        u_loc = solution[self.dof_map.element_cols]
        r = l_e - np.einsum("emn,en->em", self.B, u_loc)
        ginv_r = np.linalg.solve(self.G, r[:, :, None])[:, :, 0]
        eta_sq = np.einsum("em,em->e", r, ginv_r)
        eta_sq = np.maximum(eta_sq, 0.0)
        return np.sqrt(eta_sq), float(np.sqrt(eta_sq.sum()))

    def element_systems(self, prev_state: Optional[np.ndarray] = None,
                        extra_l: Optional[np.ndarray] = None) -> list[ElementSystem]:
        if prev_state is None:
            prev_state = np.zeros(self.dof_map.n_dofs)
        l_e = self.element_loads(prev_state, extra_l)
        out = []
        for e in range(self.mesh.n_elements):
            a_mat, b_vec = condense_element(self.G[e], self.B[e], l_e[e])
            out.append(ElementSystem(self.G[e], self.B[e], l_e[e],
                                     self.dof_map.element_cols[e], a_mat, b_vec))
        return out


# ---------------------------------------------------------------------------
# Constraint reduction and global solves
# ---------------------------------------------------------------------------

class ReducedSystem:
    """Affine reduction u = T u_red + g for Dirichlet and extrapolation rows.

    ``dirichlet_ids`` are pinned to time-dependent values supplied per solve;
    ``linear`` rows eliminate a DOF as a combination of others,
    e.g. ``(i0, [(i1, 2.0), (i2, -1.0)])`` encodes u_i0 = 2 u_i1 - u_i2.
    The reduced matrix T^T A T stays SPD.
    """

    def __init__(self, n_dofs: int, dirichlet_ids: Sequence[int],
                 linear: Iterable[tuple[int, Sequence[tuple[int, float]]]] = ()):
        self.n_dofs = n_dofs
        self.dirichlet_ids = np.asarray(list(dirichlet_ids), dtype=np.int64)
        linear = list(linear)
        eliminated = set(int(i) for i in dirichlet_ids)
        for tgt, combo in linear:
            if tgt in eliminated:
                raise ValueError("constraint target already eliminated")
            eliminated.add(int(tgt))
            for src, _ in combo:
                if src in eliminated:
                    raise ValueError("constraint source was eliminated")
        keep = np.array([i for i in range(n_dofs) if i not in eliminated],
                        dtype=np.int64)
        self.keep = keep
        self.pos = -np.ones(n_dofs, dtype=np.int64)
        self.pos[keep] = np.arange(len(keep))
        rows = list(keep)
        cols = list(self.pos[keep])
        vals = [1.0] * len(keep)
        for tgt, combo in linear:
            for src, coef in combo:
                rows.append(int(tgt))
                cols.append(int(self.pos[src]))
                vals.append(float(coef))
        self.T = sp.coo_matrix((vals, (rows, cols)),
                               shape=(n_dofs, len(keep))).tocsr()

    @property
    def n_reduced(self) -> int:
        return len(self.keep)

    def reduce_matrix(self, a_mat: sp.spmatrix) -> sp.csr_matrix:
        return (self.T.T @ a_mat @ self.T).tocsr()

    def lift(self, values: np.ndarray) -> np.ndarray:
        g = np.zeros(self.n_dofs)
        g[self.dirichlet_ids] = values
        return g

    def reduce_rhs(self, a_mat: sp.spmatrix, rhs: np.ndarray,
                   values: np.ndarray) -> np.ndarray:
        g = self.lift(values)
        return self.T.T @ (rhs - a_mat @ g)

    def expand(self, u_red: np.ndarray, values: np.ndarray) -> np.ndarray:
        return self.T @ u_red + self.lift(values)


@dataclass(eq=False)
class GlobalSystem:
    """Assembled sparse system together with its constraint reduction."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dof_map: DofMap
    reduced: ReducedSystem


def _assemble_global(elements: Sequence[ElementSystem], n_dofs: int) -> tuple[sp.csr_matrix, np.ndarray]:
    rows, cols, vals = [], [], []
    rhs = np.zeros(n_dofs)
    for el in elements:
        n = len(el.cols)
        rows.append(np.repeat(el.cols, n))
        cols.append(np.tile(el.cols, n))
        vals.append(el.A.ravel())
        np.add.at(rhs, el.cols, el.b)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_dofs, n_dofs)).tocsr()
    return mat, rhs


def solve_dpg_system(elements: Sequence[ElementSystem], dof_map: DofMap,
                     dirichlet: Mapping[int, float]) -> np.ndarray:
    """Scatter condensed element pairs, eliminate Dirichlet rows, solve."""
    mat, rhs = _assemble_global(elements, dof_map.n_dofs)
    ids = sorted(dirichlet)
    reduced = ReducedSystem(dof_map.n_dofs, ids)
    values = np.array([dirichlet[i] for i in ids], dtype=float)
    a_red = reduced.reduce_matrix(mat)
    b_red = reduced.reduce_rhs(mat, rhs, values)
    try:
        u_red = spla.spsolve(a_red.tocsc(), b_red)
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(
            "singular DPG system (missing boundary conditions?)") from exc
    _count_solve()
    if not np.all(np.isfinite(u_red)):
        raise np.linalg.LinAlgError(
            "singular DPG system (missing boundary conditions?)")
    return reduced.expand(u_red, values)


def error_indicator(elements: Sequence[ElementSystem],
                    solution: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-element eta_e and global eta from the Riesz residual representation."""
    etas = np.empty(len(elements))
    for i, el in enumerate(elements):
        r = el.l - el.B @ solution[el.cols]
        chol = np.linalg.cholesky(el.G)
        y = np.linalg.solve(chol, r)
        etas[i] = np.sqrt(max(float(y @ y), 0.0))
    return etas, float(np.sqrt((etas ** 2).sum()))


def solve_mixed_reference(elements: Sequence[ElementSystem], dof_map: DofMap,
                          dirichlet: Mapping[int, float]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Monolithic saddle-point solve of the same equations (test oracle).

    Solves (eps, v)_V + b(u, v) = l(v), b(du, eps) = 0 for (eps, u) and
    returns the trial solution plus the per-element Riesz residual eps.
    """
    n_dofs = dof_map.n_dofs
    m_sizes = [el.G.shape[0] for el in elements]
    offsets = np.concatenate([[0], np.cumsum(m_sizes)])
    n_test = int(offsets[-1])
    g_blocks = sp.block_diag([el.G for el in elements], format="csr")
    rows, cols, vals = [], [], []
    l_vec = np.zeros(n_test)
    for i, el in enumerate(elements):
        r0 = offsets[i]
        m, n = el.B.shape
        rows.append((r0 + np.arange(m)).repeat(n))
        cols.append(np.tile(el.cols, m))
        vals.append(el.B.ravel())
        l_vec[r0:r0 + m] = el.l
    b_glob = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_test, n_dofs)).tocsr()
    ids = sorted(dirichlet)
    reduced = ReducedSystem(n_dofs, ids)
    values = np.array([dirichlet[i] for i in ids], dtype=float)
    bt = (b_glob @ reduced.T).tocsr()
    g_vec = reduced.lift(values)
    saddle = sp.bmat([[g_blocks, bt], [bt.T, None]], format="csc")
    rhs = np.concatenate([l_vec - b_glob @ g_vec, np.zeros(reduced.n_reduced)])
    sol = spla.spsolve(saddle, rhs)
    _count_solve()
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("singular mixed saddle system")
    eps = sol[:n_test]
    u_full = reduced.expand(sol[n_test:], values)
    eps_parts = [eps[offsets[i]:offsets[i + 1]] for i in range(len(elements))]
    return u_full, eps_parts


# ---------------------------------------------------------------------------
# Per-element public wrappers
# ---------------------------------------------------------------------------

def _single_tables(element: tuple[float, float], trial: BasisSet, test: BasisSet,
                   quad: QuadratureRule):
    x0, x1 = element
    h = x1 - x0
    if h <= 0:
        raise ValueError("element must have positive width")
    xi, w = quad.points, quad.weights
    vu, du = eval_basis(trial, xi)
    vt, dtb = eval_basis(test, xi)
    t_l, _ = eval_basis(test, -1.0)
    t_r, _ = eval_basis(test, 1.0)
    x_q = (x0 + (xi + 1.0) * h / 2.0)[None, :]
    return h, x_q, vu, du, vt, dtb, t_l, t_r, w


def assemble_gram(element: tuple[float, float], norm: NormSpec,
                  test_basis: BasisSet, quad: QuadratureRule) -> np.ndarray:
    """SPD Gram matrix of the test inner product on one element."""
    x0, x1 = element
    h = x1 - x0
    xi, w = quad.points, quad.weights
    vt, dtb = eval_basis(test_basis, xi)
    x_q = (x0 + (xi + 1.0) * h / 2.0)[None, :]
    g = _gram_kernel(norm, x_q, h, vt, dtb, w)[0]
    np.linalg.cholesky(g)  # SPD certification; raises LinAlgError otherwise
    return g


def assemble_element_forms(element: tuple[float, float], form: FormSpec,
                           trial_basis: BasisSet, test_basis: BasisSet,
                           quad: QuadratureRule,
                           previous_state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Element form matrix B (columns field | trace | flux) and load l.

    ``previous_state`` holds the element's previous-step values ordered like
    the columns of B; the load is the (u^n, v) pairing plus the explicit
    theta-weighted spatial terms.
    """
    h, x_q, vu, du, vt, dtb, t_l, t_r, w = _single_tables(element, trial_basis, test_basis, quad)
    k = _spatial_kernel(form, x_q, h, vu, du, vt, dtb, w, t_l, t_r)[0]
    mp = _mass_kernel(form, x_q, h, vu, vt, w)[0]
    if previous_state.shape[0] != k.shape[1]:
        raise ValueError(
            f"previous_state has {previous_state.shape[0]} entries, trial space has {k.shape[1]}")
    b_mat = form.mass_weight * mp + form.dtau * form.theta * k
    l_vec = (form.mass_weight * mp - form.dtau * (1.0 - form.theta) * k) @ previous_state
    return b_mat, l_vec
