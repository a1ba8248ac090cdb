"""1-D mesh, Lagrange bases and Gauss quadrature on the reference element [-1, 1].

Everything here is defined on a uniform partition of a truncated interval
(log-price coordinates for the pricing problems). Trial and enriched-test
spaces both use nodal Lagrange bases; the enriched space simply carries a
higher polynomial order. All objects are immutable after construction and
safe to share between threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mesh1D",
    "BasisSet",
    "QuadratureRule",
    "build_uniform_mesh",
    "lagrange_basis",
    "eval_basis",
    "gauss_rule",
]

_REF_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Uniform partition of [x_min, x_max] into n_elements cells.

    ``nodes`` holds the element interfaces including both endpoints; the mesh
    skeleton is exactly this node set (interior interfaces plus the boundary).
    """

    x_min: float
    x_max: float
    n_elements: int
    nodes: np.ndarray
    h: float

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[1:-1]

    def element_bounds(self, e: int) -> tuple[float, float]:
        return float(self.nodes[e]), float(self.nodes[e + 1])

    def element_of(self, x: float) -> int:
        """Index of the element containing x (endpoints clamp inward)."""
        if x < self.x_min - 1e-10 or x > self.x_max + 1e-10:
            raise ValueError(f"x={x} outside mesh [{self.x_min}, {self.x_max}]")
        e = int(np.floor((x - self.x_min) / self.h))
        return min(max(e, 0), self.n_elements - 1)

    def to_reference(self, x: float, e: int) -> float:
        x0, x1 = self.element_bounds(e)
        return 2.0 * (x - x0) / (x1 - x0) - 1.0


def build_uniform_mesh(x_min: float, x_max: float, n_elements: int) -> Mesh1D:
    """Uniform mesh on [x_min, x_max] with n_elements cells."""
    if not x_min < x_max:
        raise ValueError(f"degenerate interval [{x_min}, {x_max}]")
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    nodes = np.linspace(x_min, x_max, n_elements + 1)
    h = (x_max - x_min) / n_elements
    return Mesh1D(float(x_min), float(x_max), int(n_elements), nodes, float(h))


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Nodal Lagrange basis of a given order on [-1, 1].

    ``kind`` tags the role ("trial" or "enriched-test"); the nodes are
    equispaced, which is well conditioned for the low orders used here.
    ``coeffs[i]`` are the monomial coefficients of the i-th shape function.
    """

    order: int
    kind: str
    nodes: np.ndarray
    coeffs: np.ndarray = field(repr=False)

    @property
    def n_functions(self) -> int:
        return self.order + 1


def lagrange_basis(order: int, kind: str = "trial") -> BasisSet:
    if order < 0:
        raise ValueError("order must be >= 0")
    if order == 0:
        nodes = np.array([0.0])
        coeffs = np.array([[1.0]])
        return BasisSet(0, kind, nodes, coeffs)
    nodes = np.linspace(-1.0, 1.0, order + 1)
    # Columns of V^{-1} give the monomial coefficients of each shape function.
    vander = np.vander(nodes, order + 1, increasing=True)
    coeffs = np.linalg.inv(vander).T
    return BasisSet(order, kind, nodes, coeffs)


def eval_basis(basis: BasisSet, xi) -> tuple[np.ndarray, np.ndarray]:
    """Values and first derivatives of all shape functions at xi in [-1, 1].

    Returns arrays of shape (n_functions,) for scalar xi, or
    (n_points, n_functions) for array input.
    """
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(np.abs(xi_arr) > 1.0 + _REF_TOL):
        raise ValueError("reference coordinate outside [-1, 1]")
    scalar = xi_arr.ndim == 0
    pts = np.atleast_1d(xi_arr)
    # Horner-free direct evaluation of the monomial expansion; orders are small.
    powers = pts[:, None] ** np.arange(basis.order + 1)[None, :]
    values = powers @ basis.coeffs.T
    dcoeffs = basis.coeffs[:, 1:] * np.arange(1, basis.order + 1)[None, :]
    if basis.order == 0:
        derivs = np.zeros_like(values)
    else:
        dpowers = pts[:, None] ** np.arange(basis.order)[None, :]
        derivs = dpowers @ dcoeffs.T
    if scalar:
        return values[0], derivs[0]
    return values, derivs


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Legendre rule on [-1, 1]; exact for polynomials of degree 2n-1."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.points)


def gauss_rule(n_points: int) -> QuadratureRule:
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    pts, wts = np.polynomial.legendre.leggauss(n_points)
    return QuadratureRule(pts, wts)
