"""Variational form and test-norm specifications for the time-stepped problems.

Convention used throughout the package (see docs/formulations.md for the full
derivation): the spatial operator is

    A u = -a(x) u'' + b(x) u' + c(x) u,

the PDE marched in time-to-maturity is u_tau + A u = 0, and one theta-step
solves

    (u^{n+1}, v) + dt*theta * k(u^{n+1}, v) = (u^n, v) - dt*(1-theta) * k(u^n, v)

with k the broken weak form of A (primal or ultraweak). Black-Scholes in
log-price x = ln S has a = sigma^2/2, b = -(r - sigma^2/2), c = r (the
convection coefficient is the risk-neutral log-drift); the reduced Asian
equation has a = sigma^2 x^2 / 2, b = 1/T + r x, c = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "FormSpec",
    "NormTerm",
    "NormSpec",
    "black_scholes_form",
    "asian_form",
    "primal_norm",
    "ultraweak_graph_norm",
    "black_scholes_norm",
    "asian_norm",
    "constant",
]

CoefFn = Callable[[np.ndarray], np.ndarray]

PRIMAL = "primal"
ULTRAWEAK = "ultraweak"


def constant(value: float) -> CoefFn:
    def f(x: np.ndarray) -> np.ndarray:
        return np.full_like(np.asarray(x, dtype=float), value)

    return f


@dataclass(frozen=True)
class FormSpec:
    """Coefficients and time-step data of one theta-step bilinear form.

    ``diffusion_dx`` is the analytic derivative a'(x); it enters the weak form
    through integration by parts of the non-divergence diffusion term.
    ``mass_weight`` is 1 for transient steps and 0 for steady problems.
    ``extra_quad`` bumps the quadrature count (variable-coefficient forms).
    """

    formulation: str
    diffusion: CoefFn
    diffusion_dx: CoefFn
    convection: CoefFn
    reaction: CoefFn
    dtau: float
    theta: float
    mass_weight: float = 1.0
    extra_quad: int = 0

    def __post_init__(self):
        if self.formulation not in (PRIMAL, ULTRAWEAK):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.dtau <= 0.0:
            raise ValueError("dtau must be positive")


@dataclass(frozen=True)
class NormTerm:
    """One squared group `weight * || cv*v + cdv*v' + cw*w + cdw*w' ||^2`."""

    weight: float
    cv: Optional[CoefFn] = None
    cdv: Optional[CoefFn] = None
    cw: Optional[CoefFn] = None
    cdw: Optional[CoefFn] = None

    def __post_init__(self):
        if self.weight <= 0.0:
            raise ValueError("norm term weights must be positive")


@dataclass(frozen=True)
class NormSpec:
    """Test-space inner product as a sum of squared first-order groups."""

    formulation: str
    terms: tuple[NormTerm, ...] = field(default=())


def black_scholes_form(r: float, sigma: float, dtau: float, theta: float,
                       formulation: str = PRIMAL, mass_weight: float = 1.0) -> FormSpec:
    a = 0.5 * sigma * sigma
    return FormSpec(
        formulation=formulation,
        diffusion=constant(a),
        diffusion_dx=constant(0.0),
        convection=constant(-(r - a)),
        reaction=constant(r),
        dtau=dtau,
        theta=theta,
        mass_weight=mass_weight,
    )


def asian_form(r: float, sigma: float, maturity: float, dtau: float, theta: float,
               formulation: str = PRIMAL) -> FormSpec:
    s2 = sigma * sigma

    def a(x):
        return 0.5 * s2 * np.asarray(x, dtype=float) ** 2

    def a_dx(x):
        return s2 * np.asarray(x, dtype=float)

    def b(x):
        return 1.0 / maturity + r * np.asarray(x, dtype=float)

    return FormSpec(
        formulation=formulation,
        diffusion=a,
        diffusion_dx=a_dx,
        convection=b,
        reaction=constant(0.0),
        dtau=dtau,
        theta=theta,
        extra_quad=1,
    )


def primal_norm(dtau: float, grad_weight: CoefFn) -> NormSpec:
    """(1/dt)||v||^2 + (1/dt^2)||g(x) v'||^2."""
    return NormSpec(
        PRIMAL,
        (
            NormTerm(1.0 / dtau, cv=constant(1.0)),
            NormTerm(1.0 / dtau ** 2, cdv=grad_weight),
        ),
    )


def ultraweak_graph_norm(dtau: float, g1_dv: CoefFn, g1_v: CoefFn,
                         g2_v: CoefFn, alpha: float = 1.0) -> NormSpec:
    """Adjoint-graph norm plus an L2 term guaranteeing positivity.

    (1/dt^2)||g1_dv*v' + g1_v*v - w||^2 + (1/dt)||g2_v*v - w'||^2
        + alpha*(||v||^2 + ||w||^2)
    """
    return NormSpec(
        ULTRAWEAK,
        (
            NormTerm(1.0 / dtau ** 2, cdv=g1_dv, cv=g1_v, cw=constant(-1.0)),
            NormTerm(1.0 / dtau, cv=g2_v, cdw=constant(-1.0)),
            NormTerm(alpha, cv=constant(1.0)),
            NormTerm(alpha, cw=constant(1.0)),
        ),
    )


def black_scholes_norm(r: float, sigma: float, dtau: float,
                       formulation: str = PRIMAL) -> NormSpec:
    a = 0.5 * sigma * sigma
    if formulation == PRIMAL:
        return primal_norm(dtau, constant(a))
    return ultraweak_graph_norm(
        dtau,
        g1_dv=constant(a),
        g1_v=constant(-r),
        g2_v=constant(r - a),
    )


def asian_norm(r: float, sigma: float, maturity: float, dtau: float,
               formulation: str = PRIMAL) -> NormSpec:
    """Test norms for the reduced Asian problem.

    The ultraweak graph norm follows the adjoint of the actual operator, with
    two robustness fixes: the vanishing diffusion weight sigma^2 x^2/2 gets a
    floor (x^2 + 1/4 instead of x^2), since a zero v' weight at x = 0 leaves
    the central elements without gradient control, and the L2 terms scale
    with 1/dtau so they do not collapse relative to the graph groups under
    time refinement (unscaled they admit near-null test pairs that destabilise
    Crank-Nicolson marching on fine grids).
    """
    s2 = sigma * sigma
    if formulation == PRIMAL:
        return primal_norm(dtau, constant(s2))

    def g1_dv(x):
        xv = np.asarray(x, dtype=float)
        return -0.5 * s2 * (xv * xv + 0.25)

    def g1_v(x):
        return -(1.0 / maturity + (r + s2) * np.asarray(x, dtype=float))

    # Second group is ||w'||^2 alone for this problem.
    return NormSpec(
        ULTRAWEAK,
        (
            NormTerm(1.0 / dtau ** 2, cdv=g1_dv, cv=g1_v, cw=constant(-1.0)),
            NormTerm(1.0 / dtau, cdw=constant(1.0)),
            NormTerm(1.0 / dtau, cv=constant(1.0)),
            NormTerm(1.0 / dtau, cw=constant(1.0)),
        ),
    )
