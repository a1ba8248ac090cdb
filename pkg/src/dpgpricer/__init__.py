"""DPG option-pricing engine for the Black-Scholes model.

Core layers: meshing/forms/assembly build and condense the broken variational
systems, stepping marches them in time-to-maturity, pricing wraps the four
contract drivers, greeks post-processes sensitivities and oracles provides
the independent reference pricers. The service subpackage exposes the same
drivers over HTTP; cli is a thin client for both.
"""
from .contracts import (Contract, MarketParams, StateTransform, american_put,
                        asian_fixed_strike_call, boundary_values, double_barrier,
                        european, monitoring_schedule, payoff)
from .meshing import BasisSet, Mesh1D, QuadratureRule, build_uniform_mesh, eval_basis, gauss_rule
from .pricing import (Discretization, FreeBoundary, PricingResult,
                      extract_exercise_boundary, price_american, price_asian,
                      price_barrier, price_european)
from .oracles import McConfig, binomial_price, bs_closed_form, mc_asian, mc_barrier

__version__ = "0.1.0"

__all__ = [
    "Contract", "MarketParams", "StateTransform", "american_put",
    "asian_fixed_strike_call", "boundary_values", "double_barrier", "european",
    "monitoring_schedule", "payoff",
    "BasisSet", "Mesh1D", "QuadratureRule", "build_uniform_mesh", "eval_basis", "gauss_rule",
    "Discretization", "FreeBoundary", "PricingResult", "extract_exercise_boundary",
    "price_american", "price_asian", "price_barrier", "price_european",
    "McConfig", "binomial_price", "bs_closed_form", "mc_asian", "mc_barrier",
    "__version__",
]
