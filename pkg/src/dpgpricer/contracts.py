"""Contracts, market data, payoffs, coordinate transforms and boundary data.

Vanilla, American and barrier problems are solved in log-price x = ln S on a
truncated domain [-6, 6]; the fixed-strike Asian call uses the reduced state
x = (K - avg-so-far)/S on [-2, 2], in which the initial profile is (-x)^+ and
the final price is S0 * U(tau=T, K/S0). Time-to-maturity tau = T - t is used
everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "MarketParams",
    "Contract",
    "StateTransform",
    "european",
    "american_put",
    "asian_fixed_strike_call",
    "double_barrier",
    "monitoring_schedule",
    "payoff",
    "payoff_values",
    "boundary_values",
    "barrier_mask",
    "log_price_transform",
    "asian_transform",
    "to_price",
    "from_price",
    "asian_price_from_solution",
]

EUROPEAN = "European"
AMERICAN = "American"
ASIAN = "AsianFixedStrike"
BARRIER = "DoubleBarrier"

CALL = "call"
PUT = "put"

LOG_DOMAIN = (-6.0, 6.0)
ASIAN_DOMAIN = (-2.0, 2.0)

TRADING_DAYS = 250
TRADING_WEEKS = 50


@dataclass(frozen=True)
class MarketParams:
    r: float
    sigma: float
    S0: float
    T: float

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.T <= 0.0:
            raise ValueError("T must be positive")
        if self.S0 <= 0.0:
            raise ValueError("S0 must be positive")


@dataclass(frozen=True)
class Contract:
    style: str
    right: str
    K: float
    barriers: Optional[tuple[float, float]] = None
    monitoring: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.style not in (EUROPEAN, AMERICAN, ASIAN, BARRIER):
            raise ValueError(f"unknown style {self.style!r}")
        if self.right not in (CALL, PUT):
            raise ValueError(f"unknown right {self.right!r}")
        if self.K <= 0.0:
            raise ValueError("strike must be positive")
        if self.style == BARRIER:
            if self.barriers is None:
                raise ValueError("barrier contract needs (S_L, S_U)")
            lo, hi = self.barriers
            if not 0.0 < lo < hi:
                raise ValueError("need 0 < S_L < S_U")
            if self.monitoring is not None and len(self.monitoring) > 0:
                dates = np.asarray(self.monitoring)
                if np.any(np.diff(dates) <= 0.0) or dates[0] <= 0.0:
                    raise ValueError("monitoring dates must be strictly increasing and positive")
        elif self.barriers is not None:
            raise ValueError("barriers only apply to DoubleBarrier contracts")


def european(right: str, strike: float) -> Contract:
    return Contract(EUROPEAN, right, strike)


def american_put(strike: float) -> Contract:
    return Contract(AMERICAN, PUT, strike)


def asian_fixed_strike_call(strike: float) -> Contract:
    return Contract(ASIAN, CALL, strike)


def double_barrier(right: str, strike: float, s_low: float, s_up: float,
                   monitoring: Sequence[float]) -> Contract:
    return Contract(BARRIER, right, strike, (s_low, s_up), tuple(monitoring))


def monitoring_schedule(T: float, frequency: str) -> tuple[float, ...]:
    """Equally spaced monitoring dates k*dt, k=1..N with t_N = T.

    Daily means 250 checks per trading year (dt = 0.004 for T=1, 0.002 for
    T=0.5); weekly means 50 (dt = 0.02 / 0.01). The terminal date is
    monitored; t=0 is not.
    """
    if frequency == "daily":
        n = round(TRADING_DAYS * T)
    elif frequency == "weekly":
        n = round(TRADING_WEEKS * T)
    else:
        raise ValueError(f"unknown monitoring frequency {frequency!r}")
    n = max(int(n), 1)
    return tuple((T * (k + 1)) / n for k in range(n))


@dataclass(frozen=True)
class StateTransform:
    """Map between asset price and the PDE state coordinate."""

    kind: str                      # "log-price" | "asian-reduced"
    domain: tuple[float, float]

    def __post_init__(self):
        if self.kind not in ("log-price", "asian-reduced"):
            raise ValueError(f"unknown transform {self.kind!r}")


def log_price_transform(domain: tuple[float, float] = LOG_DOMAIN) -> StateTransform:
    return StateTransform("log-price", domain)


def asian_transform() -> StateTransform:
    return StateTransform("asian-reduced", ASIAN_DOMAIN)


def to_price(transform: StateTransform, x: float) -> float:
    if transform.kind != "log-price":
        raise ValueError("only the log-price transform maps back to prices")
    return math.exp(x)


def from_price(transform: StateTransform, s: float) -> float:
    if s <= 0.0:
        raise ValueError("price must be positive")
    if transform.kind != "log-price":
        raise ValueError("only the log-price transform maps prices")
    return math.log(s)


def asian_price_from_solution(strike: float, spot: float, value_at) -> float:
    """S0 * U(tau=T, K/S0); ``value_at`` evaluates the reduced solution."""
    x_star = strike / spot
    lo, hi = ASIAN_DOMAIN
    if not lo < x_star < hi:
        raise ValueError(f"evaluation point K/S0 = {x_star} outside ({lo}, {hi})")
    return spot * float(value_at(x_star))


# ---------------------------------------------------------------------------
# Payoffs and boundary data
# ---------------------------------------------------------------------------

def payoff(contract: Contract, x) -> np.ndarray | float:
    """Payoff in the PDE state coordinate (log-price, or reduced Asian state).

    The barrier payoff is the vanilla payoff masked to [ln S_L, ln S_U]
    (terminal monitoring); masking elsewhere happens per monitoring date.
    """
    x_arr = np.asarray(x, dtype=float)
    if contract.style == ASIAN:
        out = np.maximum(-x_arr, 0.0)
    else:
        s = np.exp(x_arr)
        if contract.right == CALL:
            out = np.maximum(s - contract.K, 0.0)
        else:
            out = np.maximum(contract.K - s, 0.0)
        if contract.style == BARRIER:
            out = barrier_mask(contract, x_arr, out)
    if np.isscalar(x) or x_arr.ndim == 0:
        return float(out)
    return out


def payoff_values(contract: Contract, xs: np.ndarray) -> np.ndarray:
    return np.asarray(payoff(contract, xs), dtype=float)


def barrier_mask(contract: Contract, x: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Zero the value wherever S = e^x lies outside [S_L, S_U] (idempotent)."""
    lo, hi = contract.barriers
    x_arr = np.asarray(x, dtype=float)
    inside = (x_arr >= math.log(lo) - 1e-12) & (x_arr <= math.log(hi) + 1e-12)
    return np.where(inside, values, 0.0)


def boundary_values(contract: Contract, market: MarketParams,
                    transform: StateTransform, tau: float) -> tuple[float, float]:
    """Dirichlet data (left, right) at time-to-maturity tau.

    European call: 0 and S - K e^{-r tau}; put: K e^{-r tau} - S and 0.
    American put: intrinsic value on the left (early exercise), 0 on the
    right. Barrier: 0 on both far-field ends. Asian: the right end is
    Dirichlet 0; the left end carries a zero-curvature condition handled by
    the solver, so only the right value is meaningful here.
    """
    if tau < -1e-12 or tau > market.T + 1e-12:
        raise ValueError(f"tau={tau} outside [0, {market.T}]")
    lo, hi = transform.domain
    if contract.style == EUROPEAN:
        disc_k = contract.K * math.exp(-market.r * tau)
        if contract.right == CALL:
            return 0.0, math.exp(hi) - disc_k
        return disc_k - math.exp(lo), 0.0
    if contract.style == AMERICAN:
        if contract.right != PUT:
            raise ValueError("American pricing supports puts only")
        return contract.K - math.exp(lo), 0.0
    if contract.style == BARRIER:
        return 0.0, 0.0
    # Asian reduced problem
    return 0.0, 0.0
