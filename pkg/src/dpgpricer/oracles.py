"""Independent reference pricers used for verification.

Closed-form Black-Scholes (erfc-based normal CDF, ~1e-16 accuracy), the
Cox-Ross-Rubinstein binomial tree for European/American exercise, and Monte
Carlo estimators for the arithmetic-average Asian call and the discretely
monitored double-barrier option. All Monte Carlo draws use exact log-normal
transitions between observation dates (no Euler bias) on per-batch jumped
PCG64 substreams, so results are reproducible for a given seed regardless of
batch execution order; batch totals are reduced with compensated summation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .contracts import CALL, PUT, MarketParams

__all__ = [
    "McConfig",
    "norm_cdf",
    "norm_pdf",
    "bs_closed_form",
    "bs_delta",
    "bs_gamma",
    "bs_vega",
    "binomial_price",
    "mc_asian",
    "mc_barrier",
]


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _d1_d2(s: float, k: float, r: float, sigma: float, t: float) -> tuple[float, float]:
    sig_t = sigma * math.sqrt(t)
    d1 = (math.log(s / k) + (r + 0.5 * sigma * sigma) * t) / sig_t
    return d1, d1 - sig_t


def bs_closed_form(s: float, k: float, r: float, sigma: float, t: float,
                   right: str = CALL) -> float:
    """Black-Scholes value; sigma = 0 returns the intrinsic-forward limit."""
    if s <= 0 or k <= 0 or t <= 0:
        raise ValueError("need positive spot, strike and maturity")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    disc_k = k * math.exp(-r * t)
    if sigma == 0.0:
        intrinsic = max(s - disc_k, 0.0)
        return intrinsic if right == CALL else max(disc_k - s, 0.0)
    d1, d2 = _d1_d2(s, k, r, sigma, t)
    call = s * norm_cdf(d1) - disc_k * norm_cdf(d2)
    if right == CALL:
        return call
    return call - s + disc_k          # put-call parity


def bs_delta(s: float, k: float, r: float, sigma: float, t: float,
             right: str = CALL) -> float:
    d1, _ = _d1_d2(s, k, r, sigma, t)
    nd1 = norm_cdf(d1)
    return nd1 if right == CALL else nd1 - 1.0


def bs_gamma(s: float, k: float, r: float, sigma: float, t: float) -> float:
    d1, _ = _d1_d2(s, k, r, sigma, t)
    return norm_pdf(d1) / (s * sigma * math.sqrt(t))


def bs_vega(s: float, k: float, r: float, sigma: float, t: float) -> float:
    d1, _ = _d1_d2(s, k, r, sigma, t)
    return s * norm_pdf(d1) * math.sqrt(t)


def binomial_price(s: float, k: float, r: float, sigma: float, t: float,
                   n_steps: int, style: str = "european", right: str = CALL) -> float:
    """Cox-Ross-Rubinstein tree with backward induction.

    u = exp(sigma sqrt(dt)), d = 1/u; American exercise takes the pointwise
    maximum with the intrinsic value at every node.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if style not in ("european", "american"):
        raise ValueError(f"unknown style {style!r}")
    dt = t / n_steps
    u = math.exp(sigma * math.sqrt(dt))
    d = 1.0 / u
    growth = math.exp(r * dt)
    p = (growth - d) / (u - d)
    if not 0.0 < p < 1.0:
        raise ValueError("risk-neutral probability outside (0,1); reduce dt")
    disc = math.exp(-r * dt)
    j = np.arange(n_steps + 1)
    prices = s * u ** (2 * j - n_steps)
    if right == CALL:
        values = np.maximum(prices - k, 0.0)
    else:
        values = np.maximum(k - prices, 0.0)
    for m in range(n_steps - 1, -1, -1):
        values = disc * (p * values[1:m + 2] + (1.0 - p) * values[:m + 1])
        if style == "american":
            j = np.arange(m + 1)
            prices = s * u ** (2 * j - m)
            intrinsic = prices - k if right == CALL else k - prices
            values = np.maximum(values, intrinsic)
    return float(values[0])


@dataclass(frozen=True)
class McConfig:
    """Path-simulation parameters; a fixed seed fully determines the estimate."""

    n_paths: int = 100_000
    n_steps: int = 256
    seed: int = 20240803
    antithetic: bool = True
    batch_size: int = 200_000

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("n_paths and n_steps must be >= 1")


def _batch_streams(cfg: McConfig, n_units: int):
    """(start, count, Generator) triples on jumped substreams per batch."""
    base = np.random.PCG64(cfg.seed)
    out = []
    start = 0
    b = 0
    while start < n_units:
        count = min(cfg.batch_size, n_units - start)
        out.append((start, count, np.random.Generator(base.jumped(b))))
        start += count
        b += 1
    return out


def _reduce_mean_stderr(sums: list[float], sqsums: list[float], n: int) -> tuple[float, float]:
    total = math.fsum(sums)
    total_sq = math.fsum(sqsums)
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    stderr = math.sqrt(var / n)
    return mean, stderr


def mc_asian(market: MarketParams, k: float, cfg: McConfig) -> tuple[float, float]:
    """Arithmetic-average (trapezoidal) Asian call estimate and its std error.

    Paths use exact GBM transitions on cfg.n_steps uniform sub-intervals; the
    time average is the trapezoid rule over the sampled path, which leaves a
    O((T/n_steps)^2) discretisation bias - keep n_steps at a few hundred or
    more when validating against continuous-average references. Antithetic
    legs share each draw (mirrored) and the pair mean counts as one sample
    for the error estimate.
    """
    dt = market.T / cfg.n_steps
    drift = (market.r - 0.5 * market.sigma ** 2) * dt
    vol = market.sigma * math.sqrt(dt)
    disc = math.exp(-market.r * market.T)
    sums, sqsums = [], []
    for _, count, rng in _batch_streams(cfg, cfg.n_paths):
        s_pos = np.full(count, market.S0)
        acc_pos = 0.5 * s_pos.copy()
        if cfg.antithetic:
            s_neg = s_pos.copy()
            acc_neg = acc_pos.copy()
        for i in range(cfg.n_steps):
            z = rng.standard_normal(count)
            w = 1.0 if i < cfg.n_steps - 1 else 0.5
            s_pos *= np.exp(drift + vol * z)
            acc_pos += w * s_pos
            if cfg.antithetic:
                s_neg *= np.exp(drift - vol * z)
                acc_neg += w * s_neg
        payoff = np.maximum(acc_pos / cfg.n_steps - k, 0.0)
        if cfg.antithetic:
            payoff = 0.5 * (payoff + np.maximum(acc_neg / cfg.n_steps - k, 0.0))
        payoff *= disc
        sums.append(float(payoff.sum()))
        sqsums.append(float((payoff ** 2).sum()))
    return _reduce_mean_stderr(sums, sqsums, cfg.n_paths)


def mc_barrier(market: MarketParams, k: float, barriers: tuple[float, float],
               schedule: Sequence[float], cfg: McConfig,
               right: str = CALL) -> tuple[float, float]:
    """Discretely monitored double knockout call/put estimate and std error.

    Exact log-normal increments between consecutive monitoring dates; a path
    dies when it sits outside [S_L, S_U] at any monitored instant. An empty
    schedule degenerates to the European estimate.
    """
    lo, hi = barriers
    dates = list(schedule)
    if any(d <= 0 or d > market.T + 1e-12 for d in dates):
        raise ValueError("schedule must lie inside (0, T]")
    steps = []
    prev = 0.0
    for d in dates:
        steps.append((d - prev, True))
        prev = d
    if prev < market.T - 1e-12:
        steps.append((market.T - prev, False))
    mu = market.r - 0.5 * market.sigma ** 2
    disc = math.exp(-market.r * market.T)
    sums, sqsums = [], []
    for _, count, rng in _batch_streams(cfg, cfg.n_paths):
        s_pos = np.full(count, market.S0)
        alive_pos = np.ones(count, dtype=bool)
        if cfg.antithetic:
            s_neg = s_pos.copy()
            alive_neg = alive_pos.copy()
        for dt, monitored in steps:
            z = rng.standard_normal(count)
            sig_dt = market.sigma * math.sqrt(dt)
            s_pos *= np.exp(mu * dt + sig_dt * z)
            if cfg.antithetic:
                s_neg *= np.exp(mu * dt - sig_dt * z)
            if monitored:
                alive_pos &= (s_pos >= lo) & (s_pos <= hi)
                if cfg.antithetic:
                    alive_neg &= (s_neg >= lo) & (s_neg <= hi)

        def leg(s, alive):
            intrinsic = np.maximum(s - k, 0.0) if right == CALL else np.maximum(k - s, 0.0)
            return np.where(alive, intrinsic, 0.0)

        payoff = leg(s_pos, alive_pos)
        if cfg.antithetic:
            payoff = 0.5 * (payoff + leg(s_neg, alive_neg))
        payoff *= disc
        sums.append(float(payoff.sum()))
        sqsums.append(float((payoff ** 2).sum()))
    return _reduce_mean_stderr(sums, sqsums, cfg.n_paths)
