"""Closed-form European call pricing and delta, plus the delta-hedging baseline.

All hedging accounting in this package runs at zero financing rate, so the
cash-account leg of a replicating portfolio drops out; the functions still
accept an explicit rate for pricing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import DomainError
from .market_sim import PathSet


@dataclass(frozen=True)
class ContractSpec:
    """European call: strike and maturity in daily steps."""

    strike: float = 100.0
    maturity_steps: int = 30

    def __post_init__(self):
        if self.strike <= 0:
            raise DomainError(f"strike must be > 0, got {self.strike}")
        if self.maturity_steps < 1:
            raise DomainError(f"maturity_steps must be >= 1, got {self.maturity_steps}")


@dataclass(frozen=True)
class BSQuote:
    price: float
    delta: float


def norm_cdf(x):
    """Standard normal CDF via the complementary error function."""
    return 0.5 * erfc(-np.asarray(x, dtype=np.float64) / np.sqrt(2.0))


def _check_positive(spot, strike):
    if np.any(np.asarray(spot) <= 0):
        raise DomainError("spot must be > 0")
    if strike <= 0:
        raise DomainError("strike must be > 0")


def bs_call_price(spot, strike: float, rate: float, vol: float, tau: float):
    """Black-Scholes-Merton call value; returns intrinsic value at tau = 0."""
    _check_positive(spot, strike)
    if vol < 0:
        raise DomainError(f"vol must be >= 0, got {vol}")
    if tau < 0:
        raise DomainError(f"tau must be >= 0, got {tau}")
    spot = np.asarray(spot, dtype=np.float64)
    if tau == 0 or vol == 0:
        # degenerate: forward intrinsic value
        value = np.maximum(spot - strike * np.exp(-rate * tau), 0.0)
        return value if value.ndim else float(value)
    sig_rt = vol * np.sqrt(tau)
    d1 = (np.log(spot / strike) + (rate + 0.5 * vol ** 2) * tau) / sig_rt
    d2 = d1 - sig_rt
    value = spot * norm_cdf(d1) - strike * np.exp(-rate * tau) * norm_cdf(d2)
    return value if value.ndim else float(value)


def bs_delta(spot, strike: float, rate: float, vol: float, tau: float):
    """Call delta N(d1); tau must be strictly positive (delta is a step at expiry)."""
    _check_positive(spot, strike)
    if tau <= 0:
        raise DomainError(f"tau must be > 0 for delta, got {tau}")
    if vol < 0:
        raise DomainError(f"vol must be >= 0, got {vol}")
    spot = np.asarray(spot, dtype=np.float64)
    if vol == 0:
        value = (spot > strike * np.exp(-rate * tau)).astype(np.float64)
        return value if value.ndim else float(value)
    d1 = (np.log(spot / strike) + (rate + 0.5 * vol ** 2) * tau) / (vol * np.sqrt(tau))
    value = norm_cdf(d1)
    return value if value.ndim else float(value)


def bs_quote(spot: float, strike: float, rate: float, vol: float, tau: float) -> BSQuote:
    return BSQuote(price=bs_call_price(spot, strike, rate, vol, tau),
                   delta=bs_delta(spot, strike, rate, vol, tau))


def bsm_delta_matrix(paths: PathSet, contract: ContractSpec, vol: float,
                     dt: float = 1.0 / 365.0, rate: float = 0.0,
                     mask: np.ndarray | None = None) -> np.ndarray:
    """Per-day BSM deltas on simulated paths, frozen on masked-out days.

    Day t uses spot S_t and remaining maturity (n_steps - t) * dt. With
    mask=None every day rebalances. Accepts a PathSet or a raw price matrix
    of shape [n_paths, n_steps + 1].
    """
    from .hedging_engine import check_mask  # local import avoids a module cycle

    prices = np.asarray(getattr(paths, "prices", paths), dtype=np.float64)
    n_paths, n_steps = prices.shape[0], prices.shape[1] - 1
    if contract.maturity_steps != n_steps:
        raise DomainError(
            f"contract maturity {contract.maturity_steps} != path length {n_steps}")
    if mask is not None:
        check_mask(mask, n_paths, n_steps)
    deltas = np.empty((n_paths, n_steps))
    prev = np.zeros(n_paths)
    for t in range(n_steps):
        tau = (n_steps - t) * dt
        target = bs_delta(prices[:, t], contract.strike, rate, vol, tau)
        if mask is None:
            prev = target
        else:
            prev = np.where(mask[:, t], target, prev)
        deltas[:, t] = prev
    return deltas


def bsm_hedge_baseline(paths: PathSet, contract: ContractSpec, cost,
                       vol: float, dt: float = 1.0 / 365.0, rate: float = 0.0,
                       mask: np.ndarray | None = None):
    """Termination losses of the closed-form delta hedge on the given paths.

    Returns the same episode result structure as evaluate_policy so baseline
    and learned policies are directly comparable.
    """
    from .hedging_engine import episode_results

    deltas = bsm_delta_matrix(paths, contract, vol, dt=dt, rate=rate, mask=mask)
    return episode_results(paths.prices, deltas, contract, cost)
