"""Shared generators: random consistent chains from atomic laws, lognormal chains."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from varbounds import NormalizedChain, OptionChain, normalize


def atomic_law(rng, m_lo=3, m_hi=9):
    """Finitely supported law on (0, oo) with mean exactly 1.

    One atom sits well below 0.3 and one above 2.4, so strikes drawn inside
    the atom range always see mass on both sides (n_min = 0, unbounded n_max,
    and a strict cheapest-to-deliver margin near the origin).
    """
    m = int(rng.integers(m_lo, m_hi))
    atoms = np.sort(rng.uniform(0.05, 3.0, size=m))
    atoms[0] = rng.uniform(0.02, 0.25)
    atoms[-1] = rng.uniform(2.4, 3.5)
    weights = rng.dirichlet(np.ones(m))
    atoms = atoms / np.dot(weights, atoms)
    return atoms, weights


def price_puts(atoms, weights, strikes):
    return np.array([np.dot(weights, np.maximum(k - atoms, 0.0)) for k in strikes])


def random_consistent_chain(
    rng, max_strikes=8, forward=1.0, discount=1.0, maturity=1.0
) -> NormalizedChain:
    """Chain priced under a random atomic law: consistent by construction,
    with n_min = 0 and no strike at intrinsic value."""
    atoms, weights = atomic_law(rng)
    lo, hi = atoms[0] * 1.10, atoms[-1] * 0.90
    n = int(rng.integers(1, max_strikes + 1))
    ks = np.sort(rng.uniform(lo, hi, size=n))
    while np.any(np.diff(ks) < 1e-3 * (hi - lo)):
        ks = np.sort(rng.uniform(lo, hi, size=n))
    ps = price_puts(atoms, weights, ks)
    chain = OptionChain(
        maturity=maturity,
        discount_factor=discount,
        forward=forward,
        strikes=ks * forward,
        put_prices=ps * discount * forward,
    )
    return normalize(chain)


def lognormal_chain(n, sigma=0.2, lo=0.5, hi=2.0) -> NormalizedChain:
    """Log-spaced strikes priced under the mean-1 lognormal with volatility sigma."""
    ks = np.geomspace(lo, hi, n)
    d1 = (np.log(1.0 / ks) + 0.5 * sigma**2) / sigma
    d2 = d1 - sigma
    ps = ks * norm.cdf(-d2) - norm.cdf(-d1)
    chain = OptionChain(
        maturity=1.0, discount_factor=1.0, forward=1.0, strikes=ks, put_prices=ps
    )
    return normalize(chain)


def single_put_chain(price, strike=1.2, forward=1.0, discount=1.0) -> NormalizedChain:
    chain = OptionChain(
        maturity=1.0,
        discount_factor=discount,
        forward=forward,
        strikes=np.array([strike * forward]),
        put_prices=np.array([price * discount * forward]),
    )
    return normalize(chain)
