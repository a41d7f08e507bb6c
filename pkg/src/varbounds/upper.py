"""Cheapest super-replicating portfolio and the upper price bound.

The optimal superhedge is explicit: the linear interpolation of the payoff
through the informative strikes, extended to the right with the payoff's
asymptotic slope.  It exists iff both payoff tails are tame (finite value at
the origin, finite asymptotic slope), with each condition waived when the
chain itself confines the support on that side.  Infeasibility is an
expected, informative outcome (plain variance swaps have no finite upper
bound), so it is a typed result rather than an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import NormalizedChain
from .lower import AtomicMeasure, HedgePortfolio
from .payoff import ConvexPayoff


class NegativeWeight(ValueError):
    """Extremal-measure construction hit a negative weight: z too small."""


@dataclass(frozen=True)
class UpperBound:
    value: float
    portfolio: HedgePortfolio | None
    feasible: bool

    @classmethod
    def infeasible(cls) -> "UpperBound":
        return cls(value=math.inf, portfolio=None, feasible=False)


def _tame_tails(nchain: NormalizedChain, payoff: ConvexPayoff) -> bool:
    left_ok = nchain.n_min > 0 or math.isfinite(payoff.origin_value)
    right_ok = math.isfinite(nchain.n_max) or math.isfinite(payoff.asymptotic_slope)
    return left_ok and right_ok


def superhedge(nchain: NormalizedChain, payoff: ConvexPayoff) -> UpperBound:
    """Interpolation portfolio through (k_i, payoff(k_i)) on the informative strikes.

    Forward weight equals the asymptotic slope (when the right tail is
    unconstrained), cash makes the tail line pass through the last node, put
    weights are the second divided differences of the payoff at the strikes.
    The first chord continues below the lowest informative strike and the
    last slope continues above the highest, so no weight falls on redundant
    options.  Domination holds on all of (0, oo) when the payoff has tame
    tails, and on [k_{n_min}, oo) in the relaxed cases.
    """
    if not _tame_tails(nchain, payoff):
        return UpperBound.infeasible()
    k = nchain.k
    n = nchain.n
    first = nchain.n_min
    top = nchain.top_index
    xs = k[first : top + 1]
    vs = np.atleast_1d(np.asarray(payoff.value(xs), dtype=float))
    if xs[0] == 0.0:
        vs[0] = payoff.origin_value
    chord = np.diff(vs) / np.diff(xs)
    if math.isfinite(nchain.n_max):
        phi = float(chord[-1]) if chord.size else 0.0
    else:
        phi = float(payoff.asymptotic_slope)
    # slopes[m] is the payoff slope on (k_m, k_{m+1}) for m < n and beyond
    # k_n for m = n; put weight at strike i is the slope change across it.
    slopes = np.empty(n + 1)
    slopes[: first + 1] = chord[0] if chord.size else phi
    for j in range(first + 1, top):
        slopes[j] = chord[j - first]
    slopes[top:] = phi
    pi = slopes[1:] - slopes[:-1]
    cash = float(vs[-1] - phi * xs[-1])
    portfolio = HedgePortfolio(cash=cash, forward=phi, puts=pi, strikes=k[1:].copy())
    return UpperBound(value=portfolio.setup_cost(nchain), portfolio=portfolio, feasible=True)


def extremal_upper_measure(nchain: NormalizedChain, z: float) -> AtomicMeasure:
    """Measure with atoms on the informative strikes plus z, maximizing put values.

    Its put-value curve is the chain interpolant on the strikes, straight to
    (z, z - 1) and slope one beyond, so every quoted put reprices exactly and
    the mean is one.  Weights are the slope changes at the nodes; z below the
    admissibility threshold makes the weight at the last strike negative.
    """
    k, p = nchain.k, nchain.p
    first = nchain.n_min
    top = nchain.top_index
    xs = list(k[first : top + 1])
    vs = list(p[first : top + 1])
    if math.isfinite(nchain.n_max):
        if abs(z - k[top]) > 1e-9:
            raise ValueError(f"with a finite n_max the support cap must be k_{top} = {k[top]:.12g}")
    else:
        if z <= k[-1] + 1e-12:
            raise ValueError("support cap z must exceed the last strike")
        xs.append(float(z))
        vs.append(float(z - 1.0))
    xs_arr = np.asarray(xs)
    vs_arr = np.asarray(vs)
    inner = np.diff(vs_arr) / np.diff(xs_arr)
    slopes = np.concatenate(([0.0], inner, [1.0]))
    weights = np.diff(slopes)
    if np.any(weights < -1e-12):
        raise NegativeWeight(f"support cap z = {z:.6g} too small: negative weight in the moment system")
    keep = weights > 1e-14
    return AtomicMeasure(xs_arr[keep], np.clip(weights[keep], 0.0, None))


def dominates_above(
    portfolio: HedgePortfolio,
    payoff: ConvexPayoff,
    nchain: NormalizedChain,
    grid: np.ndarray,
    tol: float = 1e-10,
) -> bool:
    """Superhedge domination check on [k_{n_min}, oo) (all of (0, oo) when n_min = 0)."""
    start = nchain.k[nchain.n_min] if nchain.n_min > 0 else 0.0
    pts = grid[grid >= start]
    if math.isfinite(nchain.n_max):
        pts = pts[pts <= nchain.k[nchain.top_index]]
    with np.errstate(all="ignore"):
        h = portfolio.payoff(pts)
        lam = payoff.value(pts)
    return bool(np.all(h >= lam - tol))
