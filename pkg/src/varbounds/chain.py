"""Put-option chain ingestion, normalization, and no-arbitrage validation.

Raw quotes arrive as strike/price pairs in currency units together with the
forward, discount factor and maturity.  Everything downstream works in
normalized units: strikes divided by the forward, prices divided by the
discounted forward.  The normalized chain carries the piecewise-linear
interpolant of the (strike, price) points and the two boundary indices that
delimit the strikes carrying information (below ``n_min`` puts are free,
from ``n_max`` on calls are free).
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

# Equality tolerance on normalized quantities.  Quotes arrive at fixed
# decimal precision, exact float equality is meaningless.
EQ_TOL = 1e-12


class ChainError(ValueError):
    """Raised when chain input violates basic sanity requirements."""


class ChainStatus(enum.Enum):
    CONSISTENT = "consistent"
    WEAK_ARBITRAGE = "weak_arbitrage"
    MODEL_INDEPENDENT_ARBITRAGE = "model_independent_arbitrage"


@dataclass(frozen=True)
class ChainVerdict:
    """Outcome of the put-chain validation, with a witness naming the violated condition."""

    status: ChainStatus
    witness: str = ""

    @property
    def is_consistent(self) -> bool:
        return self.status is ChainStatus.CONSISTENT

    def to_dict(self) -> dict:
        return {"status": self.status.value, "witness": self.witness}


@dataclass(frozen=True)
class OptionChain:
    """Co-maturing put quotes in currency units.

    Strikes must be strictly increasing and positive; two quotes at one
    strike are either redundant or an arbitrage and are rejected outright.
    """

    maturity: float
    discount_factor: float
    forward: float
    strikes: np.ndarray
    put_prices: np.ndarray

    def __post_init__(self):
        strikes = np.asarray(self.strikes, dtype=float)
        prices = np.asarray(self.put_prices, dtype=float)
        object.__setattr__(self, "strikes", strikes)
        object.__setattr__(self, "put_prices", prices)
        if not (self.maturity > 0.0):
            raise ChainError(f"maturity must be positive, got {self.maturity}")
        if not (0.0 < self.discount_factor <= 1.0):
            raise ChainError(f"discount factor must lie in (0, 1], got {self.discount_factor}")
        if not (self.forward > 0.0):
            raise ChainError(f"forward must be positive, got {self.forward}")
        if strikes.ndim != 1 or strikes.size < 1:
            raise ChainError("need at least one strike")
        if prices.shape != strikes.shape:
            raise ChainError("strikes and put_prices must have matching shapes")
        if not np.all(np.isfinite(strikes)) or not np.all(np.isfinite(prices)):
            raise ChainError("strikes and prices must be finite")
        if strikes[0] <= 0.0:
            raise ChainError("strikes must be positive")
        dk = np.diff(strikes)
        if np.any(dk == 0.0):
            raise ChainError("duplicate strikes are rejected")
        if np.any(dk < 0.0):
            raise ChainError("strikes must be strictly increasing")
        if np.any(prices < 0.0):
            raise ChainError("put prices must be nonnegative")

    @property
    def n(self) -> int:
        return int(self.strikes.size)


@dataclass(frozen=True)
class NormalizedChain:
    """Normalized put chain with the artificial (0, 0) point prepended.

    ``k[i] = K_i / F`` and ``p[i] = P_i / (D F)`` exactly; ``k[0] = p[0] = 0``.
    ``n_max`` is ``math.inf`` when no strike prices at intrinsic forward value.
    """

    k: np.ndarray
    p: np.ndarray
    forward: float
    discount_factor: float
    maturity: float
    n_min: int = field(default=0)
    n_max: float = field(default=math.inf)

    def __post_init__(self):
        object.__setattr__(self, "k", np.asarray(self.k, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))

    @property
    def n(self) -> int:
        return int(self.k.size - 1)

    @property
    def slopes(self) -> np.ndarray:
        """Divided differences (p_i - p_{i-1}) / (k_i - k_{i-1}), i = 1..n."""
        return np.diff(self.p) / np.diff(self.k)

    @property
    def top_index(self) -> int:
        """Last informative strike index, n ∧ n_max."""
        return min(self.n, int(self.n_max)) if math.isfinite(self.n_max) else self.n

    @property
    def call_at_top(self) -> float:
        """Normalized synthetic call price at k_n: c_n = p_n + 1 - k_n."""
        return float(self.p[-1] + 1.0 - self.k[-1])

    def r(self, x):
        """Linear interpolant of the (k_i, p_i) points, slope-1 right extension."""
        return interpolant_r(self, x)


def normalize(chain: OptionChain) -> NormalizedChain:
    """Move a raw chain to normalized units and locate the boundary indices."""
    k = np.concatenate(([0.0], chain.strikes / chain.forward))
    p = np.concatenate(([0.0], chain.put_prices / (chain.discount_factor * chain.forward)))
    n_min, n_max = _boundary_indices(k, p)
    return NormalizedChain(
        k=k,
        p=p,
        forward=chain.forward,
        discount_factor=chain.discount_factor,
        maturity=chain.maturity,
        n_min=n_min,
        n_max=n_max,
    )


def denormalize(nchain: NormalizedChain) -> OptionChain:
    """Inverse of :func:`normalize`; drops the artificial (0, 0) point."""
    return OptionChain(
        maturity=nchain.maturity,
        discount_factor=nchain.discount_factor,
        forward=nchain.forward,
        strikes=nchain.k[1:] * nchain.forward,
        put_prices=nchain.p[1:] * (nchain.discount_factor * nchain.forward),
    )


def _boundary_indices(k: np.ndarray, p: np.ndarray) -> tuple[int, float]:
    zero = np.flatnonzero(p <= EQ_TOL)
    n_min = int(zero.max()) if zero.size else 0
    intrinsic = np.flatnonzero(np.abs(p[1:] - (k[1:] - 1.0)) <= EQ_TOL)
    n_max = float(intrinsic.min() + 1) if intrinsic.size else math.inf
    return n_min, n_max


def boundary_indices(nchain: NormalizedChain) -> tuple[int, float]:
    """``(n_min, n_max)`` with ``math.inf`` marking an empty defining set for n_max."""
    return _boundary_indices(nchain.k, nchain.p)


def interpolant_r(nchain: NormalizedChain, x):
    """Piecewise-linear price interpolant on [0, k_n], extended right with slope 1.

    The slope-1 extension is the no-arbitrage ceiling for put prices beyond
    the last quoted strike; the upper-bound construction relies on it.
    """
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr < 0.0):
        raise ValueError("interpolant is defined for k >= 0 only")
    out = np.interp(arr, nchain.k, nchain.p)
    kn, pn = nchain.k[-1], nchain.p[-1]
    beyond = arr > kn
    if np.any(beyond):
        out = np.where(beyond, pn + (arr - kn), out)
    return float(out[0]) if scalar else out


def validate_puts(nchain: NormalizedChain) -> ChainVerdict:
    """Classify the chain as consistent, weak arbitrage, or model-independent arbitrage.

    A market model exists iff the interpolant is nonnegative, nondecreasing,
    convex, dominates the intrinsic value (k - 1)^+ and has left slope < 1 at
    the last informative strike.  The single borderline failure -- slope
    exactly 1 at k_n while no put prices at intrinsic value -- admits no
    model yet no model-free arbitrage either.
    """
    k, p = nchain.k, nchain.p
    s = nchain.slopes
    failures: list[str] = []

    if np.any(p < -EQ_TOL):
        failures.append("negative put price")
    if np.any(s < -EQ_TOL):
        failures.append("price interpolant decreasing (calendar of strikes mispriced)")
    if np.any(np.diff(s) < -EQ_TOL):
        failures.append("price interpolant not convex")
    intrinsic = np.maximum(k - 1.0, 0.0)
    if np.any(p < intrinsic - EQ_TOL):
        failures.append("price below intrinsic value (k - 1)^+")

    top = nchain.top_index
    slope_at_top = float(s[top - 1]) if top >= 1 else 0.0
    slope_ok = slope_at_top < 1.0 - EQ_TOL

    if not failures and slope_ok:
        return ChainVerdict(ChainStatus.CONSISTENT)

    if (
        not failures
        and not math.isfinite(nchain.n_max)
        and abs(slope_at_top - 1.0) <= EQ_TOL
    ):
        return ChainVerdict(
            ChainStatus.WEAK_ARBITRAGE,
            witness="left slope at k_n equals 1 while no put prices at intrinsic value",
        )

    if not slope_ok:
        failures.append(f"left slope {slope_at_top:.6g} at last informative strike not below 1")
    return ChainVerdict(ChainStatus.MODEL_INDEPENDENT_ARBITRAGE, witness="; ".join(failures))


def read_chain_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``strike,put_price`` rows; rows may arrive in any order.

    Raises :class:`ChainError` with the offending line number on parse errors.
    """
    strikes: list[float] = []
    prices: list[float] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ChainError(f"{path}: empty file")
        cols = [c.strip().lower() for c in header]
        if cols[:2] != ["strike", "put_price"]:
            raise ChainError(f"{path}:1: expected header 'strike,put_price', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise ChainError(f"{path}:{lineno}: expected two columns, got {len(row)}")
            try:
                strikes.append(float(row[0]))
                prices.append(float(row[1]))
            except ValueError as exc:
                raise ChainError(f"{path}:{lineno}: {exc}") from exc
    if not strikes:
        raise ChainError(f"{path}: no data rows")
    order = np.argsort(strikes)
    return np.asarray(strikes)[order], np.asarray(prices)[order]


def load_chain(path, forward: float, discount_factor: float, maturity: float) -> OptionChain:
    """Convenience wrapper: CSV quotes plus market parameters into an OptionChain."""
    strikes, prices = read_chain_csv(path)
    return OptionChain(
        maturity=maturity,
        discount_factor=discount_factor,
        forward=forward,
        strikes=strikes,
        put_prices=prices,
    )
