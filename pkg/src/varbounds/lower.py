"""Most expensive sub-replicating portfolio and the lower price bound.

The dual search runs over finitely supported candidate laws: at most one
atom per inter-strike interval plus one beyond the last strike.  Such a
measure is parametrized by the cumulative weights ``zeta_i`` on [0, k_i);
consistency with the quoted puts confines ``zeta_i`` to an interval ``A_i``
of divided differences, and the atom positions follow from repricing the
puts.  The objective separates over consecutive pairs, so a backwards
recursion over a discretized policy grid solves it; local refinement plus a
coordinate polish push the optimum to near machine precision.

A dense-grid linear program over the same instruments serves as an
independent primal oracle, and doubles as the fallback route for chains the
recursion does not support (free puts below, or priced-at-intrinsic strikes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog, minimize_scalar, root

from .chain import NormalizedChain, validate_puts
from .payoff import ConvexPayoff, check_c1

_ZERO_W = 1e-15          # cumulative-weight increments below this carry no atom
_MIN_ATOM_WEIGHT = 1e-11  # reported measures drop dust atoms below this weight
_ATOM_BOX_TOL = 1e-10    # atom may exceed its interval by at most this
_FORWARD_TOL = 1e-8
_DOMINATION_TOL = 1e-8
_CONTACT_TOL = 1e-8
DEFAULT_GRID = 200


class UnsupportedChain(RuntimeError):
    """Chain outside the recursion's domain (n_min > 0 or finite n_max)."""


class C1Violation(RuntimeError):
    """Payoff unbounded at the origin while the chain permits all near-zero mass at 0."""


class ForwardViolation(RuntimeError):
    """Policy measure fails the unit-forward constraint beyond tolerance."""


class DegeneratePolicy(RuntimeError):
    """Policy produces an atom outside its interval; the policy is infeasible."""


class ReconstructionFailure(RuntimeError):
    """Neither the tangent construction nor the grid LP met the tolerances."""


class Unbounded(RuntimeError):
    """The grid LP is unbounded; the price bound is infinite."""


@dataclass(frozen=True)
class AtomicMeasure:
    """Finitely supported candidate law.

    ``mean_at_infinity`` is the mean mass carried off by the vanishing tail
    atom of a boundary policy (cumulative weight exactly 1): the weights then
    sum to one but the finite atoms alone under-shoot the unit forward by
    exactly this amount.  Zero for proper measures.
    """

    atoms: np.ndarray
    weights: np.ndarray
    mean_at_infinity: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "atoms", np.asarray(self.atoms, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    def integrate(self, payoff: ConvexPayoff) -> float:
        """Sum of weight * payoff(atom); the escaped mean carries no payoff here."""
        vals = payoff.value(self.atoms)
        return float(np.dot(self.weights, vals))

    def mean(self) -> float:
        return float(np.dot(self.weights, self.atoms))

    def put_value(self, strike: float) -> float:
        return float(np.dot(self.weights, np.maximum(strike - self.atoms, 0.0)))

    def check(self, nchain: NormalizedChain, *, weight_tol=1e-10, moment_tol=1e-8) -> list[str]:
        """Return the list of violated invariants (empty when valid)."""
        problems = []
        if np.any(self.atoms < -1e-14):
            problems.append("negative atom position")
        if np.any(self.weights < -1e-12):
            problems.append("negative weight")
        if abs(self.weights.sum() - 1.0) > weight_tol:
            problems.append(f"weights sum to {self.weights.sum():.12g}")
        if abs(self.mean() + self.mean_at_infinity - 1.0) > moment_tol:
            problems.append(f"forward constraint off by {self.mean() + self.mean_at_infinity - 1.0:.3g}")
        for i in range(1, nchain.n + 1):
            err = self.put_value(nchain.k[i]) - nchain.p[i]
            if abs(err) > moment_tol:
                problems.append(f"put {i} repriced off by {err:.3g}")
        # One atom per inter-strike interval; atoms sitting exactly on a
        # strike occupy the boundary and do not crowd either side.
        if self.atoms.size:
            off_strike = np.min(np.abs(self.atoms[:, None] - nchain.k[None, :]), axis=1) > 1e-12
            intervals = np.searchsorted(nchain.k, self.atoms[off_strike], side="right")
            if np.unique(intervals).size != intervals.size:
                problems.append("more than one atom in an inter-strike interval")
        return problems

    def assert_valid(self, nchain: NormalizedChain) -> None:
        problems = self.check(nchain)
        if problems:
            raise ForwardViolation("; ".join(problems))

    def to_dict(self) -> dict:
        return {
            "atoms": self.atoms.tolist(),
            "weights": self.weights.tolist(),
            "mean_at_infinity": self.mean_at_infinity,
        }


@dataclass(frozen=True)
class HedgePortfolio:
    """Static cash / forward / put position, evaluable as a piecewise-linear payoff.

    ``strikes`` are normalized when ``normalized`` is set, currency otherwise.
    """

    cash: float
    forward: float
    puts: np.ndarray
    strikes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "puts", np.asarray(self.puts, dtype=float))
        object.__setattr__(self, "strikes", np.asarray(self.strikes, dtype=float))

    def payoff(self, x):
        """Terminal value as a function of the (normalized) asset level."""
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = self.cash + self.forward * arr
        if self.puts.size:
            out = out + np.maximum(self.strikes[None, :] - arr[:, None], 0.0) @ self.puts
        return float(out[0]) if np.ndim(x) == 0 else out

    def setup_cost(self, nchain: NormalizedChain) -> float:
        if self.normalized:
            return float(self.cash + self.forward + np.dot(self.puts, nchain.p[1:]))
        prices = nchain.p[1:] * nchain.discount_factor * nchain.forward
        spot = nchain.discount_factor * nchain.forward
        return float(np.dot(self.puts, prices) + self.forward * spot + self.cash)

    def tail_slope(self) -> float:
        """Slope of the payoff beyond the last strike (all puts dead)."""
        return float(self.forward)

    def denormalize(self, nchain: NormalizedChain) -> "HedgePortfolio":
        """Currency-unit twin under the no-dividend convention (share factor 1)."""
        if not self.normalized:
            return self
        f, d = nchain.forward, nchain.discount_factor
        return HedgePortfolio(
            cash=self.cash * f * d,
            forward=self.forward,
            puts=self.puts,
            strikes=self.strikes * f,
            normalized=False,
        )

    def to_dict(self) -> dict:
        return {
            "cash": self.cash,
            "forward": self.forward,
            "puts": self.puts.tolist(),
            "strikes": self.strikes.tolist(),
            "normalized": self.normalized,
        }


@dataclass(frozen=True)
class DualSolution:
    value: float
    measure: AtomicMeasure
    policy: np.ndarray = field(default_factory=lambda: np.empty(0))


def feasible_policy_sets(nchain: NormalizedChain) -> np.ndarray:
    """Closed intervals A_i for the cumulative weights, as an (n, 2) array.

    A_i runs from the chain slope into strike i to the slope out of it; the
    final interval is capped at total mass 1.  Requires a consistent chain
    with n_min = 0 and n_max infinite; other chains go through the grid LP.
    """
    if not validate_puts(nchain).is_consistent:
        raise ValueError("feasible policy sets need a consistent chain")
    if nchain.n_min != 0 or math.isfinite(nchain.n_max):
        raise UnsupportedChain(
            f"policy recursion needs n_min = 0 and unbounded n_max, got "
            f"({nchain.n_min}, {nchain.n_max})"
        )
    s = nchain.slopes
    lo = s.copy()
    hi = np.append(s[1:], 1.0)
    return np.column_stack([lo, hi])


def atoms_from_policy(
    nchain: NormalizedChain, zeta, *, allow_mean_escape: bool = False
) -> AtomicMeasure:
    """Measure determined by a cumulative-weight policy.

    Intervals with equal consecutive weights contribute no atom.  When the
    final cumulative weight is exactly 1 the tail atom is omitted; the
    finite atoms then cannot reprice the forward (the deficit equals the
    synthetic call value at k_n), which raises :class:`ForwardViolation`
    unless ``allow_mean_escape`` records the deficit instead.
    """
    zeta = np.asarray(zeta, dtype=float)
    k, p = nchain.k, nchain.p
    n = nchain.n
    if zeta.shape != (n,):
        raise ValueError(f"policy must have length {n}")
    atoms: list[float] = []
    weights: list[float] = []
    prev = 0.0
    for i in range(1, n + 1):
        z = float(zeta[i - 1])
        w = z - prev
        if w < -1e-12:
            raise DegeneratePolicy(f"cumulative weights decrease at index {i}")
        if w > _MIN_ATOM_WEIGHT:
            chi = k[i] + (prev * (k[i] - k[i - 1]) - (p[i] - p[i - 1])) / w
            if chi < k[i - 1] - _ATOM_BOX_TOL or chi > k[i] + _ATOM_BOX_TOL:
                raise DegeneratePolicy(
                    f"atom {chi:.12g} escapes interval [{k[i - 1]:.12g}, {k[i]:.12g}]"
                )
            atoms.append(float(np.clip(chi, max(k[i - 1], 0.0), k[i])))
            weights.append(w)
        prev = z
    tail_weight = 1.0 - prev
    escape = 0.0
    if tail_weight > _MIN_ATOM_WEIGHT:
        chi = k[n] + (1.0 + p[n] - k[n]) / tail_weight
        atoms.append(float(chi))
        weights.append(tail_weight)
    else:
        escape = 1.0 - float(np.dot(weights, atoms))
        expected = 1.0 + p[n] - k[n]
        if abs(escape - expected) > _FORWARD_TOL:
            raise ForwardViolation(
                f"boundary policy mean deficit {escape:.12g} != call value {expected:.12g}"
            )
        if not allow_mean_escape and abs(escape) > _FORWARD_TOL:
            raise ForwardViolation(
                f"finite atoms misprice the forward by {escape:.12g}; "
                "pass allow_mean_escape=True to accept the boundary-policy limit"
            )
        if not allow_mean_escape:
            escape = 0.0
    merged = _merge_atoms(nchain, np.asarray(atoms), np.asarray(weights))
    return AtomicMeasure(merged.atoms, merged.weights, mean_at_infinity=escape)


# ---------------------------------------------------------------------------
# policy objective


def _tail_constant(nchain: NormalizedChain) -> float:
    return float(1.0 + nchain.p[-1] - nchain.k[-1])


def _segment_value(nchain, payoff, i: int, a: float, b: float) -> float:
    w = b - a
    if w <= _ZERO_W:
        return 0.0 if w >= -1e-12 else math.inf
    k, p = nchain.k, nchain.p
    chi = k[i] + (a * (k[i] - k[i - 1]) - (p[i] - p[i - 1])) / w
    chi = min(max(chi, max(k[i - 1], 0.0)), k[i])
    return w * float(payoff.value(chi))


def _tail_value(nchain, payoff, z: float) -> float:
    w = 1.0 - z
    c = _tail_constant(nchain)
    if w <= _ZERO_W:
        gamma = payoff.asymptotic_slope
        # Analytic limit of the vanishing tail atom: avoids dividing by 1 - z.
        return gamma * c if math.isfinite(gamma) else math.inf
    return w * float(payoff.value(nchain.k[-1] + c / w))


def policy_objective(nchain: NormalizedChain, payoff: ConvexPayoff, zeta) -> float:
    """Exact objective of a policy, with the analytic boundary limit for the tail."""
    zeta = np.asarray(zeta, dtype=float)
    total = 0.0
    prev = 0.0
    for i in range(1, nchain.n + 1):
        total += _segment_value(nchain, payoff, i, prev, float(zeta[i - 1]))
        prev = float(zeta[i - 1])
    return total + _tail_value(nchain, payoff, prev)


def _segment_matrix(nchain, payoff, i: int, za: np.ndarray, zb: np.ndarray) -> np.ndarray:
    k, p = nchain.k, nchain.p
    dk = k[i] - k[i - 1]
    dp = p[i] - p[i - 1]
    a = za[:, None]
    b = zb[None, :]
    d = b - a
    pos = d > _ZERO_W
    safe = np.where(pos, d, 1.0)
    with np.errstate(all="ignore"):
        chi = k[i] + (a * dk - dp) / safe
        chi = np.clip(chi, max(k[i - 1], 0.0), k[i])
        vals = payoff.value(chi)
        term = np.where(pos, d * vals, np.where(np.abs(d) <= _ZERO_W, 0.0, np.inf))
    return term


def _tail_vector(nchain, payoff, z: np.ndarray) -> np.ndarray:
    c = _tail_constant(nchain)
    w = 1.0 - z
    pos = w > _ZERO_W
    safe = np.where(pos, w, 1.0)
    with np.errstate(all="ignore"):
        vals = payoff.value(nchain.k[-1] + c / safe)
        out = np.where(pos, w * vals, 0.0)
    gamma = payoff.asymptotic_slope
    boundary = gamma * c if math.isfinite(gamma) else math.inf
    return np.where(pos, out, boundary)


def _solve_on_grids(nchain, payoff, grids: list[np.ndarray]) -> tuple[float, np.ndarray]:
    n = nchain.n
    V = _tail_vector(nchain, payoff, grids[n - 1])
    choices: list[np.ndarray] = [np.empty(0, dtype=int)] * n
    for j in range(n - 1, 0, -1):
        M = _segment_matrix(nchain, payoff, j + 1, grids[j - 1], grids[j]) + V[None, :]
        idx = np.argmin(M, axis=1)
        V = M[np.arange(M.shape[0]), idx]
        choices[j] = idx
    first = _segment_matrix(nchain, payoff, 1, np.zeros(1), grids[0])[0] + V
    i = int(np.argmin(first))
    value = float(first[i])
    policy = np.empty(n)
    policy[0] = grids[0][i]
    for j in range(1, n):
        i = int(choices[j][i])
        policy[j] = grids[j][i]
    return value, policy


def _refined_grids(sets, policy, coarse_cells, g):
    grids = []
    for (lo, hi), z, cell in zip(sets, policy, coarse_cells):
        a = max(lo, z - cell)
        b = min(hi, z + cell)
        pts = np.linspace(a, b, g)
        grids.append(np.union1d(pts, [z, a, b]))
    return grids


def _chi_atom(nchain, i: int, a: float, b: float) -> float:
    """Atom of interval i for cumulative weights (a, b); b > a assumed."""
    k, p = nchain.k, nchain.p
    num = a * (k[i] - k[i - 1]) - (p[i] - p[i - 1])
    w = b - a
    if w <= _ZERO_W:
        return float(k[i])
    return float(k[i] + num / w)


def _tangent_at(payoff, chi: float, node: float) -> float:
    with np.errstate(all="ignore"):
        return float(payoff.value(chi)) + float(payoff.slope(chi)) * (node - chi)


def _local_objective(nchain, payoff, zeta, i):
    left = 0.0 if i == 1 else float(zeta[i - 2])
    if i < nchain.n:
        right = float(zeta[i])
        return lambda z: _segment_value(nchain, payoff, i, left, z) + _segment_value(
            nchain, payoff, i + 1, z, right
        )
    return lambda z: _segment_value(nchain, payoff, i, left, z) + _tail_value(nchain, payoff, z)


def _local_slope(nchain, payoff, zeta, i):
    """d/dz of the local objective: the tangent-value mismatch at strike i.

    The partial derivative of the policy objective in the i-th cumulative
    weight is T_i(k_i) - T_{i+1}(k_i), the gap at strike k_i between the
    tangents at the atoms of intervals i and i+1 (the tail atom for i = n).
    Stationarity is exactly tangent-line continuity at the strike.
    """
    k = nchain.k
    n = nchain.n
    left = 0.0 if i == 1 else float(zeta[i - 2])
    node = float(k[i])

    def slope(z: float) -> float:
        chi_i = _chi_atom(nchain, i, left, z)
        own = _tangent_at(payoff, chi_i, node)
        if i < n:
            chi_next = _chi_atom(nchain, i + 1, z, float(zeta[i]))
            other = _tangent_at(payoff, chi_next, node)
        else:
            w = 1.0 - z
            if w <= _ZERO_W:
                other = _tangent_at(payoff, 1e12 * max(node, 1.0), node)
            else:
                chi_next = k[n] + _tail_constant(nchain) / w
                other = _tangent_at(payoff, chi_next, node)
        return own - other

    return slope


def _brentq(fn, lo: float, hi: float) -> float:
    from scipy.optimize import brentq

    return float(brentq(fn, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200))


def _coordinate_polish(nchain, payoff, sets, policy, *, sweeps=30):
    """Coordinate descent to the first-order conditions.

    Each sweep sets every cumulative weight to the root of its tangent
    mismatch (bracketed inside its interval), falling back to the better
    endpoint; roots are resolved to machine precision, so tangent-based
    portfolio reconstruction meets its contact tolerance afterwards.
    """
    n = nchain.n
    zeta = np.asarray(policy, dtype=float).copy()
    best = policy_objective(nchain, payoff, zeta)
    for _ in range(sweeps):
        moved = 0.0
        for i in range(1, n + 1):
            lo, hi = float(sets[i - 1][0]), float(sets[i - 1][1])
            width = hi - lo
            if width <= 1e-14:
                continue
            local = _local_objective(nchain, payoff, zeta, i)
            slope = _local_slope(nchain, payoff, zeta, i)
            eps = 1e-12 * max(width, 1.0)
            zl, zr = lo + eps, hi - eps
            candidates = [(local(zeta[i - 1]), float(zeta[i - 1])), (local(lo), lo), (local(hi), hi)]
            with np.errstate(all="ignore"):
                gl, gr = slope(zl), slope(zr)
            if math.isfinite(gl) and math.isfinite(gr) and gl < 0.0 < gr:
                root = _brentq(slope, zl, zr)
                candidates.append((local(root), root))
            else:
                res = minimize_scalar(local, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
                x = float(res.x)
                with np.errstate(all="ignore"):
                    ga, gb = slope(max(zl, x - 1e-5 * width)), slope(min(zr, x + 1e-5 * width))
                if math.isfinite(ga) and math.isfinite(gb) and ga < 0.0 < gb:
                    x = _brentq(slope, max(zl, x - 1e-5 * width), min(zr, x + 1e-5 * width))
                candidates.append((local(x), x))
            fval, z = min(candidates, key=lambda t: (t[0], t[1]))
            if math.isfinite(fval) and z != zeta[i - 1]:
                moved = max(moved, abs(z - zeta[i - 1]))
                zeta[i - 1] = z
        if moved < 1e-14:
            break
    return policy_objective(nchain, payoff, zeta), zeta


def _mismatch_at(nchain, payoff, zeta, i: int) -> float:
    return _local_slope(nchain, payoff, zeta, i)(float(zeta[i - 1]))


def _stationarity_polish(nchain, payoff, sets, policy):
    """Joint Newton solve of the tangent-continuity system on interior coordinates.

    Coordinate descent zigzags when an atom carries tiny weight (its position
    is hypersensitive to the cumulative weights), leaving tangent mismatches
    far above the contact tolerance; solving the coupled stationarity system
    collapses that error to machine precision.  Endpoint-pinned coordinates
    stay fixed; the result is accepted only if the objective does not rise.
    """
    n = nchain.n
    zeta = np.asarray(policy, dtype=float).copy()
    best = policy_objective(nchain, payoff, zeta)
    lo = sets[:, 0]
    hi = sets[:, 1]
    for _ in range(3):
        pad = 1e-9 * np.maximum(hi - lo, 1.0)
        interior = np.flatnonzero((zeta > lo + pad) & (zeta < hi - pad))
        if interior.size == 0:
            break

        def system(zvec):
            full = zeta.copy()
            full[interior] = np.clip(zvec, lo[interior], hi[interior])
            out = np.empty(interior.size)
            for j, idx in enumerate(interior):
                with np.errstate(all="ignore"):
                    out[j] = _mismatch_at(nchain, payoff, full, idx + 1)
            return np.where(np.isfinite(out), out, 1e6)

        try:
            res = root(system, zeta[interior], method="hybr", tol=1e-13)
        except Exception:
            break
        candidate = zeta.copy()
        candidate[interior] = np.clip(res.x, lo[interior], hi[interior])
        value = policy_objective(nchain, payoff, candidate)
        if not math.isfinite(value) or value > best + 1e-11 * (1.0 + abs(best)):
            break
        moved = float(np.max(np.abs(candidate - zeta)))
        zeta = candidate
        best = min(best, value)
        if moved < 1e-13:
            break
    return best, zeta


def dp_lower_bound(
    nchain: NormalizedChain, payoff: ConvexPayoff, grid: int = DEFAULT_GRID
) -> DualSolution:
    """Lower price bound by backwards recursion over the policy intervals.

    Two-pass search: a coarse grid of ``grid`` points per interval, then
    local refinement around the incumbent (window of two coarse cells, same
    point count) until the value stalls below 1e-7, then a coordinate polish.
    The returned value includes the analytic boundary-limit tail term; the
    measure records any escaped forward mass in ``mean_at_infinity``.
    """
    sets = feasible_policy_sets(nchain)
    if not check_c1(nchain, payoff):
        raise C1Violation(
            "payoff unbounded at the origin and p_2 <= (k_2/k_1) p_1: "
            "the lower bound is infinite"
        )
    g = max(int(grid), 8)
    grids = [np.union1d(np.linspace(lo, hi, g), [lo, hi]) for lo, hi in sets]
    value, policy = _solve_on_grids(nchain, payoff, grids)
    cells = np.array([2.0 * (hi - lo) / max(g - 1, 1) for lo, hi in sets])
    for _ in range(40):
        grids = _refined_grids(sets, policy, cells, g)
        new_value, policy = _solve_on_grids(nchain, payoff, grids)
        cells = cells / (g / 4.0)
        done = value - new_value < 1e-7
        value = min(value, new_value)
        if done:
            break
    value, policy = _coordinate_polish(nchain, payoff, sets, policy)
    value, policy = _stationarity_polish(nchain, payoff, sets, policy)
    measure = atoms_from_policy(nchain, policy, allow_mean_escape=True)
    gamma = payoff.asymptotic_slope
    tail_term = gamma * measure.mean_at_infinity if measure.mean_at_infinity > 0.0 else 0.0
    exact = measure.integrate(payoff) + tail_term
    return DualSolution(value=float(exact), measure=measure, policy=policy)


# ---------------------------------------------------------------------------
# verification helpers


def verification_grid(
    nchain: NormalizedChain, payoff: ConvexPayoff | None = None, n_points: int = 10_000, span: float = 1000.0
) -> np.ndarray:
    """Log-spaced domination-check grid including strikes and the corridor barrier."""
    lo = min(nchain.k[1], 1.0) * 1e-4
    hi = span * nchain.k[-1]
    pts = np.geomspace(lo, hi, n_points)
    extra = [nchain.k[1:]]
    if payoff is not None and payoff.barrier is not None:
        extra.append(np.asarray([payoff.barrier]))
    return np.union1d(pts, np.concatenate(extra))


def dominates_below(
    portfolio: HedgePortfolio, payoff: ConvexPayoff, grid: np.ndarray, tol: float = _DOMINATION_TOL
) -> bool:
    """True when the portfolio payoff stays under the target payoff, tail included."""
    gamma = payoff.asymptotic_slope
    phi = portfolio.tail_slope()
    if math.isfinite(gamma) and phi > gamma + 1e-12:
        return False
    with np.errstate(all="ignore"):
        h = portfolio.payoff(grid)
        lam = payoff.value(grid)
    if not bool(np.all(h <= lam + tol)):
        return False
    far = 1e7 * float(portfolio.strikes[-1]) if portfolio.strikes.size else 1e7
    with np.errstate(all="ignore"):
        lam_far = float(payoff.value(far))
    return bool(portfolio.payoff(far) <= lam_far + max(tol, 1e-10 * far))


# ---------------------------------------------------------------------------
# subhedge reconstruction


def _max_flat_tail_slope(nchain, payoff, z_n: float, lo_slope: float) -> float:
    """Largest tail slope in [lo_slope, 0] keeping the ray under the payoff."""
    kn = float(nchain.k[-1])
    xs = np.geomspace(kn, 1e8 * max(kn, 1.0), 2000)

    def admissible(s):
        with np.errstate(all="ignore"):
            return bool(np.all(z_n + s * (xs - kn) <= payoff.value(xs) + _DOMINATION_TOL))

    if admissible(0.0):
        return 0.0
    lo, hi = lo_slope, 0.0
    if not admissible(lo):
        return lo
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _portfolio_from_nodes(nchain, node_values: np.ndarray, phi: float) -> HedgePortfolio:
    # slopes has length n + 1: s_1..s_n on the inter-strike intervals, then
    # phi beyond k_n; the put weight at strike i is the slope change there.
    k = nchain.k
    slopes = np.append(np.diff(node_values) / np.diff(k), phi)
    pi = slopes[1:] - slopes[:-1]
    cash = node_values[-1] - phi * k[-1]
    return HedgePortfolio(cash=float(cash), forward=float(phi), puts=pi, strikes=k[1:].copy())


def _tangent_construction(nchain, payoff, measure) -> HedgePortfolio | None:
    k = nchain.k
    n = nchain.n
    candidates: list[list[float]] = [[] for _ in range(n + 1)]
    intervals = np.searchsorted(k, measure.atoms, side="right")
    phi = None
    for chi, w, iv in zip(measure.atoms, measure.weights, intervals):
        if w <= _ZERO_W:
            continue
        v = float(payoff.value(chi))
        g = float(payoff.slope(chi))
        if not (math.isfinite(v) and math.isfinite(g)):
            return None
        if iv > n:  # tail atom: its tangent is the portfolio beyond k_n
            phi = g
            candidates[n].append(v + g * (k[n] - chi))
        else:
            candidates[iv - 1].append(v + g * (k[iv - 1] - chi))
            candidates[iv].append(v + g * (k[iv] - chi))
    if phi is None:
        # Boundary policy: a flat tail prices the portfolio at the measure
        # integral; fall back to the steepest interior tangent if flat fails.
        last = [float(payoff.slope(a)) for a, w in zip(measure.atoms, measure.weights) if w > _ZERO_W]
        if not candidates[n] or not last:
            return None
        z_n_guess = min(candidates[n])
        phi = _max_flat_tail_slope(nchain, payoff, z_n_guess, min(last))
    known_idx = [i for i, c in enumerate(candidates) if c]
    if 0 not in known_idx:
        return None
    known_x = k[known_idx]
    known_v = np.array([min(candidates[i]) for i in known_idx])
    node_values = np.interp(k, known_x, known_v)
    return _portfolio_from_nodes(nchain, node_values, float(phi))


def _subhedge_checks(nchain, payoff, measure, portfolio, *, require_cost=True) -> bool:
    grid = verification_grid(nchain, payoff)
    if not dominates_below(portfolio, payoff, grid):
        return False
    live = measure.weights > _ZERO_W
    atoms = measure.atoms[live]
    if atoms.size:
        gap = np.abs(portfolio.payoff(atoms) - payoff.value(atoms))
        if np.any(gap > _CONTACT_TOL):
            return False
    if require_cost:
        cost = portfolio.setup_cost(nchain)
        target = measure.integrate(payoff)
        if measure.mean_at_infinity > 0.0 and portfolio.tail_slope() < -1e-12:
            # Flat tail was inadmissible; the cost legitimately sits below the
            # measure integral.
            return cost <= target + _CONTACT_TOL
        if abs(cost - target) > max(_CONTACT_TOL, 1e-10 * abs(target)):
            return False
    return True


def _cutting_plane_lp(nchain, payoff, grid, *, equality_atoms=None, fix_forward=None, rounds=8):
    """Grid LP with cutting-plane rounds against the fine verification grid.

    The LP binds only at its own grid points, so its solution can overshoot
    the payoff between them; violated points from the fine verification grid
    are appended and the LP re-solved until domination holds there.
    """
    fine = verification_grid(nchain, payoff)
    if math.isfinite(nchain.n_max):
        fine = fine[(fine >= nchain.k[nchain.n_min]) & (fine <= nchain.k[nchain.top_index])]
    elif nchain.n_min > 0:
        fine = fine[fine >= nchain.k[nchain.n_min]]
    with np.errstate(all="ignore"):
        lam_fine = payoff.value(fine)
    result = None
    for _ in range(rounds):
        result = solve_grid_lp(
            nchain, payoff, grid, equality_atoms=equality_atoms, fix_forward=fix_forward
        )
        with np.errstate(all="ignore"):
            excess = result[1].payoff(fine) - lam_fine
        violated = fine[excess > 0.25 * _DOMINATION_TOL]
        if violated.size == 0:
            return result
        grid = np.union1d(grid, violated)
    return result


def _subhedge_via_lp(nchain, payoff, measure) -> HedgePortfolio | None:
    grid = build_lp_grid(nchain, payoff, extra=measure.atoms)
    live = measure.weights > _ZERO_W
    atoms = measure.atoms[live]
    fix_forward = 0.0 if measure.mean_at_infinity > 0.0 else None
    try:
        _, portfolio, _ = _cutting_plane_lp(
            nchain, payoff, grid, equality_atoms=atoms, fix_forward=fix_forward
        )
    except (Unbounded, RuntimeError):
        return None
    return portfolio


def reconstruct_subhedge(
    nchain: NormalizedChain, payoff: ConvexPayoff, measure: AtomicMeasure
) -> HedgePortfolio:
    """Piecewise-linear portfolio touching the payoff at every atom from below.

    Primary construction: on each interval holding an atom, the tangent line
    at the atom; atom-free intervals are bridged by interpolating the known
    node values; beyond the last strike, the tangent at the tail atom (flat
    for boundary policies, so the cost equals the measure integral).  Falls
    back to an equality-constrained grid LP when any tolerance fails.
    """
    portfolio = _tangent_construction(nchain, payoff, measure)
    if portfolio is not None and _subhedge_checks(nchain, payoff, measure, portfolio):
        return portfolio
    portfolio = _subhedge_via_lp(nchain, payoff, measure)
    if portfolio is not None and _subhedge_checks(nchain, payoff, measure, portfolio):
        return portfolio
    raise ReconstructionFailure("subhedge construction failed domination/contact/cost checks")


def tighten_tail(
    nchain: NormalizedChain, payoff: ConvexPayoff, portfolio: HedgePortfolio, contact_atoms=None
) -> HedgePortfolio:
    """Add synthetic calls at the last strike until the tail slope reaches gamma.

    Uses put-call parity (call = put + forward - k_n cash).  Raises the setup
    cost by theta times the synthetic call value; if the lifted payoff pokes
    above the target anywhere, theta is reduced by bisection to the largest
    admissible value.  Pass the dual measure's atoms as ``contact_atoms`` so
    the lift respects exact touching points.
    """
    gamma = payoff.asymptotic_slope
    if not math.isfinite(gamma):
        return portfolio
    theta = gamma - portfolio.tail_slope()
    if theta <= 1e-14:
        return portfolio
    kn = float(nchain.k[-1])
    grid = verification_grid(nchain, payoff)
    if contact_atoms is not None and len(contact_atoms):
        grid = np.union1d(grid, np.asarray(contact_atoms, dtype=float))

    def lifted(t: float) -> HedgePortfolio:
        puts = portfolio.puts.copy()
        puts[-1] += t
        return replace(portfolio, cash=portfolio.cash - t * kn, forward=portfolio.forward + t, puts=puts)

    candidate = lifted(theta)
    if dominates_below(candidate, payoff, grid):
        return candidate
    lo, hi = 0.0, theta
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if dominates_below(lifted(mid), payoff, grid):
            lo = mid
        else:
            hi = mid
    return lifted(lo)


# ---------------------------------------------------------------------------
# dense-grid LP oracle


def build_lp_grid(
    nchain: NormalizedChain,
    payoff: ConvexPayoff | None = None,
    n_points: int = 2048,
    extra=None,
) -> np.ndarray:
    """Log-spaced constraint grid for the finite LP, strikes and atoms included.

    Payoffs whose tail curvature moment converges approach their asymptote
    slowly, so the grid then reaches much further out; otherwise ten times
    the last strike suffices.
    """
    k = nchain.k
    lo = max(k[1] * 1e-3, 1e-4)
    if nchain.n_min > 0:
        lo = float(k[nchain.n_min])
    if math.isfinite(nchain.n_max):
        hi = float(k[nchain.top_index])
    else:
        mult = 10.0 if (payoff is None or payoff.tail_curvature_divergent) else 500.0
        hi = mult * float(k[-1])
    pieces = [k[1:][(k[1:] >= lo) & (k[1:] <= hi)]]
    if payoff is not None and payoff.barrier is not None and lo < payoff.barrier < hi:
        pieces.append(np.asarray([payoff.barrier]))
    if extra is not None:
        pts = np.asarray(extra, dtype=float)
        pts = pts[pts >= lo]
        if pts.size:
            hi = max(hi, 2.0 * float(pts.max()))
            pieces.append(pts)
    base = np.geomspace(lo, hi, int(n_points))
    return np.union1d(base, np.concatenate(pieces) if pieces else base)


def _instrument_matrix(nchain: NormalizedChain, x: np.ndarray) -> np.ndarray:
    cols = [np.ones_like(x), x]
    for i in range(1, nchain.n + 1):
        cols.append(np.maximum(nchain.k[i] - x, 0.0))
    return np.column_stack(cols)


def solve_grid_lp(
    nchain: NormalizedChain,
    payoff: ConvexPayoff,
    x_grid: np.ndarray,
    *,
    equality_atoms=None,
    fix_forward: float | None = None,
) -> tuple[float, HedgePortfolio, AtomicMeasure]:
    """Finite LP: maximize the setup cost of a portfolio kept under the payoff.

    Returns the optimum, the portfolio, and the measure read off the
    constraint multipliers (merged to one atom per inter-strike interval).
    """
    x = np.asarray(x_grid, dtype=float)
    with np.errstate(all="ignore"):
        lam = payoff.value(x)
    keep = np.isfinite(lam)
    x, lam = x[keep], lam[keep]
    if x.size < nchain.n + 2:
        raise RuntimeError("constraint grid too small after dropping infinite rows")
    A = _instrument_matrix(nchain, x)
    b = np.concatenate(([1.0, 1.0], nchain.p[1:]))
    A_eq = None
    b_eq = None
    rows = []
    vals = []
    if equality_atoms is not None and len(equality_atoms):
        atoms = np.asarray(equality_atoms, dtype=float)
        rows.append(_instrument_matrix(nchain, atoms))
        vals.append(np.asarray(payoff.value(atoms), dtype=float))
    if fix_forward is not None:
        row = np.zeros((1, nchain.n + 2))
        row[0, 1] = 1.0
        rows.append(row)
        vals.append(np.asarray([fix_forward]))
    if rows:
        A_eq = np.vstack(rows)
        b_eq = np.concatenate(vals)
    res = linprog(
        c=-b,
        A_ub=A,
        b_ub=lam,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=[(None, None)] * (nchain.n + 2),
        method="highs",
        options={
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    if res.status == 3:
        raise Unbounded("grid LP unbounded: the lower bound is infinite")
    if res.status != 0:
        raise RuntimeError(f"grid LP failed: {res.message}")
    y = res.x
    portfolio = HedgePortfolio(cash=float(y[0]), forward=float(y[1]), puts=y[2:], strikes=nchain.k[1:].copy())
    duals = -np.asarray(res.ineqlin.marginals)
    mask = duals > 1e-10
    measure = _merge_atoms(nchain, x[mask], duals[mask])
    return float(-res.fun), portfolio, measure


def _merge_atoms(nchain: NormalizedChain, atoms: np.ndarray, weights: np.ndarray) -> AtomicMeasure:
    """Replace all atoms within one inter-strike interval by their barycenter."""
    if atoms.size == 0:
        return AtomicMeasure(atoms, weights)
    idx = np.searchsorted(nchain.k, atoms, side="right")
    out_a, out_w = [], []
    for iv in np.unique(idx):
        sel = idx == iv
        w = weights[sel].sum()
        out_a.append(float(np.dot(atoms[sel], weights[sel]) / w))
        out_w.append(float(w))
    return AtomicMeasure(np.asarray(out_a), np.asarray(out_w))


def grid_lp_oracle(
    nchain: NormalizedChain, payoff: ConvexPayoff, x_grid: np.ndarray | None = None
) -> float:
    """Value of the dense-grid LP; the independent primal oracle."""
    if x_grid is None:
        x_grid = build_lp_grid(nchain, payoff)
    value, _, _ = solve_grid_lp(nchain, payoff, x_grid)
    return value


def lp_lower_bound(nchain: NormalizedChain, payoff: ConvexPayoff) -> tuple[float, HedgePortfolio, AtomicMeasure]:
    """Grid-LP route for chains the policy recursion does not support.

    Runs the cutting-plane loop so the reported portfolio sub-replicates on
    the fine verification grid, not just at its own constraint points.
    """
    if not check_c1(nchain, payoff):
        raise C1Violation(
            "payoff unbounded at the origin and p_2 <= (k_2/k_1) p_1: "
            "the lower bound is infinite"
        )
    grid = build_lp_grid(nchain, payoff)
    return _cutting_plane_lp(nchain, payoff, grid)
