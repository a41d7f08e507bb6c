import math

import numpy as np
import pytest

from varbounds import (
    NegativeWeight,
    OptionChain,
    WeightSpec,
    dp_lower_bound,
    extremal_upper_measure,
    make_payoff,
    normalize,
    superhedge,
)
from varbounds.lower import verification_grid
from varbounds.upper import dominates_above
from conftest import random_consistent_chain, single_put_chain

VANILLA = make_payoff(WeightSpec.vanilla())
GAMMA = make_payoff(WeightSpec.gamma())
CORRIDOR_UP = make_payoff(WeightSpec.corridor_up(1.0))


def chain_of(strikes, prices):
    return normalize(
        OptionChain(
            maturity=1.0,
            discount_factor=1.0,
            forward=1.0,
            strikes=np.asarray(strikes, dtype=float),
            put_prices=np.asarray(prices, dtype=float),
        )
    )


class TestSuperhedge:
    def test_vanilla_infeasible(self):
        ub = superhedge(single_put_chain(0.4), VANILLA)
        assert not ub.feasible and math.isinf(ub.value)

    def test_gamma_infeasible(self):
        ub = superhedge(single_put_chain(0.4), GAMMA)
        assert not ub.feasible and math.isinf(ub.value)

    def test_affine_payoff_replicates_at_zero_cost(self):
        payoff = make_payoff(WeightSpec.custom(lambda x: x - 1.0, lambda x: np.ones_like(x)))
        nc = single_put_chain(0.4)
        ub = superhedge(nc, payoff)
        assert ub.feasible
        assert ub.value == pytest.approx(0.0, abs=1e-12)
        xs = np.array([0.2, 0.9, 1.2, 7.0])
        np.testing.assert_allclose(ub.portfolio.payoff(xs), xs - 1.0, atol=1e-12)

    def test_corridor_up_components(self):
        nc = single_put_chain(0.4)
        ub = superhedge(nc, CORRIDOR_UP)
        lam12 = CORRIDOR_UP.value(1.2)
        assert ub.portfolio.forward == pytest.approx(1.0)
        assert ub.portfolio.cash == pytest.approx(lam12 - 1.2)
        assert ub.portfolio.puts[0] == pytest.approx(1.0 - lam12 / 1.2)
        expected = (lam12 - 1.2) + 1.0 + (1.0 - lam12 / 1.2) * 0.4
        assert ub.value == pytest.approx(expected, abs=1e-12)

    def test_domination_everywhere_when_tails_tame(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            nc = random_consistent_chain(rng)
            ub = superhedge(nc, CORRIDOR_UP)
            assert ub.feasible
            grid = verification_grid(nc, CORRIDOR_UP)
            assert dominates_above(ub.portfolio, CORRIDOR_UP, nc, grid)

    def test_relaxed_origin_with_free_put(self):
        nc = chain_of([0.5, 1.2], [0.0, 0.4])
        assert nc.n_min == 1
        ub = superhedge(nc, VANILLA)
        assert ub.feasible
        grid = verification_grid(nc, VANILLA)
        assert dominates_above(ub.portfolio, VANILLA, nc, grid)

    def test_relaxed_tail_with_capped_support(self):
        nc = chain_of([0.8, 2.0], [0.1, 1.0])
        assert nc.n_max == 2
        ub = superhedge(nc, GAMMA)
        assert ub.feasible
        mu = extremal_upper_measure(nc, 2.0)
        assert ub.value == pytest.approx(mu.integrate(GAMMA), abs=1e-8)

    def test_lower_below_upper(self):
        rng = np.random.default_rng(16)
        for _ in range(8):
            nc = random_consistent_chain(rng)
            lower = dp_lower_bound(nc, CORRIDOR_UP).value
            upper = superhedge(nc, CORRIDOR_UP).value
            assert lower <= upper + 1e-6


class TestExtremalMeasure:
    def test_three_atom_system(self):
        nc = single_put_chain(0.4)
        mu = extremal_upper_measure(nc, 3.0)
        np.testing.assert_allclose(mu.atoms, [0.0, 1.2, 3.0])
        np.testing.assert_allclose(mu.weights, [1.0 / 3.0, 5.0 / 9.0, 1.0 / 9.0], atol=1e-12)
        assert mu.mean() == pytest.approx(1.0, abs=1e-12)
        assert mu.put_value(1.2) == pytest.approx(0.4, abs=1e-12)
        assert mu.check(nc) == []

    def test_capped_chain_supported_on_strikes(self):
        nc = chain_of([0.8, 2.0], [0.1, 1.0])
        mu = extremal_upper_measure(nc, 2.0)
        assert np.all(np.isin(np.round(mu.atoms, 12), np.round(nc.k, 12)))
        assert mu.check(nc) == []
        with pytest.raises(ValueError):
            extremal_upper_measure(nc, 3.0)

    def test_invariants_on_random_chains(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            nc = random_consistent_chain(rng)
            mu = extremal_upper_measure(nc, 5.0 * nc.k[-1])
            assert mu.check(nc) == []

    def test_negative_weight_when_z_small(self):
        nc = single_put_chain(0.4)
        with pytest.raises(NegativeWeight):
            extremal_upper_measure(nc, 1.2001)

    def test_integral_monotone_in_z_and_converges(self):
        nc = single_put_chain(0.4)
        ub = superhedge(nc, CORRIDOR_UP)
        kn = nc.k[-1]
        vals = [extremal_upper_measure(nc, z * kn).integrate(CORRIDOR_UP) for z in (2, 10, 100)]
        assert vals[0] <= vals[1] + 1e-10 and vals[1] <= vals[2] + 1e-10
        assert ub.value - vals[-1] < 1e-2
        assert vals[-1] <= ub.value + 1e-10

    def test_z_requirement_for_open_chains(self):
        nc = single_put_chain(0.4)
        with pytest.raises(ValueError):
            extremal_upper_measure(nc, 1.0)
