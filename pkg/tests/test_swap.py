import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varbounds import (
    OptionChain,
    VerdictStatus,
    WeightSpec,
    classify_european,
    classify_rate_against_bounds,
    classify_swap_quote,
    make_payoff,
    normalize,
    swap_rate_bounds,
    vol_points,
)
from varbounds.cli import parse_report, round_floats
from varbounds.lower import C1Violation
from varbounds.swap import european_from_rate, rate_from_european
from conftest import random_consistent_chain, single_put_chain

INVERSE = make_payoff(WeightSpec.inverse())


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


class TestVolPoints:
    def test_reference_values(self):
        assert vol_points(0.04) == pytest.approx(20.0)
        assert vol_points(0.0) == 0.0
        assert vol_points(0.0451) == pytest.approx(21.237, abs=1e-3)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            vol_points(-0.01)


class TestRateMapping:
    def test_vanilla_rate_is_twice_value(self):
        payoff = make_payoff(WeightSpec.vanilla())
        assert rate_from_european(0.02, payoff) == pytest.approx(0.04)

    def test_gamma_rate_shifts_by_two(self):
        payoff = make_payoff(WeightSpec.gamma())
        assert rate_from_european(0.5, payoff) == pytest.approx(2.0 * 0.5 + 2.0)

    def test_inversion(self):
        payoff = make_payoff(WeightSpec.corridor_up(0.9))
        for rate in (0.0, 0.05, 0.3):
            assert rate_from_european(european_from_rate(rate, payoff), payoff) == pytest.approx(rate)


class TestClassifyEuropean:
    def setup_method(self):
        self.nc = single_put_chain(0.4)

    def test_inside_band(self):
        v = classify_european(self.nc, INVERSE, 1.5, normalized=True)
        assert v.status is VerdictStatus.CONSISTENT

    def test_below_band(self):
        v = classify_european(self.nc, INVERSE, 1.0, normalized=True)
        assert v.status is VerdictStatus.MODEL_INDEPENDENT_ARBITRAGE
        assert v.side == "below"

    def test_boundary_with_existence(self):
        v = classify_european(self.nc, INVERSE, 11.0 / 9.0, normalized=True)
        assert v.status is VerdictStatus.BOUNDARY
        assert v.side == "lower"
        assert v.existence is not None and v.existence.is_guaranteed
        assert v.consistent_at_boundary

    def test_boundary_without_existence_is_arbitrage(self):
        nc = single_put_chain(0.6)
        v = classify_european(nc, INVERSE, 5.0 / 3.0, normalized=True)
        assert v.status is VerdictStatus.BOUNDARY
        assert v.existence is not None and v.existence.verdict == "fails"
        assert v.is_arbitrage

    def test_weak_arbitrage_from_origin_cap(self):
        nc = chain_of([0.5, 0.6], [0.05, 0.06])
        v = classify_european(nc, make_payoff(WeightSpec.vanilla()), 0.5, normalized=True)
        assert v.status is VerdictStatus.WEAK_ARBITRAGE

    def test_currency_units(self):
        chain = OptionChain(
            maturity=0.5,
            discount_factor=0.9,
            forward=50.0,
            strikes=np.array([60.0]),
            put_prices=np.array([0.4 * 0.9 * 50.0]),
        )
        nc = normalize(chain)
        quote = 1.5 * 0.9 * 50.0
        v = classify_european(nc, INVERSE, quote)
        assert v.status is VerdictStatus.CONSISTENT


class TestClassifySwapQuote:
    def test_published_pairs(self):
        consistent = classify_rate_against_bounds((21.24 / 100) ** 2, (20.10 / 100) ** 2)
        assert consistent.status is VerdictStatus.CONSISTENT
        arb = classify_rate_against_bounds((45.93 / 100) ** 2, (65.81 / 100) ** 2)
        assert arb.status is VerdictStatus.MODEL_INDEPENDENT_ARBITRAGE and arb.side == "below"

    def test_boundary_branch(self):
        v = classify_rate_against_bounds(0.04, 0.04)
        assert v.status is VerdictStatus.BOUNDARY and v.side == "lower"

    @settings(max_examples=25, deadline=None, derandomize=True)
    @given(st.floats(min_value=0.8, max_value=3.0))
    def test_round_trip_matches_european(self, p_quote):
        nc = single_put_chain(0.4)
        rate = rate_from_european(p_quote, INVERSE)
        via_swap = classify_swap_quote(nc, WeightSpec.inverse(), rate)
        direct = classify_european(nc, INVERSE, p_quote, normalized=True)
        assert via_swap.status is direct.status
        assert via_swap.side == direct.side

    def test_verdict_monotone_in_quote(self):
        nc = single_put_chain(0.4)
        seen = []
        for rate in np.linspace(0.3, 1.2, 60):
            v = classify_swap_quote(nc, WeightSpec.inverse(), rate)
            seen.append(v.status)
        order = [VerdictStatus.MODEL_INDEPENDENT_ARBITRAGE, VerdictStatus.BOUNDARY, VerdictStatus.CONSISTENT]
        ranks = [order.index(s) for s in seen]
        assert ranks[0] == 0 and ranks[-1] == 2
        assert all(b - a >= 0 for a, b in zip(ranks, ranks[1:]))
        assert VerdictStatus.WEAK_ARBITRAGE not in seen


class TestSwapRateBounds:
    def test_vanilla_report(self):
        rng = np.random.default_rng(2)
        nc = random_consistent_chain(rng, max_strikes=5)
        rep = swap_rate_bounds(nc, WeightSpec.vanilla())
        assert rep.swap_lower == pytest.approx(2.0 * rep.lower_value)
        assert math.isinf(rep.swap_upper)
        assert rep.vol_lower == pytest.approx(100.0 * math.sqrt(max(rep.swap_lower, 0.0)))
        assert rep.lower_value <= rep.upper_value

    def test_gamma_shift(self):
        rng = np.random.default_rng(12)
        nc = random_consistent_chain(rng, max_strikes=4)
        rep = swap_rate_bounds(nc, WeightSpec.gamma())
        assert rep.swap_lower == pytest.approx(2.0 * rep.lower_value + 2.0)

    def test_affine_shift_moves_swap_bounds_linearly(self):
        nc = single_put_chain(0.4)
        base = swap_rate_bounds(nc, WeightSpec.corridor_up(1.0))
        payoff = make_payoff(WeightSpec.corridor_up(1.0))
        alpha, beta = 0.3, -0.1
        shifted = payoff.shift_affine(alpha, beta)
        from varbounds.swap import compute_lower
        from varbounds.upper import superhedge as sh

        sol, _, _ = compute_lower(nc, shifted)
        ub = sh(nc, shifted)
        lo_rate = 2.0 * sol.value - 2.0 * shifted.at_one()
        hi_rate = 2.0 * ub.value - 2.0 * shifted.at_one()
        # the affine shift cancels in the rate: 2(v + a + b) - 2(lam(1) + a + b)
        assert lo_rate == pytest.approx(base.swap_lower, abs=1e-9)
        assert hi_rate == pytest.approx(base.swap_upper, abs=1e-9)

    def test_quote_verdict_embedded(self):
        nc = single_put_chain(0.4)
        rep = swap_rate_bounds(nc, WeightSpec.corridor_up(1.0), quoted_rate=1.0)
        assert rep.quote_verdict is not None
        assert rep.quote_verdict.status is VerdictStatus.MODEL_INDEPENDENT_ARBITRAGE
        assert rep.quote_verdict.side == "above"

    def test_c1_violation_propagates(self):
        nc = chain_of([0.5, 0.6], [0.05, 0.06])
        with pytest.raises(C1Violation):
            swap_rate_bounds(nc, WeightSpec.vanilla())

    def test_inconsistent_chain_rejected(self):
        with pytest.raises(ValueError):
            swap_rate_bounds(single_put_chain(0.1), WeightSpec.vanilla())

    def test_report_serialization_round_trip(self):
        nc = single_put_chain(0.4)
        rep = swap_rate_bounds(nc, WeightSpec.corridor_up(1.0), quoted_rate=0.2)
        text = rep.to_json()
        parsed = parse_report(text)
        again = json.dumps(round_floats(parsed))
        assert json.loads(again) == json.loads(text)
        assert parsed["swap_rate"]["lower"] == pytest.approx(rep.swap_lower, rel=1e-11)

    def test_infinity_serialized_as_string(self):
        nc = single_put_chain(0.4)
        rep = swap_rate_bounds(nc, WeightSpec.vanilla())
        payload = json.loads(rep.to_json())
        assert payload["european"]["upper_value_normalized"] == "inf"
        assert payload["swap_rate"]["vol_points_upper"] == "inf"
