import math

import numpy as np
import pytest

from varbounds import (
    C2Function,
    NonMonotone,
    SampledPath,
    WeightSpec,
    arithmetic_walk,
    build_dyadic_ladder,
    discrete_local_time,
    follmer_integral,
    geometric_walk,
    make_payoff,
    occupation_density_check,
    quadratic_variation,
    transform_local_time,
    verify_ito,
)

SQUARE = C2Function(lambda x: x**2, lambda x: 2.0 * x, lambda x: np.full_like(np.asarray(x, float), 2.0))
NEG_LOG = C2Function(lambda x: -np.log(x), lambda x: -1.0 / x, lambda x: 1.0 / np.square(x))
CUBE = C2Function(lambda x: x**3, lambda x: 3.0 * x**2, lambda x: 6.0 * x)


def constant_path(value=2.0, n=64):
    times = np.linspace(0.0, 1.0, n + 1)
    return SampledPath(times, np.full(n + 1, value))


class TestLadder:
    def test_dyadic_structure(self):
        path = geometric_walk(0, n_steps=256)
        ladder = build_dyadic_ladder(path, 4)
        assert ladder.depth == 4
        assert len(ladder.partitions[-1]) == 257
        meshes = ladder.meshes
        assert np.all(np.diff(meshes) < 0)
        for coarse, fine in zip(ladder.partitions, ladder.partitions[1:]):
            assert np.all(np.isin(coarse, fine))

    def test_too_shallow(self):
        path = geometric_walk(0, n_steps=256)
        with pytest.raises(ValueError, match="shallow"):
            build_dyadic_ladder(path, 1)

    def test_indivisible_steps(self):
        path = geometric_walk(0, n_steps=100)
        with pytest.raises(ValueError):
            build_dyadic_ladder(path, 6)


class TestQuadraticVariation:
    def test_constant_path(self):
        path = constant_path()
        part = np.arange(path.times.size)
        assert quadratic_variation(path, part)[-1] == 0.0

    def test_linear_path_vanishes_with_refinement(self):
        c, K = 1.7, 128
        times = np.linspace(0.0, 1.0, K + 1)
        path = SampledPath(times, c * times)
        part = np.arange(K + 1)
        assert quadratic_variation(path, part)[-1] == pytest.approx(c**2 / K, abs=1e-14)

    def test_symmetric_walk_exact(self):
        path = arithmetic_walk(5, n_steps=2048, maturity=1.0)
        part = np.arange(path.times.size)
        assert quadratic_variation(path, part)[-1] == pytest.approx(1.0, abs=1e-10)

    def test_additivity(self):
        path = arithmetic_walk(6, n_steps=512)
        part = np.arange(0, 513, 4)
        qv = quadratic_variation(path, part)
        split = len(part) // 2
        x = path.values[part]
        tail = np.sum(np.square(np.diff(x[split:])))
        assert qv[-1] == pytest.approx(qv[split] + tail, abs=1e-15)


class TestLocalTime:
    def test_constant_path_zero(self):
        path = constant_path()
        part = np.arange(path.times.size)
        profile = discrete_local_time(path, part)
        assert np.all(profile.values == 0.0)

    def test_single_step(self):
        path = SampledPath(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        part = np.array([0, 1])
        profile = discrete_local_time(path, part, levels=np.array([0.25]))
        assert profile.values[0] == pytest.approx(2.0 * 0.75)

    def test_zero_outside_range(self):
        path = geometric_walk(3, n_steps=512)
        part = np.arange(path.times.size)
        pad = 0.5
        levels = np.linspace(path.values.min() - pad, path.values.max() + pad, 301)
        profile = discrete_local_time(path, part, levels=levels)
        outside = (levels < path.values.min()) | (levels > path.values.max())
        assert np.all(profile.values[outside] == 0.0)

    def test_profiles_stabilize_along_ladder(self):
        path = geometric_walk(11, n_steps=4096)
        ladder = build_dyadic_ladder(path, 6)
        profiles = [discrete_local_time(path, p) for p in ladder.partitions]
        dists = [profiles[i].l2_distance(profiles[i + 2]) for i in range(len(profiles) - 2)]
        assert dists[-1] < dists[0]

    def test_t_must_be_partition_time(self):
        path = geometric_walk(3, n_steps=64)
        part = np.arange(0, 65, 8)
        with pytest.raises(ValueError):
            discrete_local_time(path, part, t=path.times[3])


class TestFollmerIntegral:
    def test_unit_integrand_telescopes(self):
        path = arithmetic_walk(9, n_steps=256)
        part = np.arange(0, 257, 2)
        value = follmer_integral(path, lambda x: np.ones_like(x), part)
        assert value == pytest.approx(path.values[-1] - path.values[0], abs=1e-14)

    def test_square_identity_any_partition(self):
        path = arithmetic_walk(10, n_steps=512, start=3.0)
        for step in (1, 4, 32):
            part = np.arange(0, 513, step)
            qv = quadratic_variation(path, part)[-1]
            val = follmer_integral(path, lambda x: 2.0 * x, part)
            target = path.values[-1] ** 2 - path.values[0] ** 2 - qv
            assert val == pytest.approx(target, abs=1e-11)

    def test_reciprocal_integrand_stabilizes(self):
        path = geometric_walk(21, n_steps=4096)
        ladder = build_dyadic_ladder(path, 6)
        v5 = follmer_integral(path, lambda x: 1.0 / x, ladder.partitions[-2])
        v6 = follmer_integral(path, lambda x: 1.0 / x, ladder.partitions[-1])
        assert abs(v6 - v5) < 1e-3


class TestVerifyIto:
    def test_square_machine_precision(self):
        for seed in range(5):
            path = geometric_walk(seed, n_steps=2048)
            ladder = build_dyadic_ladder(path, 6)
            residuals = verify_ito(path, SQUARE, ladder)
            assert np.all(residuals <= 1e-12)

    def test_neg_log_residuals_decrease(self):
        path = geometric_walk(42, n_steps=2048)
        ladder = build_dyadic_ladder(path, 6)
        residuals = verify_ito(path, NEG_LOG, ladder)
        assert np.all(np.diff(residuals[-3:]) < 0.0)

    def test_corridor_local_time_mode_close_to_c2_benchmark(self):
        payoff = make_payoff(WeightSpec.corridor_up(1.0))
        path = geometric_walk(7, n_steps=4096)
        ladder = build_dyadic_ladder(path, 6)
        corridor = verify_ito(path, payoff, ladder)  # auto local-time mode
        benchmark = verify_ito(path, CUBE, ladder)
        assert corridor[-1] < 10.0 * benchmark[-1]

    def test_explicit_mode_validation(self):
        path = geometric_walk(1, n_steps=128)
        ladder = build_dyadic_ladder(path, 3)
        with pytest.raises(ValueError):
            verify_ito(path, SQUARE, ladder, curvature="simpson")


class TestOccupationDensity:
    def test_disjoint_interval(self):
        path = geometric_walk(2, n_steps=1024)
        ladder = build_dyadic_ladder(path, 5)
        hi = path.values.max()
        lhs, rhs = occupation_density_check(path, ladder, (hi + 1.0, hi + 2.0))
        assert lhs == 0.0 and rhs == 0.0

    def test_covering_interval_recovers_quadratic_variation(self):
        path = geometric_walk(4, n_steps=4096)
        ladder = build_dyadic_ladder(path, 6)
        lo, hi = path.values.min(), path.values.max()
        lhs, rhs = occupation_density_check(path, ladder, (lo - 0.1, hi + 0.1))
        qv = quadratic_variation(path, ladder.partitions[-1])[-1]
        assert rhs == pytest.approx(qv, abs=1e-14)
        assert lhs == pytest.approx(qv, rel=0.02)

    def test_middle_third(self):
        path = geometric_walk(8, n_steps=4096)
        ladder = build_dyadic_ladder(path, 6)
        lo, hi = path.values.min(), path.values.max()
        third = (hi - lo) / 3.0
        lhs, rhs = occupation_density_check(path, ladder, (lo + third, hi - third))
        assert abs(lhs - rhs) / rhs < 0.05


class TestTransformLocalTime:
    def test_identity_zero(self):
        path = geometric_walk(5, n_steps=1024)
        part = np.arange(path.times.size)
        d = transform_local_time(path, lambda x: x, lambda x: np.ones_like(x), lambda v: v, part)
        assert d == 0.0

    def test_doubling_exact_scaling(self):
        path = geometric_walk(6, n_steps=1024)
        part = np.arange(path.times.size)
        d = transform_local_time(
            path, lambda x: 2.0 * x, lambda x: np.full_like(x, 2.0), lambda v: v / 2.0, part
        )
        assert d < 1e-10

    def test_log_transform_discrepancy_halves(self):
        path = geometric_walk(15, n_steps=4096)
        ladder = build_dyadic_ladder(path, 6)
        d4 = transform_local_time(path, np.log, lambda x: 1.0 / x, np.exp, ladder.partitions[3])
        d6 = transform_local_time(path, np.log, lambda x: 1.0 / x, np.exp, ladder.partitions[5])
        assert d6 <= 0.5 * d4

    def test_non_monotone_rejected(self):
        path = geometric_walk(5, n_steps=256)
        part = np.arange(path.times.size)
        with pytest.raises(NonMonotone):
            transform_local_time(
                path, lambda x: (x - 1.5) ** 2, lambda x: 2.0 * (x - 1.5), lambda v: v, part
            )


class TestPathValidation:
    def test_times_strictly_increasing(self):
        with pytest.raises(ValueError):
            SampledPath(np.array([0.0, 0.0, 1.0]), np.array([1.0, 2.0, 3.0]))

    def test_values_finite(self):
        with pytest.raises(ValueError):
            SampledPath(np.array([0.0, 1.0]), np.array([1.0, math.inf]))

    def test_generators_deterministic(self):
        a = geometric_walk(123, n_steps=64)
        b = geometric_walk(123, n_steps=64)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.strictly_positive
