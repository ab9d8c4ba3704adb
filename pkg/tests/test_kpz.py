"""Closed-form layer: exact values, inverses, and power-counting identities."""

import math

import numpy as np
import pytest

from lqgkpz.kpz import (KpzContext, fixed_point, forward_kpz, gamma_from_c,
                        inverse_kpz, predicted_singularity, replica_exponent,
                        wick_pair_exponent)

X_THIRDS = 1 - math.log(2) / math.log(3)


class TestGammaFromC:
    def test_c_one(self):
        assert gamma_from_c(1.0) == pytest.approx(2.0, abs=1e-14)

    def test_c_minus_two(self):
        # sqrt(27/6) - sqrt(3/6) = sqrt(2)
        assert gamma_from_c(-2.0) == pytest.approx(math.sqrt(2), abs=1e-14)

    def test_c_zero(self):
        assert gamma_from_c(0.0) == pytest.approx(math.sqrt(8 / 3), abs=1e-14)

    def test_rejects_c_above_one(self):
        with pytest.raises(ValueError):
            gamma_from_c(1.5)


class TestForwardInverse:
    def test_fixed_points_of_map(self):
        for g in (0.0, 0.5, 1.0, 1.5):
            assert forward_kpz(0.0, g) == 0.0
            assert forward_kpz(1.0, g) == 1.0

    def test_direct_evaluation(self):
        g = math.sqrt(8 / 3)
        assert forward_kpz(0.5, g) == pytest.approx(1 / 3, abs=1e-14)
        assert inverse_kpz(1 / 3, g) == pytest.approx(0.5, abs=1e-12)

    def test_classical_limit(self):
        assert forward_kpz(0.37, 0.0) == 0.37
        assert inverse_kpz(0.37, 0.0) == 0.37

    def test_cantor_target(self):
        assert inverse_kpz(X_THIRDS, 1.0) == pytest.approx(0.43036, abs=5e-6)

    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            x = rng.uniform(0, 1)
            g = rng.uniform(0, 1.999)
            assert forward_kpz(inverse_kpz(x, g), g) == pytest.approx(x, abs=1e-12)

    def test_inverse_forward_round_trip(self):
        rng = np.random.default_rng(1)
        for g in (0.0, 0.5, 1.0, 1.5, math.sqrt(8 / 3)):
            for _ in range(200):
                d = rng.uniform(0, 1)
                assert inverse_kpz(forward_kpz(d, g), g) == pytest.approx(d, abs=1e-12)

    def test_quantum_exponent_above_classical(self):
        # for delta in (0, 1) the quadratic correction is negative, so the
        # quantum exponent always exceeds the Euclidean one
        rng = np.random.default_rng(2)
        for _ in range(500):
            x = rng.uniform(1e-6, 1)
            g = rng.uniform(1e-3, 1.999)
            d = inverse_kpz(x, g)
            assert d >= x - 1e-14
            assert forward_kpz(d, g) <= d + 1e-14


class TestReplicaExponent:
    def test_bulk_s1_marginal(self):
        for d, g in ((0.3, 1.0), (0.9, 1.7), (0.0, 0.2)):
            assert replica_exponent(1.0, d, g, "bulk") == pytest.approx(0.0, abs=1e-14)

    def test_boundary_half_marginal(self):
        for d, g in ((0.3, 1.0), (0.9, 1.7)):
            assert replica_exponent(0.5, d, g, "boundary") == pytest.approx(0.0, abs=1e-14)

    def test_bulk_s2_target(self):
        g = math.sqrt(8 / 3)
        assert replica_exponent(2, 0.5, g, "bulk") == pytest.approx(2 / 3, abs=1e-12)

    def test_delta_equals_s(self):
        # 2 + (g^2/2)(s-1)(2s-s) = 2 + g^2 at s = delta = 2
        assert replica_exponent(2, 2.0, 1.0, "bulk") == pytest.approx(3.0, abs=1e-14)


def _bisect_singularity(x, delta, gamma, lo=-5.0, hi=None):
    """Independent root finder for the bulk singularity condition."""

    def f(s):
        return (2 * s - 2 + gamma**2 / 2 * (s - 1) * (2 * delta - s)) - (2 * x - 2)

    hi = hi if hi is not None else max(1.0, delta + 1)
    # bracket the small root by scanning
    grid = np.linspace(lo, hi, 4001)
    vals = [f(s) for s in grid]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0:
            return a
        if fa * fb < 0:
            while b - a > 1e-14:
                m = 0.5 * (a + b)
                if f(a) * f(m) <= 0:
                    b = m
                else:
                    a = m
            return 0.5 * (a + b)
    raise AssertionError("no bracket found")


class TestPredictedSingularity:
    def test_classical_limit_is_x(self):
        assert predicted_singularity(0.37, 0.2, 0.0, "bulk") == 0.37
        assert predicted_singularity(0.37, 0.2, 0.0, "boundary") == 0.185

    def test_fixed_point_consistency(self):
        for g in (0.3, 1.0, 1.5):
            for x in (0.1, X_THIRDS, 0.8):
                d = inverse_kpz(x, g)
                assert predicted_singularity(x, d, g, "bulk") == pytest.approx(d, abs=1e-10)
                assert predicted_singularity(x, d, g, "boundary") == pytest.approx(d / 2, abs=1e-10)

    def test_against_bisection_oracle(self):
        s = predicted_singularity(X_THIRDS, 0.3, 1.0, "bulk")
        s_oracle = _bisect_singularity(X_THIRDS, 0.3, 1.0)
        assert s == pytest.approx(s_oracle, abs=1e-10)


class TestFixedPoint:
    def test_gamma_zero_single_step(self):
        assert fixed_point(0.37, 0.0) == 0.37

    def test_cantor_value(self):
        assert fixed_point(X_THIRDS, 1.0) == pytest.approx(0.43036, abs=5e-6)

    def test_agrees_with_inverse(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = rng.uniform(0.01, 1)
            g = rng.uniform(0, 1.9)
            assert fixed_point(x, g, "bulk") == pytest.approx(inverse_kpz(x, g), abs=1e-10)

    def test_boundary_same_quadratic(self):
        assert fixed_point(X_THIRDS, 1.0, "boundary") == pytest.approx(
            fixed_point(X_THIRDS, 1.0, "bulk"), abs=1e-10)


class TestWickPairs:
    def test_measure_charge_pair(self):
        d, g = 0.3, 1.2
        assert wick_pair_exponent(1 - d, 1, g, "bulk") == pytest.approx(-g**2 * (1 - d))

    def test_unit_pair(self):
        assert wick_pair_exponent(1, 1, 1.3, "bulk") == pytest.approx(-1.3**2)

    def test_gamma_zero(self):
        assert wick_pair_exponent(0.7, 0.4, 0.0, "bulk") == 0.0

    def test_boundary_doubles(self):
        assert wick_pair_exponent(0.5, 1, 1.0, "boundary") == pytest.approx(
            2 * wick_pair_exponent(0.5, 1, 1.0, "bulk"))

    @pytest.mark.parametrize("s", [2, 3])
    def test_power_counting_identity(self, s):
        # pairwise contractions of the charge set {1-delta, 1, ..., 1} plus
        # the flat propagator power reproduce the replica exponent
        rng = np.random.default_rng(s)
        for _ in range(50):
            d = rng.uniform(0, 1)
            g = rng.uniform(0, 1.9)
            charges = [1 - d] + [1.0] * (s - 1)
            wick = sum(
                wick_pair_exponent(charges[i], charges[j], g, "bulk")
                for i in range(len(charges)) for j in range(i + 1, len(charges)))
            assert wick + (2 * s - 2) == pytest.approx(
                replica_exponent(s, d, g, "bulk"), abs=1e-12)

    @pytest.mark.parametrize("s", [2, 3])
    def test_boundary_power_counting(self, s):
        # boundary chain: charge (1-delta)/2 at the endpoint and 2s-1
        # internal charges 1/2, with the doubled boundary contraction
        rng = np.random.default_rng(10 + s)
        for _ in range(50):
            d = rng.uniform(0, 1)
            g = rng.uniform(0, 1.9)
            charges = [(1 - d) / 2] + [0.5] * (2 * s - 1)
            wick = sum(
                wick_pair_exponent(charges[i], charges[j], g, "boundary")
                for i in range(len(charges)) for j in range(i + 1, len(charges)))
            assert wick + (2 * s - 1) == pytest.approx(
                replica_exponent(s, d, g, "boundary"), abs=1e-12)


class TestContext:
    def test_consistent_pair_accepted(self):
        KpzContext(gamma=gamma_from_c(-2.0), c=-2.0)

    def test_inconsistent_pair_rejected(self):
        with pytest.raises(ValueError):
            KpzContext(gamma=1.0, c=-2.0)

    def test_gamma_range(self):
        with pytest.raises(ValueError):
            KpzContext(gamma=2.0)
