import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from besovmap.prior import (
    BesovParams,
    CoefficientField,
    besov_norm,
    besov_weight,
    hellinger_factor,
    hellinger_integral,
    log_concavity_check,
    log_derivative,
    log_rn_derivative,
    log_rn_via_logderivative,
    prior_norm,
    quasi_invariance_diagnostic,
    sample_prior,
)

from oracles import hellinger_quadrature

vectors = st.lists(st.floats(-5, 5, allow_nan=False), min_size=8, max_size=8).map(np.array)


class TestParams:
    def test_default_ambient_order(self):
        p = BesovParams(s=1.5, N=64)
        assert p.t == pytest.approx(1.5 - 1 - 0.1)

    def test_t_boundary_rejected(self):
        with pytest.raises(ValueError, match="t < s - d"):
            BesovParams(s=2.0, N=8, t=1.0)

    def test_p_other_than_one_rejected(self):
        with pytest.raises(ValueError, match="p=1"):
            BesovParams(s=2.0, N=8, p=2)

    def test_incomplete_level_rejected(self):
        with pytest.raises(ValueError):
            BesovParams(s=2.0, N=6)

    def test_alpha_increasing_when_smooth(self):
        alpha = BesovParams(s=1.5, N=64).alpha
        assert alpha[0] == 1.0
        assert np.all(np.diff(alpha) > 0)

    def test_two_dim_alpha(self):
        p = BesovParams(s=3.0, N=16, d=2)
        np.testing.assert_allclose(p.alpha, np.arange(1, 17) ** 1.0)


class TestNorms:
    @pytest.mark.parametrize("order,integ", [(0.3, 1), (2.0, 1), (1.0, 2), (-1.0, 3)])
    def test_weight_at_one(self, order, integ):
        assert besov_weight(1, 1, order, integ) == 1.0

    def test_weight_examples(self):
        assert besov_weight(4, 1, 1.0, 1) == pytest.approx(2.0)
        assert besov_weight(4, 1, 1.0, 2) == pytest.approx(16.0)

    def test_norm_examples(self):
        assert besov_norm(np.zeros(8), 1.0) == 0
        assert besov_norm([3.0, 0, 0, 0], 0.7, 2) == pytest.approx(3.0)
        assert besov_norm([1.0, 0, 0, 1.0], 1.0, 1) == pytest.approx(3.0)

    def test_p2_norm_is_weighted_euclidean(self):
        c = np.array([1.0, -2.0, 0.5, 3.0])
        w = np.arange(1, 5) ** (2 * (1.0 + 0.5) - 1)
        assert besov_norm(c, 1.0, 2) == pytest.approx(np.sqrt(np.sum(w * c**2)))

    def test_prior_norm_is_order_s_norm(self):
        p = BesovParams(s=1.7, N=8)
        c = np.linspace(-1, 1, 8)
        assert prior_norm(c, p) == pytest.approx(besov_norm(c, 1.7))


class TestSampling:
    def test_deterministic(self):
        p = BesovParams(s=1.5, N=16)
        np.testing.assert_array_equal(sample_prior(p, 7, 100), sample_prior(p, 7, 100))

    def test_different_seeds_differ(self):
        p = BesovParams(s=1.5, N=16)
        assert not np.array_equal(sample_prior(p, 7, 10), sample_prior(p, 8, 10))

    def test_prefix_stable_across_blocks(self):
        p = BesovParams(s=1.5, N=2)
        big = sample_prior(p, 3, 70_000)
        np.testing.assert_array_equal(sample_prior(p, 3, 5), big[:5])
        np.testing.assert_array_equal(sample_prior(p, 3, 66_000)[-10:], big[65_990:66_000])

    def test_thread_count_does_not_change_draws(self, monkeypatch):
        p = BesovParams(s=1.5, N=4)
        monkeypatch.setenv("BESOVMAP_THREADS", "1")
        one = sample_prior(p, 11, 200_000)
        monkeypatch.setenv("BESOVMAP_THREADS", "4")
        np.testing.assert_array_equal(sample_prior(p, 11, 200_000), one)

    def test_mean_absolute_coefficient(self):
        p = BesovParams(s=2.0, N=8)
        draws = sample_prior(p, 1, 100_000)
        a = np.abs(draws)
        se = a.std(axis=0, ddof=1) / np.sqrt(len(a))
        target = p.ell ** -(p.s / p.d - 0.5)  # E|X| = 1 for the unit Laplace law
        assert np.all(np.abs(a.mean(axis=0) - target) <= 3 * se)

    def test_mean_ambient_norm(self):
        p = BesovParams(s=2.0, N=64, t=0.5)
        norms = besov_norm(sample_prior(p, 2, 100_000), 0.5)
        target = sum(ell**-1.5 for ell in range(1, 65))
        assert target == pytest.approx(2.363348096624022)
        se = norms.std(ddof=1) / np.sqrt(norms.size)
        assert abs(norms.mean() - target) <= 3 * se

    def test_sign_symmetry_and_variance(self):
        p = BesovParams(s=1.0, N=1)
        x = sample_prior(p, 5, 200_000)[:, 0]
        assert abs(x.mean()) <= 3 * x.std() / np.sqrt(x.size)
        # Var = 2 for the unit Laplace law
        assert x.var() == pytest.approx(2.0, rel=0.03)
        assert np.all(np.isfinite(x))


class TestRadonNikodym:
    def test_zero_shift(self):
        p = BesovParams(s=1.5, N=8)
        u = np.linspace(-1, 2, 8)
        assert log_rn_derivative(np.zeros(8), u, p) == 0

    def test_at_origin_is_minus_norm(self):
        p = BesovParams(s=1.5, N=8)
        h = np.linspace(-1, 2, 8)
        assert log_rn_derivative(h, np.zeros(8), p) == pytest.approx(-prior_norm(h, p))

    def test_scalar_hand_value(self):
        p = BesovParams(s=1.0, N=1)
        assert log_rn_derivative([2.0], [3.0], p) == pytest.approx(2.0)

    def test_normalisation_small(self):
        p = BesovParams(s=1.5, N=8)
        h = np.array([0.3, -0.2, 0.1, 0, 0.05, 0, 0, -0.02])
        R = np.exp(log_rn_derivative(h, sample_prior(p, 9, 200_000), p))
        assert abs(R.mean() - 1) <= 3 * R.std(ddof=1) / np.sqrt(R.size)

    def test_shift_identity_moments(self):
        p = BesovParams(s=1.5, N=4)
        h = np.array([0.4, -0.3, 0.2, 0.1])
        U = sample_prior(p, 21, 400_000)
        R = np.exp(log_rn_derivative(h, U, p))
        direct = U + h
        for k in (1, 2):
            est = (R[:, None] * U**k)
            se = est.std(axis=0, ddof=1) / np.sqrt(len(U))
            # exact moments of the shifted law: E[(X+h)] and E[(X+h)^2] with Var X = 2/alpha^2
            exact = h if k == 1 else h**2 + 2 / p.alpha**2
            assert np.all(np.abs(est.mean(axis=0) - exact) <= 3 * se)
            assert np.all(np.abs(direct.mean(axis=0) ** 0 * (direct**k).mean(axis=0) - exact) <= 4 * se)


class TestHellinger:
    def test_no_shift(self):
        assert hellinger_factor(0.0, 3.0) == 1.0

    def test_hand_value(self):
        assert hellinger_factor(1.0, 2.0) == pytest.approx(2 * math.exp(-1), abs=1e-15)
        assert hellinger_factor(1.0, 2.0) == pytest.approx(0.735759, abs=1e-6)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("h", [0.1, 1.0, 5.0])
    def test_quadrature(self, alpha, h):
        assert hellinger_factor(h, alpha) == pytest.approx(hellinger_quadrature(alpha, h), abs=1e-10)

    @given(st.floats(-20, 20), st.floats(0.01, 20))
    def test_range(self, h, alpha):
        v = hellinger_factor(h, alpha)
        assert 0 < v <= 1
        assert (v == 1) == (h == 0) or abs(alpha * h) < 1e-7

    def test_kakutani_product(self):
        p = BesovParams(s=1.5, N=8)
        h = np.array([0.5, -0.4, 0.3, 0.2, -0.1, 0.05, 0.0, 0.3])
        per_coord = np.prod([hellinger_quadrature(a, x) for a, x in zip(p.alpha, h)])
        assert hellinger_integral(h, p) == pytest.approx(per_coord, abs=1e-8)


class TestQuasiInvariance:
    def test_examples(self):
        p = BesovParams(s=1.0, N=128)
        assert quasi_invariance_diagnostic(np.zeros(128), p) == 0
        e1 = np.zeros(128)
        e1[0] = 1
        assert quasi_invariance_diagnostic(e1, p) == 1

    def test_harmonic_sum(self):
        p = BesovParams(s=1.0, N=128)
        h = np.where(p.ell <= 100, 1 / p.ell, 0.0)
        assert quasi_invariance_diagnostic(h, p) == pytest.approx(5.187377517639621, rel=1e-12)


class TestLogDerivative:
    def test_zero_direction(self):
        p = BesovParams(s=1.5, N=8)
        assert log_derivative(np.zeros(8), np.ones(8), p) == 0

    def test_positive_state(self):
        p = BesovParams(s=1.5, N=8)
        h = np.linspace(-1, 1, 8)
        assert log_derivative(h, np.full(8, 0.3), p) == pytest.approx(-np.sum(p.alpha * h))

    def test_hand_value(self):
        p = BesovParams(s=1.0, N=2)
        assert log_derivative([1.0, 1.0], [1.0, -1.0], p) == pytest.approx(math.sqrt(2) - 1)

    @settings(max_examples=50)
    @given(vectors, vectors, vectors, st.floats(-3, 3))
    def test_linear_in_direction(self, h, g, u, c):
        p = BesovParams(s=1.5, N=8)
        lhs = log_derivative(h + c * g, u, p)
        rhs = log_derivative(h, u, p) + c * log_derivative(g, u, p)
        assert lhs == pytest.approx(rhs, abs=1e-9)

    @settings(max_examples=50)
    @given(vectors, vectors)
    def test_odd_in_state_and_bounded(self, h, u):
        p = BesovParams(s=1.5, N=8)
        u = np.where(u == 0, 1.0, u)
        assert log_derivative(h, -u, p) == pytest.approx(-log_derivative(h, u, p))
        assert abs(log_derivative(h, u, p)) <= prior_norm(h, p) * (1 + 1e-12)


class TestLogDerivativeIntegral:
    def test_zero_shift(self):
        p = BesovParams(s=1.5, N=4)
        assert log_rn_via_logderivative(np.zeros(4), np.ones(4), p) == 0

    def test_no_crossing(self):
        p = BesovParams(s=1.0, N=1)
        assert log_rn_via_logderivative([2.0], [3.0], p) == pytest.approx(2.0, abs=1e-15)

    def test_crossing_midway(self):
        p = BesovParams(s=1.0, N=1)
        assert log_rn_via_logderivative([2.0], [1.0], p) == pytest.approx(0.0, abs=1e-15)

    def test_state_at_kink(self):
        p = BesovParams(s=1.0, N=2)
        u, h = np.array([0.0, 1.0]), np.array([1.0, -1.0])
        assert log_rn_via_logderivative(h, u, p) == pytest.approx(log_rn_derivative(h, u, p), abs=1e-14)

    @settings(max_examples=100)
    @given(vectors, vectors)
    def test_matches_direct_formula(self, h, u):
        p = BesovParams(s=1.5, N=8)
        assert log_rn_via_logderivative(h, u, p) == pytest.approx(log_rn_derivative(h, u, p), abs=1e-12)


class TestLogConcavity:
    def test_equal_endpoints(self):
        p = BesovParams(s=1.5, N=8)
        a = np.linspace(-1, 1, 8)
        ok, margin = log_concavity_check(a, a, p, np.linspace(0, 1, 11))
        assert ok and margin == pytest.approx(0, abs=1e-12)

    def test_antipodal_midpoint(self):
        p = BesovParams(s=1.5, N=8)
        a = np.linspace(-1, 1, 8) + 0.1
        ok, margin = log_concavity_check(a, -a, p, [0.5])
        assert ok and margin > 0

    def test_random_segments(self):
        p = BesovParams(s=1.5, N=8)
        rng = np.random.default_rng(4)
        for _ in range(20):
            ok, _ = log_concavity_check(rng.standard_normal(8), rng.standard_normal(8), p, np.linspace(0, 1, 101))
            assert ok

    def test_grid_outside_unit_interval(self):
        p = BesovParams(s=1.5, N=8)
        with pytest.raises(ValueError):
            log_concavity_check(np.zeros(8), np.zeros(8), p, [1.5])


def test_continuous_representative():
    p = BesovParams(s=1.5, N=16)
    rng = np.random.default_rng(8)
    h = rng.standard_normal(16) / p.ell**3
    assert besov_norm(h, p.s + 1) < np.inf
    u = rng.standard_normal(16)
    w = rng.standard_normal(16)
    target = math.exp(log_rn_derivative(h, u, p))
    gaps = [abs(math.exp(log_rn_derivative(h, u + w / k, p)) - target) for k in (1, 10, 100, 1000, 10_000)]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3


def test_field_json_round_trip():
    p = BesovParams(s=1.5, N=4)
    f = CoefficientField([1.0, -2.0, 0.5, 0.0], p)
    obj = f.to_json()
    assert obj == {"s": 1.5, "d": 1, "N": 4, "coeffs": [1.0, -2.0, 0.5, 0.0]}
    back = CoefficientField.from_json(obj, p)
    np.testing.assert_array_equal(back.coeffs, f.coeffs)
    with pytest.raises(ValueError):
        CoefficientField.from_json(dict(obj, N=8), p)
    with pytest.raises(ValueError):
        CoefficientField([1.0, np.nan, 0, 0], p)
