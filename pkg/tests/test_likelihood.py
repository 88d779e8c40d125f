import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbsfit import (
    DensityMatrix,
    InfeasibleTargets,
    ObservableSet,
    SampleMeans,
    combine_images,
    is_compatible,
    pauli,
    pauli_basis,
    random_density_matrix,
    sanov_log_likelihood,
    sanov_state,
    stein_log_likelihood,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def binary_entropy(p):
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


class TestSampleMeans:
    def test_range_check(self, obs_x):
        with pytest.raises(ValueError, match="spectral range"):
            SampleMeans(obs_x, [1.5], 10)

    def test_size_check(self, obs_x):
        with pytest.raises(ValueError):
            SampleMeans(obs_x, [0.1], 0)
        with pytest.raises(ValueError):
            SampleMeans(obs_x, [0.1, 0.2], 10)

    def test_values_frozen(self, obs_x):
        m = SampleMeans(obs_x, [0.1], 10)
        assert m.N == 10 and m.labels == ("X",) or list(m.labels) == ["X"]
        with pytest.raises(ValueError):
            m.values[0] = 0.2


class TestStein:
    def test_identical_is_zero(self, rng):
        rho = random_density_matrix(3, rng)
        assert stein_log_likelihood(rho, rho, 50) == pytest.approx(0.0, abs=1e-11)

    def test_pure_vs_mixed(self, mixed2):
        # S(pure || I/2) = ln 2
        assert stein_log_likelihood(DensityMatrix.pure([1, 0]), mixed2, 100) == pytest.approx(-100 * math.log(2), abs=1e-12)

    def test_linear_in_n(self, rng):
        mu, rho = random_density_matrix(2, rng), random_density_matrix(2, rng)
        assert stein_log_likelihood(mu, rho, 20) == 2 * stein_log_likelihood(mu, rho, 10)

    def test_off_support(self):
        assert stein_log_likelihood(DensityMatrix.pure([1, 0]), DensityMatrix.pure([0, 1]), 3) == -math.inf

    def test_dimension_mismatch(self, mixed2):
        with pytest.raises(ValueError):
            stein_log_likelihood(mixed2, DensityMatrix.maximally_mixed(3), 1)


class TestSanov:
    def test_compatible_reference(self, rng, obs_x):
        rho = random_density_matrix(2, rng)
        means = SampleMeans(obs_x, obs_x.expectations(rho), 500)
        assert sanov_log_likelihood(means, rho) == pytest.approx(0.0, abs=1e-10)

    def test_qubit_closed_form(self, obs_x, mixed2):
        means = SampleMeans(obs_x, [0.5], 1000)
        expected = -1000 * (math.log(2) - binary_entropy(0.75))
        assert expected == pytest.approx(-130.812035941137, abs=1e-10)
        assert sanov_log_likelihood(means, mixed2) == pytest.approx(expected, abs=1e-9)

    def test_sanov_state(self, obs_x, mixed2):
        mu = sanov_state(SampleMeans(obs_x, [0.3], 10), mixed2)
        np.testing.assert_allclose(mu.matrix, (np.eye(2) + 0.3 * pauli("X").matrix) / 2, atol=1e-12)

    def test_infeasible_is_reported(self):
        obs = ObservableSet([pauli("X"), pauli("Z")], ["X", "Z"])
        with pytest.raises(InfeasibleTargets):
            sanov_log_likelihood(SampleMeans(obs, [0.8, 0.8], 10), DensityMatrix.maximally_mixed(2))

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds, n=st.sampled_from([1, 2]))
    def test_reduces_to_stein(self, seed, n):
        rng = np.random.default_rng(seed)
        d = 2**n
        pool = pauli_basis(n)
        mu, rho = random_density_matrix(d, rng), random_density_matrix(d, rng)
        means = SampleMeans(pool, pool.expectations(mu), 1000)
        assert abs(sanov_log_likelihood(means, rho) - stein_log_likelihood(mu, rho, 1000)) <= 1e-8

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds)
    def test_minimizer_dominates(self, seed):
        # any other state with the same means is less likely
        rng = np.random.default_rng(seed)
        obs = ObservableSet([pauli("ZI"), pauli("XX")])
        mu, rho = random_density_matrix(4, rng), random_density_matrix(4, rng)
        means = SampleMeans(obs, obs.expectations(mu), 100)
        assert sanov_log_likelihood(means, rho) >= stein_log_likelihood(mu, rho, 100) - 1e-9

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds)
    def test_more_constraints_never_more_likely(self, seed):
        rng = np.random.default_rng(seed)
        mu, rho = random_density_matrix(4, rng), random_density_matrix(4, rng)
        small = ObservableSet([pauli("ZI")])
        big = ObservableSet([pauli("ZI"), pauli("IX"), pauli("YY")])
        a = sanov_log_likelihood(SampleMeans(small, small.expectations(mu), 100), rho)
        b = sanov_log_likelihood(SampleMeans(big, big.expectations(mu), 100), rho)
        assert b <= a + 1e-9


class TestCompatibility:
    def test_reference_always_compatible(self, rng, obs_x):
        rho = random_density_matrix(2, rng)
        means = SampleMeans(obs_x, obs_x.expectations(rho), 10**6)
        assert is_compatible(means, rho, 1e-3)

    def test_large_n_excludes(self, obs_x, mixed2):
        results = [is_compatible(SampleMeans(obs_x, [0.2], n), mixed2, 0.5) for n in (10, 100, 1000, 10000)]
        assert results == sorted(results, reverse=True)
        assert results[0] and not results[-1]

    def test_boundary(self, obs_x, mixed2):
        s = math.log(2) - binary_entropy(0.55)
        assert s == pytest.approx(0.00500836684635686, abs=1e-15)
        n_star = math.log(2) / s
        assert 138 < n_star < 139
        assert is_compatible(SampleMeans(obs_x, [0.1], 138), mixed2, 0.5)
        assert not is_compatible(SampleMeans(obs_x, [0.1], 139), mixed2, 0.5)

    def test_monotone_in_epsilon(self, obs_x, mixed2):
        means = SampleMeans(obs_x, [0.1], 200)
        flags = [is_compatible(means, mixed2, e) for e in np.linspace(0.05, 0.95, 19)]
        first = flags.index(True)
        assert all(flags[first:])

    def test_epsilon_range(self, obs_x, mixed2):
        with pytest.raises(ValueError):
            is_compatible(SampleMeans(obs_x, [0.1], 10), mixed2, 1.0)


class TestMixingRule:
    def test_equal_images(self, rng):
        mu = random_density_matrix(3, rng)
        out, n = combine_images(mu, 4, mu, 6)
        np.testing.assert_allclose(out.matrix, mu.matrix, atol=1e-15)
        assert n == 10

    def test_equal_weights(self, rng):
        a, b = random_density_matrix(2, rng), random_density_matrix(2, rng)
        out, _ = combine_images(a, 5, b, 5)
        np.testing.assert_allclose(out.matrix, (a.matrix + b.matrix) / 2, atol=1e-15)

    @settings(max_examples=10, deadline=None)
    @given(seed=seeds)
    def test_defect_independent_of_reference(self, seed):
        rng = np.random.default_rng(seed)
        mu, mu2 = random_density_matrix(3, rng), random_density_matrix(3, rng)
        n, n2 = (int(k) for k in rng.integers(1, 1000, size=2))
        avg, total = combine_images(mu, n, mu2, n2)
        h = []
        for _ in range(20):
            rho = random_density_matrix(3, rng)
            h.append(stein_log_likelihood(mu, rho, n) + stein_log_likelihood(mu2, rho, n2) - stein_log_likelihood(avg, rho, total))
        assert np.var(h) < 1e-10

    def test_validation(self, mixed2):
        with pytest.raises(ValueError):
            combine_images(mixed2, 0, mixed2, 1)
        with pytest.raises(ValueError):
            combine_images(mixed2, 1, DensityMatrix.maximally_mixed(3), 1)
