import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm, logm

from gibbsfit import (
    DensityMatrix,
    InfeasibleTargets,
    NonConvergence,
    ObservableSet,
    dual_gradient,
    dual_objective,
    fit_gibbs,
    gibbs_state,
    kubo_mori_hessian,
    log_partition,
    pauli,
    pythagoras_residual,
    random_density_matrix,
    random_hermitian,
    von_neumann_entropy,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_instance(rng, d, p):
    obs = ObservableSet([random_hermitian(d, rng) for _ in range(p)])
    return obs, random_density_matrix(d, rng)


def central_gradient(fun, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


class TestGibbsState:
    def test_zero_kappa_reproduces_sigma(self, rng):
        obs, sigma = random_instance(rng, 3, 2)
        np.testing.assert_allclose(gibbs_state([0, 0], obs, sigma).matrix, sigma.matrix, atol=1e-14)

    @pytest.mark.parametrize("lam", [-1.3, 0.0, 0.4, 2.0])
    def test_qubit_tanh(self, obs_z, mixed2, lam):
        state = gibbs_state([lam], obs_z, mixed2)
        assert np.trace(state.matrix @ pauli("Z").matrix).real == pytest.approx(-math.tanh(lam), abs=1e-14)

    def test_canonical_form(self, rng):
        obs = ObservableSet([random_hermitian(4, rng) for _ in range(2)])
        lam = rng.normal(size=2)
        m = expm(-sum(l * o.matrix for l, o in zip(lam, obs)))
        m /= np.trace(m)
        np.testing.assert_allclose(gibbs_state(lam, obs).matrix, m, atol=1e-12)

    def test_generalized_form_with_scipy(self, rng):
        obs, sigma = random_instance(rng, 3, 2)
        kappa = rng.normal(size=2)
        m = expm(logm(sigma.matrix) - sum(k * o.matrix for k, o in zip(kappa, obs)))
        m /= np.trace(m)
        np.testing.assert_allclose(gibbs_state(kappa, obs, sigma).matrix, m, atol=1e-9)

    def test_rank_deficient_sigma_keeps_support(self):
        sigma = DensityMatrix(np.diag([0.6, 0.4, 0.0]))
        obs = ObservableSet([np.diag([1.0, -1.0, 0.0]) + 0j, np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0]])])
        state = gibbs_state([0.3, 0.7], obs, sigma)
        assert abs(state.matrix[2, 2]) < 1e-15
        a = np.array([0.6 * math.exp(-0.3), 0.4 * math.exp(0.3)])
        np.testing.assert_allclose(np.diag(state.matrix)[:2].real, a / a.sum(), atol=1e-14)

    def test_length_mismatch(self, obs_z):
        with pytest.raises(ValueError):
            gibbs_state([1.0, 2.0], obs_z)

    def test_empty_support(self):
        # a DensityMatrix always has rank >= 1, so sigma cannot be empty; check dim mismatch instead
        with pytest.raises(ValueError):
            gibbs_state([0.0], ObservableSet([pauli("XX")]), DensityMatrix.maximally_mixed(2))


class TestLogPartition:
    def test_zero(self, rng):
        obs, sigma = random_instance(rng, 3, 2)
        assert log_partition([0, 0], obs, sigma) == pytest.approx(0.0, abs=1e-14)

    def test_lncosh(self, obs_z, mixed2):
        assert log_partition([0.7], obs_z, mixed2) == pytest.approx(0.22727022935850563, abs=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(seed=seeds, d=st.sampled_from([2, 3, 4]), p=st.integers(1, 3))
    def test_gradient_matches_finite_differences(self, seed, d, p):
        rng = np.random.default_rng(seed)
        obs, sigma = random_instance(rng, d, p)
        kappa = rng.normal(size=p) * 0.5
        fd = central_gradient(lambda k: log_partition(k, obs, sigma), kappa)
        exact = -obs.expectations(gibbs_state(kappa, obs, sigma))
        assert np.max(np.abs(fd - exact)) <= 1e-6 * max(1.0, np.max(np.abs(exact)))

    @settings(max_examples=25, deadline=None)
    @given(seed=seeds, d=st.sampled_from([2, 3, 4]), p=st.integers(1, 3))
    def test_hessian_matches_finite_differences(self, seed, d, p):
        rng = np.random.default_rng(seed)
        obs, sigma = random_instance(rng, d, p)
        kappa = rng.normal(size=p) * 0.5
        f = rng.normal(size=p)
        h = kubo_mori_hessian(kappa, obs, sigma)
        fd = np.array([central_gradient(lambda k: dual_gradient(k, obs, f, sigma)[a], kappa) for a in range(p)])
        # grad psi = f - <F>, so d(grad)/d kappa = +Hessian of ln Z
        assert np.max(np.abs(fd - h)) <= 1e-4 * np.max(np.abs(h))
        np.testing.assert_allclose(h, h.T, atol=1e-14)
        assert np.linalg.eigvalsh(h)[0] > 0

    @settings(max_examples=25, deadline=None)
    @given(seed=seeds)
    def test_dual_convex(self, seed):
        rng = np.random.default_rng(seed)
        obs, sigma = random_instance(rng, 3, 2)
        f = obs.expectations(random_density_matrix(3, rng))
        k1, k2 = rng.normal(size=(2, 2)) * 2
        t = rng.uniform(0.01, 0.99)
        lhs = dual_objective(t * k1 + (1 - t) * k2, obs, f, sigma)
        rhs = t * dual_objective(k1, obs, f, sigma) + (1 - t) * dual_objective(k2, obs, f, sigma)
        assert lhs <= rhs + 1e-10


class TestFit:
    def test_reference_already_satisfies(self, rng):
        obs, sigma = random_instance(rng, 3, 2)
        rep = fit_gibbs(obs, obs.expectations(sigma), sigma)
        np.testing.assert_allclose(rep.kappa, 0.0, atol=1e-12)
        np.testing.assert_allclose(rep.state.matrix, sigma.matrix, atol=1e-12)
        assert rep.iterations == 0

    def test_tanh_inversion(self, obs_z, mixed2):
        rep = fit_gibbs(obs_z, [0.5], mixed2)
        assert rep.converged and rep.residual <= 1e-10
        assert rep.kappa[0] == pytest.approx(-0.5493061443340548, abs=1e-10)
        assert np.trace(rep.state.matrix @ pauli("Z").matrix).real == pytest.approx(0.5, abs=1e-10)

    @pytest.mark.parametrize("target", [1.2, -1.5])
    def test_outside_spectrum(self, obs_z, target):
        with pytest.raises(InfeasibleTargets):
            fit_gibbs(obs_z, [target])

    def test_boundary_is_infeasible(self, obs_z):
        with pytest.raises(InfeasibleTargets):
            fit_gibbs(obs_z, [1.0])

    def test_jointly_infeasible(self):
        # each mean is in range, but <X>^2 + <Z>^2 <= 1 fails
        obs = ObservableSet([pauli("X"), pauli("Z")], ["X", "Z"])
        with pytest.raises(InfeasibleTargets):
            fit_gibbs(obs, [0.8, 0.8])

    def test_iteration_cap(self, rng):
        obs, sigma = random_instance(rng, 4, 3)
        f = obs.expectations(random_density_matrix(4, rng))
        with pytest.raises(NonConvergence):
            fit_gibbs(obs, f, sigma, max_iter=1)

    def test_empty_observables(self, rng):
        sigma = random_density_matrix(3, rng)
        rep = fit_gibbs(ObservableSet([], dim=3), [], sigma)
        np.testing.assert_allclose(rep.state.matrix, sigma.matrix, atol=1e-14)

    def test_kappa_in_user_basis(self, rng):
        # a rescaled and shifted observable must give the rescaled multiplier
        obs = ObservableSet([pauli("Z")])
        shifted = ObservableSet([3 * pauli("Z").matrix + 2 * np.eye(2)])
        k1 = fit_gibbs(obs, [0.3]).kappa[0]
        k2 = fit_gibbs(shifted, [3 * 0.3 + 2]).kappa[0]
        assert k2 == pytest.approx(k1 / 3, abs=1e-10)

    def test_rank_deficient_sigma(self):
        sigma = DensityMatrix(np.diag([0.5, 0.5, 0.0]))
        obs = ObservableSet([np.diag([1.0, -1.0, 0.0]) + 0j])
        rep = fit_gibbs(obs, [0.2], sigma)
        np.testing.assert_allclose(np.diag(rep.state.matrix).real, [0.6, 0.4, 0.0], atol=1e-12)
        # observable constant on the support: only its constant value is attainable
        obs2 = ObservableSet([np.diag([1.0, 1.0, -2.0]) + 0j])
        assert fit_gibbs(obs2, [1.0], sigma).residual <= 1e-10
        with pytest.raises(InfeasibleTargets):
            fit_gibbs(obs2, [0.5], sigma)

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds, d=st.sampled_from([2, 4, 8]), p=st.integers(1, 4))
    def test_idempotent(self, seed, d, p):
        p = min(p, d * d - 1)
        rng = np.random.default_rng(seed)
        obs, sigma = random_instance(rng, d, p)
        rep = fit_gibbs(obs, obs.expectations(random_density_matrix(d, rng)), sigma)
        again = fit_gibbs(obs, obs.expectations(rep.state), sigma)
        np.testing.assert_allclose(again.kappa, rep.kappa, atol=1e-8)

    @settings(max_examples=15, deadline=None)
    @given(seed=seeds, d=st.sampled_from([3, 4]))
    def test_max_entropy(self, seed, d):
        rng = np.random.default_rng(seed)
        obs = ObservableSet([random_hermitian(d, rng) for _ in range(2)])
        rep = fit_gibbs(obs, obs.expectations(random_density_matrix(d, rng)))
        s0 = von_neumann_entropy(rep.state)
        # perturb along a traceless direction orthogonal to every constraint
        basis = [np.eye(d)] + [o.matrix for o in obs]
        x = random_hermitian(d, rng).matrix
        for _ in range(2):
            for b in basis:
                x = x - np.trace(b @ x).real / np.trace(b @ b).real * b
            q, _ = np.linalg.qr(np.array([bb.ravel() for bb in basis]).T)
            x = x - (q @ (q.conj().T @ x.ravel())).reshape(d, d)
        x = 0.5 * (x + x.conj().T)
        x /= np.linalg.norm(x)
        for t in (1e-2, 1e-3):
            pert = rep.state.matrix + t * x
            if np.linalg.eigvalsh(pert)[0] <= 0:
                continue
            assert np.max(np.abs(obs.expectations(DensityMatrix(pert)) - obs.expectations(rep.state))) < 1e-12
            assert von_neumann_entropy(DensityMatrix(pert)) - s0 <= 1e-10


class TestPythagoras:
    def test_identical(self, rng):
        rho = random_density_matrix(2, rng)
        assert pythagoras_residual(rho, rho, ObservableSet([pauli("X")])) < 1e-12

    def test_qubit(self, rng):
        mu, rho = random_density_matrix(2, rng), random_density_matrix(2, rng)
        assert pythagoras_residual(mu, rho, ObservableSet([pauli("X")])) < 1e-8

    def test_two_qubit(self, rng):
        mu, rho = random_density_matrix(4, rng), random_density_matrix(4, rng)
        obs = ObservableSet([pauli("ZI"), pauli("IZ")])
        assert pythagoras_residual(mu, rho, obs) < 1e-8
