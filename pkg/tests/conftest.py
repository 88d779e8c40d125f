import sys
import numpy as np
import pytest

from gibbsfit import DensityMatrix, ObservableSet, pauli


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def mixed2():
    return DensityMatrix.maximally_mixed(2)


@pytest.fixture
def obs_x():
    return ObservableSet([pauli("X")], ["X"])


@pytest.fixture
def obs_z():
    return ObservableSet([pauli("Z")], ["Z"])


def trace_oracle(rho, G):
    """sum_ij rho_ij G_ji by explicit loops."""
    rho = np.asarray(rho)
    G = np.asarray(G)
    d = rho.shape[0]
    total = 0j
    for i in range(d):
        for j in range(d):
            total += rho[i, j] * G[j, i]
    return total.real


def canonical_pool():
    """Two-qubit candidate pool; H is the generating observable."""
    from gibbsfit import pauli

    h = pauli("ZZ").matrix + 0.3 * (pauli("XI").matrix + pauli("IX").matrix)
    h = h / np.max(np.abs(np.linalg.eigvalsh(h)))
    m = pauli("ZI").matrix + pauli("IZ").matrix
    return ObservableSet([h, m, pauli("XX"), pauli("YY")], ["H", "M", "XX", "YY"])


def canonical_ensemble_spec(seed, samples=20, size=10**4, pool=None):
    """Single-observable canonical family with kappa ~ U(0.1, 2) per sample."""
    from gibbsfit import EnsembleSpec, pauli_basis

    pool = pool or canonical_pool()
    kappas = np.random.default_rng(seed).uniform(0.1, 2.0, size=samples)
    return EnsembleSpec(
        sigma=DensityMatrix.maximally_mixed(4),
        family=pool.subset([0]),
        parameter_draws=[[k] for k in kappas],
        sizes=[size] * samples,
        measurement_set=pauli_basis(2),
        seed=seed,
    )


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
