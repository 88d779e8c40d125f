"""Maximum-entropy fitting, step by step.

Run with ``python demos/maxent_fit.py``.
"""

import math

import numpy as np

from gibbsfit import (
    DensityMatrix,
    ObservableSet,
    fit_gibbs,
    pauli,
    pythagoras_residual,
    random_density_matrix,
    relative_entropy,
    von_neumann_entropy,
)

# A single qubit with a known <Z>.  Maximum entropy gives a thermal state
# exp(-kappa Z)/Z whose multiplier inverts tanh.
obs = ObservableSet([pauli("Z")], ["Z"])
rep = fit_gibbs(obs, [0.5])
print(f"<Z> = 0.5  ->  kappa = {rep.kappa[0]:.12f}  (-atanh(0.5) = {-math.atanh(0.5):.12f})")
print(f"  {rep.iterations} Newton steps, residual {rep.residual:.1e}")
print(f"  entropy {von_neumann_entropy(rep.state):.6f} <= ln 2 = {math.log(2):.6f}")

# Against a reference biased the other way the same data need a larger multiplier.
sigma = DensityMatrix.from_bloch([0.0, 0.0, -0.3])
rel = fit_gibbs(obs, [0.5], sigma)
print(f"with sigma biased to <Z> = -0.3: kappa = {rel.kappa[0]:.6f}")

# Two non-commuting constraints on a pair of qubits.
rng = np.random.default_rng(0)
truth = random_density_matrix(4, rng)
pair = ObservableSet([pauli("ZZ"), pauli("XI"), pauli("IX")], ["ZZ", "XI", "IX"])
fit = fit_gibbs(pair, pair.expectations(truth))
print(f"two qubits: kappa = {np.round(fit.kappa, 6)}, residual {fit.residual:.1e}")
print(f"  S(truth || fit) = {relative_entropy(truth, fit.state):.6f}")

# The fitted state splits the divergence from any reference exactly.
print(f"  Pythagoras residual {pythagoras_residual(truth, DensityMatrix.maximally_mixed(4), pair):.1e}")

# Targets no state can reach are reported, not silently fitted.
try:
    fit_gibbs(ObservableSet([pauli("X"), pauli("Z")]), [0.8, 0.8])
except ValueError as exc:
    print(f"<X> = <Z> = 0.8: {type(exc).__name__}")
