"""Which observables are relevant?  Recovering a Hamiltonian from data.

Twenty two-qubit samples are thermalized at different temperatures under
one Hamiltonian H.  Each is measured in all fifteen Pauli settings with
10^4 shots, reconstructed, and every hypothesis of at most two candidate
observables is scored by fit minus the Occam penalty.

Run with ``python demos/model_selection.py [seed]``.
"""

import sys

import numpy as np

from gibbsfit import (
    DensityMatrix,
    EnsembleSpec,
    ObservableSet,
    RelevanceHypothesis,
    enumerate_hypotheses,
    generate_ensemble,
    pauli,
    pauli_basis,
    rank_hypotheses,
    score_hypothesis,
)

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

h = pauli("ZZ").matrix + 0.3 * (pauli("XI").matrix + pauli("IX").matrix)
h /= np.max(np.abs(np.linalg.eigvalsh(h)))
pool = ObservableSet(
    [h, pauli("ZI").matrix + pauli("IZ").matrix, pauli("XX"), pauli("YY")],
    ["H", "M", "XX", "YY"],
)

kappas = np.random.default_rng(seed).uniform(0.1, 2.0, size=20)
spec = EnsembleSpec(
    sigma=DensityMatrix.maximally_mixed(4),
    family=pool.subset([0]),
    parameter_draws=[[k] for k in kappas],
    sizes=[10**4] * 20,
    measurement_set=pauli_basis(2),
    seed=seed,
)
records = generate_ensemble(spec)

print(f"{'hypothesis':12s} {'fit':>12s} {'penalty':>10s} {'total':>12s} {'weight':>8s}")
for hyp, score, weight in rank_hypotheses(records, enumerate_hypotheses(pool, 2), pool):
    print(f"{hyp.label:12s} {score.fit_term:12.3f} {score.penalty_term:10.3f} {score.total:12.3f} {weight:8.3f}")

# Fitting every sample perfectly is not worth fifteen parameters each.
ic = pauli_basis(2)
full = score_hypothesis(records, RelevanceHypothesis.from_indices(range(len(ic)), ic), ic)
print(f"{'all Paulis':12s} {full.fit_term:12.3f} {full.penalty_term:10.3f} {full.total:12.3f}")
