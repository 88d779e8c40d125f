"""Asymptotic likelihoods of tomographic data.

Two regimes are covered.  A complete tomographic image ``mu`` from ``N``
copies has the Stein log-likelihood ``-N S(mu||rho)``.  Sample means of
an incomplete observable set have the Sanov log-likelihood
``-N S(mu_f^rho||rho)``, where ``mu_f^rho`` is the generalized Gibbs state
closest to ``rho`` that reproduces the means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gibbs import fit_gibbs
from .operators import DensityMatrix, ObservableSet, relative_entropy

RANGE_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class SampleMeans:
    """Per-observable sample means from one sample of ``sample_size`` copies."""

    observables: ObservableSet
    values: np.ndarray
    sample_size: int

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float)).copy()
        if values.shape != (len(self.observables),):
            raise ValueError(f"{values.size} values for {len(self.observables)} observables")
        n = int(self.sample_size)
        if n != self.sample_size or n < 1:
            raise ValueError(f"sample size must be a positive integer, got {self.sample_size!r}")
        for b, op in enumerate(self.observables):
            lo, hi = op.spectral_range()
            tol = RANGE_ATOL * max(1.0, abs(lo), abs(hi))
            if not lo - tol <= values[b] <= hi + tol:
                raise ValueError(
                    f"mean {values[b]!r} of {self.observables.labels[b]} outside spectral range [{lo}, {hi}]"
                )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sample_size", n)

    @property
    def labels(self):
        return self.observables.labels

    @property
    def N(self) -> int:
        return self.sample_size


def _check_dims(a: DensityMatrix, b: DensityMatrix):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def _state(x) -> DensityMatrix:
    return x if isinstance(x, DensityMatrix) else DensityMatrix(x)


def stein_log_likelihood(mu, rho, N: int) -> float:
    """``-N S(mu||rho)``; ``-inf`` when the relative entropy is infinite."""
    mu, rho = _state(mu), _state(rho)
    _check_dims(mu, rho)
    if N < 1:
        raise ValueError("N must be at least 1")
    s = relative_entropy(mu, rho)
    return -math.inf if math.isinf(s) else -N * s


def sanov_state(means: SampleMeans, rho) -> DensityMatrix:
    """The state closest to ``rho`` (in relative entropy) that reproduces the means."""
    rho = _state(rho)
    if rho.dim != means.observables.dim:
        raise ValueError(f"dimension mismatch: {means.observables.dim} vs {rho.dim}")
    return fit_gibbs(means.observables, means.values, rho).state


def sanov_log_likelihood(means: SampleMeans, rho) -> float:
    """``-N S(mu_f^rho||rho)`` for sample means f.

    Raises :class:`~gibbsfit.gibbs.InfeasibleTargets` if no state on the
    support of ``rho`` reproduces the means; the caller decides whether
    that is a zero likelihood or a reconstruction problem.
    """
    rho = _state(rho)
    mu = sanov_state(means, rho)
    return -means.sample_size * relative_entropy(mu, rho)


def is_compatible(means: SampleMeans, rho, epsilon: float) -> bool:
    """Whether ``rho`` lies in the compatibility set at error level epsilon.

    Uses the asymptotic exponent: true iff ``N S <= -ln(1 - epsilon)``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    return -sanov_log_likelihood(means, rho) <= -math.log1p(-epsilon)


def combine_images(mu, N: int, mu2, N2: int) -> tuple[DensityMatrix, int]:
    """Image and size of the pooled sample: the size-weighted average."""
    mu, mu2 = _state(mu), _state(mu2)
    _check_dims(mu, mu2)
    if N < 1 or N2 < 1:
        raise ValueError("sample sizes must be at least 1")
    total = N + N2
    avg = (N / total) * mu.matrix + (N2 / total) * mu2.matrix
    return DensityMatrix(avg), total
