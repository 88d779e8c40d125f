"""Generalized Gibbs states and the constrained relative-entropy fit.

The state minimizing ``S(mu||sigma)`` subject to ``<F_b> = f_b`` is

    mu = exp(ln sigma - kappa . F) / Z

restricted to the support of ``sigma``.  Its Lagrange parameters minimize
the convex dual ``psi(kappa) = ln Z(kappa) + kappa . f``, which
:func:`fit_gibbs` solves by damped Newton iterations with the exact
Kubo-Mori Hessian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .operators import (
    DensityMatrix,
    ObservableSet,
    relative_entropy,
)

logger = logging.getLogger(__name__)

FIT_TOL = 1e-10
MAX_ITER = 200
KAPPA_BOUND = 1e3
ARMIJO_SLOPE = 1e-4
BACKTRACK = 0.5
BOUNDARY_FACTOR = 10.0
POLISH_STEPS = 2


class GibbsFitError(Exception):
    """Base class for failures of :func:`fit_gibbs`."""


class InfeasibleTargets(GibbsFitError, ValueError):
    """Targets are not attainable by any full-rank state on sigma's support."""


class NonConvergence(GibbsFitError, RuntimeError):
    """The Newton iteration hit its cap without meeting the tolerance."""


@dataclass(frozen=True, eq=False)
class GibbsModel:
    sigma: DensityMatrix
    observables: ObservableSet
    kappa: np.ndarray
    state: DensityMatrix
    log_partition: float

    @property
    def labels(self):
        return self.observables.labels


@dataclass(frozen=True, eq=False)
class FitReport:
    model: GibbsModel
    iterations: int
    residual: float
    converged: bool

    @property
    def state(self) -> DensityMatrix:
        return self.model.state

    @property
    def kappa(self) -> np.ndarray:
        return self.model.kappa


def _default_sigma(observables: ObservableSet, sigma):
    if sigma is None:
        return DensityMatrix.maximally_mixed(observables.dim)
    if not isinstance(sigma, DensityMatrix):
        sigma = DensityMatrix(sigma)
    if sigma.dim != observables.dim:
        raise ValueError(f"dimension mismatch: sigma {sigma.dim} vs observables {observables.dim}")
    return sigma


class _Reduced:
    """Problem data expressed in the support subspace of sigma."""

    def __init__(self, observables: ObservableSet, sigma: DensityMatrix):
        if sigma.rank == 0:
            raise ValueError("reference state has empty support")
        self.basis = sigma.support_basis()
        self.log_w = np.log(sigma.eigenvalues[: sigma.rank])
        v = self.basis
        self.F = np.einsum("ij,bjk,kl->bil", v.conj().T, observables.matrices, v)
        self.F = 0.5 * (self.F + np.conj(np.swapaxes(self.F, 1, 2)))

    @property
    def r(self):
        return self.log_w.shape[0]

    def spectrum(self, kappa):
        """Eigen-decomposition of the exponent ln sigma - kappa . F."""
        k = np.diag(self.log_w).astype(complex)
        if len(kappa):
            k = k - np.tensordot(kappa, self.F, axes=1)
        return np.linalg.eigh(0.5 * (k + k.conj().T))

    def embed(self, m):
        return self.basis @ m @ self.basis.conj().T


def _state_from_spectrum(e, w):
    log_z = float(logsumexp(e))
    p = np.exp(e - log_z)
    return (w * p) @ w.conj().T, p, log_z


def _check_kappa(kappa, observables):
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    if kappa.shape != (len(observables),):
        raise ValueError(f"kappa has length {kappa.size}, expected {len(observables)}")
    return kappa


def gibbs_state(kappa, observables: ObservableSet, sigma=None) -> DensityMatrix:
    """Normalized ``exp(ln sigma - kappa . F)`` on the support of sigma."""
    sigma = _default_sigma(observables, sigma)
    kappa = _check_kappa(kappa, observables)
    red = _Reduced(observables, sigma)
    e, w = red.spectrum(kappa)
    m, _, _ = _state_from_spectrum(e, w)
    return DensityMatrix(red.embed(m), atol=1e-9)


def log_partition(kappa, observables: ObservableSet, sigma=None) -> float:
    """``ln tr exp(ln sigma - kappa . F)`` over sigma's support."""
    sigma = _default_sigma(observables, sigma)
    kappa = _check_kappa(kappa, observables)
    e, _ = _Reduced(observables, sigma).spectrum(kappa)
    return float(logsumexp(e))


def dual_objective(kappa, observables: ObservableSet, targets, sigma=None) -> float:
    """Convex dual ``psi(kappa) = ln Z(kappa) + kappa . targets``."""
    kappa = _check_kappa(kappa, observables)
    return log_partition(kappa, observables, sigma) + float(np.dot(kappa, targets))


def dual_gradient(kappa, observables: ObservableSet, targets, sigma=None) -> np.ndarray:
    """``targets - <F>`` evaluated at ``gibbs_state(kappa)``."""
    state = gibbs_state(kappa, observables, sigma)
    return np.asarray(targets, dtype=float) - observables.expectations(state)


def _kubo_mori(e, w, ops):
    """Kubo-Mori covariance of ``ops`` (shape (p, r, r)) at the state exp(e)/Z in basis w."""
    log_p = e - logsumexp(e)
    p = np.exp(log_p)
    rot = np.einsum("ij,bjk,kl->bil", w.conj().T, ops, w)
    means = np.einsum("bii,i->b", rot, p).real
    rot = rot - means[:, None, None] * np.eye(len(p))
    # (p_i - p_j)/(ln p_i - ln p_j) = max(p_i, p_j) * (1 - exp(-|x|))/|x|, x = ln p_i - ln p_j
    x = np.abs(log_p[:, None] - log_p[None, :])
    small = x < 1e-12
    ratio = np.where(small, 1.0 - 0.5 * x, -np.expm1(-x) / np.where(small, 1.0, x))
    kern = np.maximum(p[:, None], p[None, :]) * ratio
    return np.einsum("ij,aij,bij->ab", kern, rot, rot.conj()).real


def kubo_mori_hessian(kappa, observables: ObservableSet, sigma=None) -> np.ndarray:
    """Hessian of :func:`log_partition` with respect to kappa.

    Equal to the Kubo-Mori covariance matrix of the observables in the
    Gibbs state at ``kappa``.
    """
    sigma = _default_sigma(observables, sigma)
    kappa = _check_kappa(kappa, observables)
    red = _Reduced(observables, sigma)
    e, w = red.spectrum(kappa)
    return _kubo_mori(e, w, red.F)


class _Orthonormal:
    """Centered, Hilbert-Schmidt orthonormal basis for the reduced observables.

    With ``F~_b = F_b - tr(F_b)/r`` and orthonormal ``E_c`` we have
    ``F~_b = sum_c B[b, c] E_c``, so ``kappa . F~ = theta . E`` with
    ``theta = B^T kappa``.
    """

    def __init__(self, F: np.ndarray, r: int):
        p = F.shape[0]
        self.offset = np.trace(F, axis1=1, axis2=2).real / r
        centered = F - self.offset[:, None, None] * np.eye(r)
        flat = centered.reshape(p, -1)
        gram = (flat.conj() @ flat.T).real
        lam, q = np.linalg.eigh(gram)
        keep = lam > max(1e-10 * float(np.max(lam, initial=0.0)), 1e-20)
        self.q = q[:, keep]
        self.sqrt_lam = np.sqrt(lam[keep])
        self.B = self.q * self.sqrt_lam
        coeff = self.q / self.sqrt_lam
        self.E = np.tensordot(coeff.T, centered, axes=1)
        self.E = 0.5 * (self.E + np.conj(np.swapaxes(self.E, 1, 2)))

    @property
    def k(self):
        return self.E.shape[0]

    def targets(self, f):
        """Targets for <E>; None when the centered targets leave the span."""
        shifted = np.asarray(f, dtype=float) - self.offset
        e = (self.q.T @ shifted) / self.sqrt_lam
        if np.max(np.abs(self.B @ e - shifted), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(shifted), initial=0.0)):
            return None
        return e

    def kappa(self, theta):
        return self.q @ (theta / self.sqrt_lam)


def _finish(observables, sigma, kappa, iterations, residual, converged):
    state = gibbs_state(kappa, observables, sigma)
    model = GibbsModel(
        sigma=sigma,
        observables=observables,
        kappa=kappa,
        state=state,
        log_partition=log_partition(kappa, observables, sigma),
    )
    return FitReport(model=model, iterations=iterations, residual=residual, converged=converged)


def fit_gibbs(
    observables: ObservableSet,
    targets,
    sigma=None,
    *,
    tol: float = FIT_TOL,
    max_iter: int = MAX_ITER,
    kappa_bound: float = KAPPA_BOUND,
) -> FitReport:
    """Minimize ``S(mu||sigma)`` subject to ``<F_b>_mu = targets[b]``.

    With ``sigma = I/d`` (the default) this is plain entropy maximization.

    Raises:
        InfeasibleTargets: the targets lie outside the set attainable on the
            support of sigma; detected by a spectral-range pre-check or by
            the Lagrange parameters, in Hilbert-Schmidt orthonormal
            coordinates, exceeding ``kappa_bound``.
        NonConvergence: ``max_iter`` Newton steps without reaching ``tol``.
    """
    sigma = _default_sigma(observables, sigma)
    f = np.atleast_1d(np.asarray(targets, dtype=float))
    p = len(observables)
    if f.shape != (p,):
        raise ValueError(f"got {f.size} targets for {p} observables")
    if not np.all(np.isfinite(f)):
        raise ValueError("targets must be finite")
    red = _Reduced(observables, sigma)
    r = red.r

    if p == 0:
        return _finish(observables, sigma, np.zeros(0), 0, 0.0, True)

    lo = np.linalg.eigvalsh(red.F)[:, 0]
    hi = np.linalg.eigvalsh(red.F)[:, -1]
    slack = 1e-12 * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
    if np.any(f < lo - slack) or np.any(f > hi + slack):
        raise InfeasibleTargets(f"targets {f} outside the spectral ranges of the observables")

    basis = _Orthonormal(red.F, r)
    e_targets = basis.targets(f)
    if e_targets is None:
        raise InfeasibleTargets("targets inconsistent with linear relations among the observables on sigma's support")

    def evaluate(theta):
        k = np.diag(red.log_w).astype(complex)
        if basis.k:
            k = k - np.tensordot(theta, basis.E, axes=1)
        e, w = np.linalg.eigh(0.5 * (k + k.conj().T))
        m, prob, log_z = _state_from_spectrum(e, w)
        mean_e = np.einsum("bij,ji->b", basis.E, m).real
        psi = log_z + float(theta @ e_targets)
        return psi, e_targets - mean_e, m, e, w

    def residual_of(m):
        means = np.einsum("bij,ji->b", red.F, m).real
        return float(np.max(np.abs(means - f)))

    def polish(theta, grad, m, e, w, res):
        # full Newton steps kept only while the residual drops; cheap and
        # brings converged fits down to round-off
        for _ in range(POLISH_STEPS):
            try:
                step = -np.linalg.solve(_kubo_mori(e, w, basis.E), grad)
            except np.linalg.LinAlgError:
                break
            trial = theta + step
            _, grad_t, m_t, e_t, w_t = evaluate(trial)
            res_t = residual_of(m_t)
            if not res_t < res:
                break
            theta, grad, m, e, w, res = trial, grad_t, m_t, e_t, w_t, res_t
        return theta, m, e, res

    theta = np.zeros(basis.k)
    psi, grad, m, e, w = evaluate(theta)
    eps = np.finfo(float).eps
    for it in range(max_iter + 1):
        res = residual_of(m)
        if res <= tol:
            theta, m, e, res = polish(theta, grad, m, e, w, res)
            # a state this close to singular cannot be told apart from a boundary point
            if np.exp(np.min(e) - logsumexp(e)) <= BOUNDARY_FACTOR * tol:
                raise InfeasibleTargets("targets lie on the boundary of the attainable set")
            return _finish(observables, sigma, basis.kappa(theta), it, res, True)
        if it == max_iter:
            break
        hess = _kubo_mori(e, w, basis.E)
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        slope = float(grad @ step)
        if not np.all(np.isfinite(step)) or slope >= 0:
            step = -grad
            slope = -float(grad @ grad)
        t = 1.0
        accepted = False
        for _ in range(60):
            trial = theta + t * step
            psi_t, grad_t, m_t, e_t, w_t = evaluate(trial)
            slack = 16 * eps * (1.0 + abs(psi))
            armijo = psi_t <= psi + ARMIJO_SLOPE * t * slope + slack
            if np.isfinite(psi_t) and armijo:
                accepted = True
                break
            t *= BACKTRACK
        if not accepted or np.array_equal(trial, theta):
            logger.debug("line search stalled at iteration %d, residual %.3g", it, res)
            break
        theta, psi, grad, m, e, w = trial, psi_t, grad_t, m_t, e_t, w_t
        # bound the basis-independent coordinates, so an ill-conditioned
        # but feasible observable set is not mistaken for divergence
        if np.max(np.abs(theta)) > kappa_bound:
            raise InfeasibleTargets(
                f"Lagrange parameters diverged (|theta|_inf = {np.max(np.abs(theta)):.3g}); "
                "targets are at or beyond the boundary of the attainable set"
            )
    if np.exp(np.min(e) - logsumexp(e)) <= BOUNDARY_FACTOR * tol:
        # the dual kept decreasing toward a singular state: no interior solution exists
        raise InfeasibleTargets(
            f"iterates approach a singular state with residual {residual_of(m):.3g}; "
            "targets are at or beyond the boundary of the attainable set"
        )
    raise NonConvergence(f"no convergence after {it} iterations (residual {residual_of(m):.3g})")


def pythagoras_residual(mu, rho, observables: ObservableSet) -> float:
    """``|S(mu||rho) - S(mu||m) - S(m||rho)|`` where m fits mu's expectations relative to rho."""
    mu = mu if isinstance(mu, DensityMatrix) else DensityMatrix(mu)
    rho = rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho)
    g = observables.expectations(mu)
    m = fit_gibbs(observables, g, rho).state
    return abs(relative_entropy(mu, rho) - relative_entropy(mu, m) - relative_entropy(m, rho))
