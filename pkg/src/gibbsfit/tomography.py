"""Synthetic tomography: sampling, max-ent reconstruction, ensembles and the
qubit grid-posterior demonstration."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import xlogy

from ._parallel import ordered_map
from .gibbs import GibbsFitError, InfeasibleTargets, NonConvergence, fit_gibbs, gibbs_state
from .likelihood import SampleMeans
from .operators import DensityMatrix, ObservableSet

logger = logging.getLogger(__name__)

SHRINK_BASE = 0.99
SHRINK_MAX_STEPS = 500
DEFAULT_PRIOR_WIDTH = 0.5
DEFAULT_RESOLUTION = 101
SUPPORT_MODES = ("full-ball", "x-axis", "y-axis")
LIKELIHOODS = ("measurement", "sanov")


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate_sample(true_state: DensityMatrix, measurement_set: ObservableSet, N: int, seed) -> SampleMeans:
    """Measure each observable projectively on its own N copies.

    Outcomes are eigenvalues drawn with Born-rule probabilities; the
    returned means are deterministic given ``seed``.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    if true_state.dim != measurement_set.dim:
        raise ValueError("dimension mismatch between state and measurement set")
    rng = _rng(seed)
    rho = true_state.matrix
    means = []
    for op in measurement_set:
        w, v = np.linalg.eigh(op.matrix)
        probs = np.einsum("ik,ij,jk->k", v.conj(), rho, v).real
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        counts = rng.multinomial(int(N), probs)
        nz = counts > 0
        means.append(float(np.dot(counts[nz], w[nz])) / N)
    means = np.array(means)
    # keep means inside the spectral range despite rounding
    for b, op in enumerate(measurement_set):
        lo, hi = op.spectral_range()
        means[b] = min(max(means[b], lo), hi)
    return SampleMeans(measurement_set, means, int(N))


@dataclass(frozen=True, eq=False)
class Reconstruction:
    image: DensityMatrix
    shrink_factor: float
    shrink_steps: int
    residual: float
    targets: np.ndarray


def reconstruct_image(means: SampleMeans, sigma: Optional[DensityMatrix] = None) -> Reconstruction:
    """Maximum-entropy (relative to sigma) image reproducing the sample means.

    Means that no full-rank state attains are shrunk toward sigma's
    expectation values, ``f <- g f + (1 - g) <F>_sigma`` with ``g = 0.99**k``
    for the smallest k that fits.
    """
    obs = means.observables
    if sigma is None:
        sigma = DensityMatrix.maximally_mixed(obs.dim)
    f = np.asarray(means.values, dtype=float)
    try:
        rep = fit_gibbs(obs, f, sigma)
        return Reconstruction(rep.state, 1.0, 0, rep.residual, f)
    except GibbsFitError as exc:
        logger.debug("reconstruction needs shrinkage: %s", exc)
    ref = obs.expectations(sigma)
    for k in range(1, SHRINK_MAX_STEPS + 1):
        gamma = SHRINK_BASE**k
        shrunk = gamma * f + (1.0 - gamma) * ref
        try:
            rep = fit_gibbs(obs, shrunk, sigma)
        except GibbsFitError:
            continue
        return Reconstruction(rep.state, gamma, k, rep.residual, shrunk)
    raise NonConvergence(f"no fit after {SHRINK_MAX_STEPS} shrinkage steps")


@dataclass(frozen=True, eq=False)
class SampleRecord:
    id: str
    size: int
    means: SampleMeans
    image: DensityMatrix
    true_state: Optional[DensityMatrix] = None
    shrink_factor: float = 1.0
    residual: float = 0.0


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    """Samples drawn from one Gibbs family with per-sample Lagrange parameters."""

    sigma: DensityMatrix
    family: ObservableSet
    parameter_draws: Sequence[Sequence[float]]
    sizes: Sequence[int]
    measurement_set: ObservableSet
    seed: int = 0
    reconstruction_sigma: Optional[DensityMatrix] = field(default=None)

    def __post_init__(self):
        draws = [np.atleast_1d(np.asarray(k, dtype=float)) for k in self.parameter_draws]
        if not draws:
            raise ValueError("ensemble needs at least one parameter draw")
        if len(draws) != len(self.sizes):
            raise ValueError("parameter_draws and sizes must have equal length")
        for k in draws:
            if k.shape != (len(self.family),):
                raise ValueError(f"parameter draw of length {k.size}, family has {len(self.family)} observables")
        if any(int(n) != n or n < 1 for n in self.sizes):
            raise ValueError("sizes must be positive integers")
        if not (self.sigma.dim == self.family.dim == self.measurement_set.dim):
            raise ValueError("sigma, family and measurement set must share the dimension")
        object.__setattr__(self, "parameter_draws", tuple(draws))
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        object.__setattr__(self, "seed", int(self.seed))


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for sample ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def generate_ensemble(spec: EnsembleSpec) -> list[SampleRecord]:
    """Simulate and reconstruct every sample of the ensemble."""
    width = max(3, len(str(len(spec.sizes) - 1)))

    def one(i):
        true = gibbs_state(spec.parameter_draws[i], spec.family, spec.sigma)
        means = simulate_sample(true, spec.measurement_set, spec.sizes[i], sample_stream(spec.seed, i))
        rec = reconstruct_image(means, spec.reconstruction_sigma)
        return SampleRecord(
            id=f"sample-{i:0{width}d}",
            size=spec.sizes[i],
            means=means,
            image=rec.image,
            true_state=true,
            shrink_factor=rec.shrink_factor,
            residual=rec.residual,
        )

    return ordered_map(one, range(len(spec.sizes)))


def trace_distance(a, b) -> float:
    m = np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))))


# -- qubit grid posterior -------------------------------------------------


def _binary_kl(p, q):
    """KL divergence between Bernoulli(p) and Bernoulli(q), elementwise."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(p, p) - xlogy(p, q) + xlogy(1 - p, 1 - p) - xlogy(1 - p, 1 - q)
    return np.where(np.isnan(out), np.inf, out)


def measurement_log_likelihood(bloch: np.ndarray, xbar: float, N: int) -> np.ndarray:
    """Log-likelihood of an X-measurement record with mean xbar, per Bloch vector.

    Depends on the state only through <X>; -inf where the record is impossible.
    """
    x = np.clip(np.asarray(bloch, dtype=float)[..., 0], -1.0, 1.0)
    return -N * _binary_kl((1 + xbar) / 2, (1 + x) / 2)


def _neg_entropy_bloch(r):
    """tr(rho ln rho) for qubit states with Bloch length r."""
    a, b = (1 + r) / 2, (1 - r) / 2
    return xlogy(a, a) + xlogy(b, b)


def qubit_sanov_log_likelihood(bloch: np.ndarray, xbar: float, N: int) -> np.ndarray:
    """Vectorised Sanov log-likelihood of an X mean for qubit states.

    For ``rho = (1 + r.sigma)/2`` the constrained minimizer is
    ``exp(w.sigma)/Z`` with ``w = atanh|r| r_hat - kappa e_x``; its Bloch
    vector is ``tanh|w| w_hat``.  The scalar constraint on ``w_x`` is
    solved by bisection.
    """
    r = np.asarray(bloch, dtype=float).reshape(-1, 3)
    norm = np.linalg.norm(r, axis=1)
    out = np.full(len(r), -np.inf)
    pure = norm >= 1.0 - 1e-12
    out[pure & (np.abs(r[:, 0] - xbar) <= 1e-12)] = 0.0
    mixed = ~pure
    rm, nm = r[mixed], norm[mixed]
    a = np.arctanh(nm)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(nm[:, None] > 0, rm * (a / np.where(nm > 0, nm, 1.0))[:, None], 0.0)
    perp = np.hypot(u[:, 1], u[:, 2])

    def mean_x(s):
        length = np.hypot(s, perp)
        with np.errstate(invalid="ignore", divide="ignore"):
            val = np.tanh(length) * s / length
        return np.where(length > 0, val, 0.0)

    if abs(xbar) >= 1.0:
        # only states already at <X> = xbar can reproduce a sharp mean
        out[mixed] = -np.inf
        return out.reshape(np.shape(bloch)[:-1])
    lo = np.full(len(rm), -1e3)
    hi = np.full(len(rm), 1e3)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = mean_x(mid) < xbar
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    s = 0.5 * (lo + hi)
    w = np.stack([s, u[:, 1], u[:, 2]], axis=1)
    wl = np.linalg.norm(w, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        m = np.where(wl[:, None] > 0, w * (np.tanh(wl) / np.where(wl > 0, wl, 1.0))[:, None], 0.0)
    mlen = np.linalg.norm(m, axis=1)
    # tr(mu ln rho) = 0.5 ln((1 - |r|^2)/4) + atanh|r| (r_hat . m) = ... + u . m
    cross = 0.5 * np.log((1 - nm**2) / 4) + np.sum(u * m, axis=1)
    s_rel = np.maximum(_neg_entropy_bloch(mlen) - cross, 0.0)
    out[mixed] = -N * s_rel
    return out.reshape(np.shape(bloch)[:-1])


@dataclass(frozen=True, eq=False)
class GridPosterior:
    """Posterior weights on a Bloch-ball grid.

    ``axis`` holds the grid values along each used coordinate.  For the
    axis modes ``weights`` has shape (resolution,); for the full ball it
    has shape (resolution,)*3 and vanishes outside the unit ball.
    """

    support_mode: str
    axis: np.ndarray
    prior: np.ndarray
    weights: np.ndarray
    log_weights: np.ndarray

    @property
    def resolution(self) -> int:
        return len(self.axis)

    def coordinates(self) -> np.ndarray:
        """Bloch vectors of every grid cell, shape ``weights.shape + (3,)``."""
        t = self.axis
        if self.support_mode == "x-axis":
            z = np.zeros_like(t)
            return np.stack([t, z, z], axis=-1)
        if self.support_mode == "y-axis":
            z = np.zeros_like(t)
            return np.stack([z, t, z], axis=-1)
        return np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1)

    def support_mask(self) -> np.ndarray:
        if self.support_mode == "full-ball":
            return np.linalg.norm(self.coordinates(), axis=-1) <= 1.0 + 1e-12
        return np.ones(self.weights.shape, dtype=bool)

    def total_variation(self, other) -> float:
        other = other.weights if isinstance(other, GridPosterior) else np.asarray(other)
        return 0.5 * float(np.sum(np.abs(self.weights - other)))

    def marginal(self, coordinate: int) -> np.ndarray:
        """Marginal weights along x (0), y (1) or z (2) of the full-ball grid."""
        if self.support_mode != "full-ball":
            raise ValueError("marginals are defined for the full-ball grid")
        axes = tuple(a for a in range(3) if a != coordinate)
        return self.weights.sum(axis=axes)

    def mode(self) -> np.ndarray:
        """Bloch vector of the posterior peak, refined below the grid spacing.

        The arg-max cell is refined by a parabola through the log weights
        of its two neighbours along each grid direction.
        """
        idx = np.unravel_index(int(np.argmax(self.log_weights)), self.weights.shape)
        h = self.axis[1] - self.axis[0]
        point = []
        for dim_, i in enumerate(idx):
            pos = float(self.axis[i])
            if 0 < i < self.resolution - 1:
                lo = list(idx)
                hi = list(idx)
                lo[dim_] -= 1
                hi[dim_] += 1
                fm, f0, fp = self.log_weights[tuple(lo)], self.log_weights[idx], self.log_weights[tuple(hi)]
                denom = fm - 2 * f0 + fp
                if np.isfinite(fm) and np.isfinite(fp) and denom < 0:
                    pos += h * 0.5 * (fm - fp) / denom
            point.append(pos)
        if self.support_mode == "x-axis":
            return np.array([point[0], 0.0, 0.0])
        if self.support_mode == "y-axis":
            return np.array([0.0, point[0], 0.0])
        return np.array(point)

    def to_csv(self, path) -> None:
        """Write ``x,y,z,weight`` rows for every cell on the support."""
        coords = self.coordinates()[self.support_mask()]
        weights = self.weights[self.support_mask()]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "y", "z", "weight"])
            for (x, y, z), wt in zip(coords, weights):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(z)), repr(float(wt))])


def _normalize_log(logw: np.ndarray):
    top = np.max(logw)
    if not np.isfinite(top):
        raise ValueError("posterior vanishes on the whole grid")
    w = np.exp(logw - top)
    total = math.fsum(w.ravel())
    return w / total, logw - top - math.log(total)


def _grid(support_mode: str, resolution: int):
    if support_mode not in SUPPORT_MODES:
        raise ValueError(f"support_mode must be one of {SUPPORT_MODES}, got {support_mode!r}")
    if resolution < 11:
        raise ValueError("resolution must be at least 11")
    return np.linspace(-1.0, 1.0, int(resolution))


def _log_likelihood(kind: str, coords, xbar, N):
    if kind == "measurement":
        return measurement_log_likelihood(coords, xbar, N)
    if kind == "sanov":
        return qubit_sanov_log_likelihood(coords, xbar, N)
    raise ValueError(f"likelihood must be one of {LIKELIHOODS}, got {kind!r}")


def bloch_prior(support_mode: str, prior_width: float = DEFAULT_PRIOR_WIDTH, resolution: int = DEFAULT_RESOLUTION) -> GridPosterior:
    """Truncated Gaussian prior centered on the totally mixed state."""
    if prior_width <= 0:
        raise ValueError("prior_width must be positive")
    axis = _grid(support_mode, resolution)
    empty = np.zeros(len(axis) if support_mode != "full-ball" else (len(axis),) * 3)
    shell = GridPosterior(support_mode, axis, empty, empty, empty)
    coords = shell.coordinates()
    mask = shell.support_mask()
    logp = np.where(mask, -np.sum(coords**2, axis=-1) / (2 * prior_width**2), -np.inf)
    w, logw = _normalize_log(logp)
    return GridPosterior(support_mode, axis, w, w, logw)


def update_posterior(posterior: GridPosterior, xbar: float, N: int, likelihood: str = "measurement") -> GridPosterior:
    """One Bayes step: multiply by the likelihood of an X mean and renormalize."""
    if abs(xbar) > 1:
        raise ValueError("|xbar| must not exceed 1")
    if N < 1:
        raise ValueError("N must be at least 1")
    loglik = _log_likelihood(likelihood, posterior.coordinates(), xbar, N)
    # drop the additive constant first so a flat likelihood stays exactly flat
    top = np.max(loglik[posterior.support_mask()])
    if np.isfinite(top):
        loglik = loglik - top
    w, logw = _normalize_log(posterior.log_weights + loglik)
    return GridPosterior(posterior.support_mode, posterior.axis, posterior.prior, w, logw)


def qubit_posterior(
    support_mode: str,
    prior_width: float = DEFAULT_PRIOR_WIDTH,
    xbar: float = 0.0,
    N: int = 1,
    resolution: int = DEFAULT_RESOLUTION,
    likelihood: str = "measurement",
) -> GridPosterior:
    """Posterior over qubit states after observing the sample mean of X.

    ``support_mode`` restricts the prior to the whole Bloch ball or to the
    x or y axis.  ``likelihood="measurement"`` uses the exact asymptotics
    of the X measurement record; ``"sanov"`` uses the quantum Sanov
    exponent, which also depends on the off-axis Bloch components.
    """
    prior = bloch_prior(support_mode, prior_width, resolution)
    return update_posterior(prior, xbar, N, likelihood)
