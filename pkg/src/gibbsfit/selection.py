"""Scoring and ranking of relevance hypotheses over an ensemble of samples.

A hypothesis names a subset of a candidate pool of observables.  Each
sample's image is projected onto the hypothesis' Gibbs manifold and the
hypothesis is scored by

    -sum_i N_i S(image_i || projection_i) - (p/2) sum_i ln N_i

up to hypothesis-independent constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from ._parallel import ordered_map
from .gibbs import fit_gibbs
from .operators import DensityMatrix, ObservableSet, relative_entropy
from .tomography import SampleRecord

DEFAULT_MAX_SIZE = 3
SPAN_TOL = 1e-9


class InfiniteDivergence(ValueError):
    """An image is not supported inside its projection (rank-deficient image)."""


@dataclass(frozen=True)
class RelevanceHypothesis:
    label: str
    observable_indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.observable_indices)
        if len(set(idx)) != len(idx):
            raise ValueError("observable indices must be distinct")
        if any(i < 0 for i in idx):
            raise ValueError("observable indices must be non-negative")
        object.__setattr__(self, "observable_indices", idx)

    @property
    def p(self) -> int:
        return len(self.observable_indices)

    @classmethod
    def from_indices(cls, indices, pool: ObservableSet) -> "RelevanceHypothesis":
        idx = tuple(sorted(int(i) for i in indices))
        if any(i >= len(pool) for i in idx):
            raise ValueError(f"index out of range for a pool of {len(pool)}")
        return cls(hypothesis_label(idx, pool), idx)

    @classmethod
    def from_labels(cls, labels: Sequence[str], pool: ObservableSet) -> "RelevanceHypothesis":
        lookup = {s: i for i, s in enumerate(pool.labels)}
        try:
            return cls.from_indices([lookup[s] for s in labels], pool)
        except KeyError as exc:
            raise ValueError(f"unknown observable label {exc.args[0]!r}") from None


def hypothesis_label(indices, pool: ObservableSet) -> str:
    return "{" + ", ".join(pool.labels[i] for i in indices) + "}"


@dataclass(frozen=True, eq=False)
class HypothesisScore:
    fit_term: float
    penalty_term: float
    total: float
    per_sample_divergences: tuple


def _check_hypothesis(hypothesis: RelevanceHypothesis, pool: ObservableSet):
    if any(i >= len(pool) for i in hypothesis.observable_indices):
        raise ValueError(f"hypothesis {hypothesis.label} indexes outside a pool of {len(pool)}")


def project_to_hypothesis(image, hypothesis: RelevanceHypothesis, pool: ObservableSet, sigma=None) -> DensityMatrix:
    """Closest state to ``image`` on the hypothesis' Gibbs manifold about sigma.

    The projection keeps the image's expectation values of the hypothesis
    observables and is otherwise as close to sigma as possible.
    """
    _check_hypothesis(hypothesis, pool)
    image = image if isinstance(image, DensityMatrix) else DensityMatrix(image)
    subset = pool.subset(hypothesis.observable_indices)
    g = subset.expectations(image)
    return fit_gibbs(subset, g, sigma).state


def _check_encompassed(record: SampleRecord, pool: ObservableSet):
    """Every pool observable must lie in span{I, measured observables}."""
    measured = record.means.observables
    if measured.dim != pool.dim:
        raise ValueError(f"sample {record.id}: dimension {measured.dim} does not match the pool ({pool.dim})")
    basis = np.concatenate([np.eye(pool.dim)[None], measured.matrices]).reshape(len(measured) + 1, -1)
    target = pool.matrices.reshape(len(pool), -1)
    coef, *_ = np.linalg.lstsq(basis.T, target.T, rcond=None)
    miss = np.linalg.norm(basis.T @ coef - target.T, axis=0) / np.maximum(np.linalg.norm(target, axis=1), 1e-300)
    bad = [pool.labels[i] for i in np.flatnonzero(miss > SPAN_TOL)]
    if bad:
        raise ValueError(f"sample {record.id} was not measured over a set encompassing {bad}")


def score_hypothesis(
    samples: Sequence[SampleRecord],
    hypothesis: RelevanceHypothesis,
    pool: ObservableSet,
    sigma=None,
    *,
    check_measurements: bool = True,
) -> HypothesisScore:
    """Penalized asymptotic log-likelihood of a relevance hypothesis."""
    if not samples:
        raise ValueError("need at least one sample")
    _check_hypothesis(hypothesis, pool)
    divs = []
    for rec in samples:
        if not rec.image.is_full_rank():
            raise InfiniteDivergence(
                f"image of sample {rec.id} is rank-deficient; reconstruct it with shrinkage first"
            )
        if check_measurements:
            _check_encompassed(rec, pool)
        pi = project_to_hypothesis(rec.image, hypothesis, pool, sigma)
        s = relative_entropy(rec.image, pi)
        if math.isinf(s):
            raise InfiniteDivergence(f"infinite divergence for sample {rec.id}")
        divs.append(s)
    fit = 0.0 - math.fsum(rec.size * s for rec, s in zip(samples, divs))
    penalty = 0.0 - 0.5 * hypothesis.p * math.fsum(math.log(rec.size) for rec in samples)
    return HypothesisScore(fit_term=fit, penalty_term=penalty, total=fit + penalty, per_sample_divergences=tuple(divs))


@dataclass(frozen=True, eq=False)
class RankedHypothesis:
    hypothesis: RelevanceHypothesis
    score: HypothesisScore
    posterior_weight: float

    def __iter__(self):
        return iter((self.hypothesis, self.score, self.posterior_weight))


def rank_hypotheses(
    samples: Sequence[SampleRecord],
    hypotheses: Sequence[RelevanceHypothesis],
    pool: ObservableSet,
    sigma=None,
) -> list[RankedHypothesis]:
    """Score every hypothesis and sort by total, best first.

    Posterior weights assume a uniform prior over the listed hypotheses.
    Ties are broken by label.
    """
    hypotheses = list(hypotheses)
    if not hypotheses:
        raise ValueError("need at least one hypothesis")
    for rec in samples:
        _check_encompassed(rec, pool)
    scores = ordered_map(lambda h: score_hypothesis(samples, h, pool, sigma, check_measurements=False), hypotheses)
    totals = np.array([s.total for s in scores])
    rel = np.exp(totals - totals.max())
    weights = rel / math.fsum(rel)
    order = sorted(range(len(hypotheses)), key=lambda i: (-totals[i], hypotheses[i].label, hypotheses[i].observable_indices))
    return [RankedHypothesis(hypotheses[i], scores[i], float(weights[i])) for i in order]


def enumerate_hypotheses(pool: ObservableSet, max_size: Optional[int] = DEFAULT_MAX_SIZE) -> list[RelevanceHypothesis]:
    """All subsets of the pool with at most ``max_size`` members.

    Ordered by size, then lexicographically by index.
    """
    n = len(pool)
    if max_size is None:
        max_size = n
    if not 0 <= max_size <= n:
        raise ValueError(f"max_size must lie in [0, {n}]")
    return [
        RelevanceHypothesis.from_indices(c, pool)
        for k in range(max_size + 1)
        for c in combinations(range(n), k)
    ]
