"""Spectral calculus on small dense Hermitian matrices.

Holds the operator and state types used throughout the package together
with expectation values, von Neumann entropy and relative entropy (with
explicit support handling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Iterable, Sequence, Union

import numpy as np
from scipy.special import xlogy

#: Relative threshold: an eigenvalue counts as zero when <= SUPPORT_RTOL * max eigenvalue.
SUPPORT_RTOL = 1e-12
HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-10
PSD_ATOL = 1e-12
INDEPENDENCE_TOL = 1e-10

ArrayLike = Union[np.ndarray, Sequence]


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


def _sorted_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition with descending eigenvalues and a canonical basis.

    Each eigenvector's phase is fixed so that its first non-negligible
    component is real positive.  Near-degenerate eigenvalues are ordered
    by the lexicographic order of their (phase-fixed) eigenvectors.
    """
    w, v = np.linalg.eigh(_symmetrize(a))
    for k in range(v.shape[1]):
        col = v[:, k]
        idx = int(np.argmax(np.abs(col) > 1e-8))
        phase = col[idx] / abs(col[idx])
        v[:, k] = col / phase
    w = w[::-1]
    v = v[:, ::-1]
    scale = max(1.0, float(np.max(np.abs(w))))
    order = []
    start = 0
    n = len(w)
    while start < n:
        stop = start + 1
        while stop < n and abs(w[stop] - w[start]) <= 1e-12 * scale:
            stop += 1
        group = list(range(start, stop))
        if len(group) > 1:
            keys = [
                tuple(np.round(np.concatenate([v[:, k].real, v[:, k].imag]), 10))
                for k in group
            ]
            group = [g for _, g in sorted(zip(keys, group))]
        order.extend(group)
        start = stop
    return w[order].copy(), v[:, order].copy()


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """A dense d x d Hermitian matrix (d >= 2).

    The stored entries are exactly Hermitian: input within ``atol`` of
    Hermitian is replaced by ``(A + A^H) / 2``.
    """

    entries: np.ndarray
    atol: float = field(default=HERMITIAN_ATOL, repr=False)

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"operator must be a square matrix, got shape {a.shape}")
        if a.shape[0] < 2:
            raise ValueError("operator dimension must be at least 2")
        err = float(np.max(np.abs(a - a.conj().T)))
        if err > self.atol:
            raise ValueError(f"matrix is not Hermitian (max deviation {err:.3g})")
        object.__setattr__(self, "entries", _readonly(_symmetrize(a)))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.entries

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Descending eigenvalues and matching orthonormal eigenvectors."""
        return _sorted_eigh(self.entries)

    def spectral_range(self) -> tuple[float, float]:
        w = np.linalg.eigvalsh(self.entries)
        return float(w[0]), float(w[-1])

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim})"


@dataclass(frozen=True, eq=False, init=False)
class DensityMatrix:
    """Positive semidefinite unit-trace operator with a cached spectrum.

    Accepts a :class:`HermitianOperator` or anything convertible to a
    square complex array.  Eigenvalues are stored in descending order;
    those at or below the support tolerance are stored as exact zeros.
    """

    op: HermitianOperator
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __init__(self, op, *, atol: float = HERMITIAN_ATOL):
        if not isinstance(op, HermitianOperator):
            op = HermitianOperator(np.asarray(op, dtype=complex), atol=atol)
        tr = float(np.trace(op.entries).real)
        if abs(tr - 1.0) > TRACE_ATOL:
            raise ValueError(f"density matrix must have unit trace, got {tr!r}")
        w, v = _sorted_eigh(op.entries)
        if w[-1] < -PSD_ATOL:
            raise ValueError(f"density matrix has negative eigenvalue {w[-1]:.3g}")
        w = np.where(w <= SUPPORT_RTOL * w[0], 0.0, w)
        w.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "eigenvalues", w)
        object.__setattr__(self, "eigenvectors", v)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    @classmethod
    def pure(cls, psi: ArrayLike) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def from_bloch(cls, r: ArrayLike) -> "DensityMatrix":
        """Qubit state (1 + r.sigma)/2 for a Bloch vector with |r| <= 1."""
        x, y, z = (float(c) for c in r)
        return cls(0.5 * (np.eye(2) + x * PAULI["X"] + y * PAULI["Y"] + z * PAULI["Z"]))

    @property
    def dim(self) -> int:
        return self.op.dim

    @property
    def matrix(self) -> np.ndarray:
        return self.op.entries

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.op.entries, dtype=dtype)

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.eigenvalues))

    def support_basis(self) -> np.ndarray:
        """Orthonormal columns spanning the support."""
        return self.eigenvectors[:, : self.rank]

    def is_full_rank(self) -> bool:
        return self.rank == self.dim

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, rank={self.rank})"


class ObservableSet:
    """Ordered, labelled list of Hermitian observables on a common space.

    The operators together with the identity must be linearly independent.
    An empty set is allowed when ``dim`` is given.
    """

    def __init__(self, observables: Iterable, labels: Sequence[str] | None = None, dim: int | None = None):
        ops = tuple(o if isinstance(o, HermitianOperator) else HermitianOperator(o) for o in observables)
        if labels is None:
            labels = [f"F{b + 1}" for b in range(len(ops))]
        labels = tuple(str(s) for s in labels)
        if len(labels) != len(ops):
            raise ValueError("number of labels does not match number of observables")
        if len(set(labels)) != len(labels):
            raise ValueError("observable labels must be distinct")
        if ops:
            dims = {o.dim for o in ops}
            if len(dims) != 1:
                raise ValueError(f"observables have mixed dimensions {sorted(dims)}")
            (d,) = dims
            if dim is not None and dim != d:
                raise ValueError("dim does not match the observables")
            dim = d
        elif dim is None:
            raise ValueError("an empty observable set needs an explicit dim")
        self.dim = int(dim)
        self.observables = ops
        self.labels = labels
        stack = np.array([o.entries for o in ops], dtype=complex).reshape(len(ops), self.dim, self.dim)
        stack.setflags(write=False)
        self._stack = stack
        self._check_independent()

    def _check_independent(self):
        if not self.observables:
            return
        d = self.dim
        traces = np.trace(self._stack, axis1=1, axis2=2).real / d
        centered = self._stack - traces[:, None, None] * np.eye(d)
        flat = centered.reshape(len(self), -1)
        norms = np.linalg.norm(flat, axis=1)
        if np.any(norms < INDEPENDENCE_TOL):
            raise ValueError("an observable is proportional to the identity")
        flat = flat / norms[:, None]
        gram = (flat.conj() @ flat.T).real
        smallest = float(np.linalg.eigvalsh(gram)[0])
        if smallest <= INDEPENDENCE_TOL:
            raise ValueError(
                f"observables are linearly dependent together with the identity (Gram eigenvalue {smallest:.3g})"
            )

    @property
    def matrices(self) -> np.ndarray:
        """Read-only array of shape (p, d, d)."""
        return self._stack

    def __len__(self):
        return len(self.observables)

    def __iter__(self):
        return iter(self.observables)

    def __getitem__(self, item):
        return self.observables[item]

    def subset(self, indices: Iterable[int]) -> "ObservableSet":
        idx = list(indices)
        return ObservableSet([self.observables[i] for i in idx], [self.labels[i] for i in idx], dim=self.dim)

    def expectations(self, rho: "DensityMatrix") -> np.ndarray:
        return np.array([expectation(rho, o) for o in self.observables])

    def __repr__(self):
        return f"ObservableSet(dim={self.dim}, labels={list(self.labels)})"


def _matrix(x) -> np.ndarray:
    if isinstance(x, DensityMatrix):
        return x.op.entries
    if isinstance(x, HermitianOperator):
        return x.entries
    return np.asarray(x, dtype=complex)


def _as_state(x) -> DensityMatrix:
    return x if isinstance(x, DensityMatrix) else DensityMatrix(x)


def expectation(rho, G) -> float:
    """Return ``tr(rho G)`` as a real number."""
    r, g = _matrix(rho), _matrix(G)
    if r.shape != g.shape:
        raise ValueError(f"dimension mismatch: {r.shape} vs {g.shape}")
    # tr(rho G) = sum_ij rho_ij G_ji
    return float(np.sum(r * g.T).real)


def von_neumann_entropy(rho) -> float:
    """Entropy ``-tr(rho ln rho)`` in nats, with 0 ln 0 = 0."""
    w = _as_state(rho).eigenvalues
    s = -float(np.sum(xlogy(w, w)))
    return max(s, 0.0)


def relative_entropy(mu, rho) -> float:
    """Quantum relative entropy ``S(mu||rho) = tr(mu ln mu - mu ln rho)``.

    Returns ``math.inf`` when the support of ``mu`` is not contained in the
    support of ``rho``.  Otherwise the logarithm of ``rho`` is taken on its
    support subspace only.
    """
    mu, rho = _as_state(mu), _as_state(rho)
    if mu.dim != rho.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {rho.dim}")
    basis = rho.support_basis()
    w = rho.eigenvalues[: rho.rank]
    block = basis.conj().T @ mu.matrix @ basis
    leakage = 1.0 - float(np.trace(block).real)
    if leakage >= SUPPORT_RTOL:
        return math.inf
    m = mu.eigenvalues
    cross = float(np.sum(np.diag(block).real * np.log(w)))
    s = float(np.sum(xlogy(m, m))) - cross
    return max(s, 0.0)


_NAMED = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt}


def hermitian_function(A, f: Union[str, Callable[[np.ndarray], np.ndarray]]) -> HermitianOperator:
    """Apply a scalar function through the spectral decomposition of ``A``.

    ``f`` is a vectorised callable or one of ``"exp"``, ``"log"``,
    ``"sqrt"``.  Taking the logarithm requires every eigenvalue to lie above
    the support tolerance.
    """
    a = _symmetrize(_matrix(A))
    if isinstance(f, str):
        try:
            f = _NAMED[f]
        except KeyError:
            raise ValueError(f"unknown function name {f!r}") from None
    w, v = np.linalg.eigh(a)
    if f is np.log:
        cutoff = SUPPORT_RTOL * max(float(np.max(w)), 0.0)
        if np.any(w <= cutoff):
            raise ValueError("logarithm requested on an eigenvalue at or below the support tolerance")
    fw = np.asarray(f(w))
    out = (v * fw) @ v.conj().T
    return HermitianOperator(_symmetrize(out), atol=np.inf)


PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli(label: str) -> HermitianOperator:
    """Tensor product of Pauli matrices, e.g. ``pauli("ZX")`` = Z (x) X."""
    try:
        mats = [PAULI[c] for c in label.upper()]
    except KeyError:
        raise ValueError(f"bad Pauli label {label!r}") from None
    if not mats:
        raise ValueError("empty Pauli label")
    m = reduce(np.kron, mats)
    if m.shape[0] < 2:
        raise ValueError("empty Pauli label")
    return HermitianOperator(m)


def pauli_basis(n_qubits: int) -> ObservableSet:
    """All 4**n - 1 non-identity Pauli strings; informationally complete."""
    from itertools import product

    labels = ["".join(p) for p in product("IXYZ", repeat=n_qubits)][1:]
    return ObservableSet([pauli(s) for s in labels], labels)


def random_density_matrix(dim: int, rng=None, rank: int | None = None) -> DensityMatrix:
    """Random state from the induced Hilbert-Schmidt (Ginibre) ensemble."""
    rng = np.random.default_rng(rng)
    k = dim if rank is None else rank
    g = rng.normal(size=(dim, k)) + 1j * rng.normal(size=(dim, k))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def random_hermitian(dim: int, rng=None) -> HermitianOperator:
    rng = np.random.default_rng(rng)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return HermitianOperator(0.5 * (g + g.conj().T))


def random_unitary(dim: int, rng=None) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    rng = np.random.default_rng(rng)
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
