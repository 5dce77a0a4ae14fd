"""Explicit double factorization of the two-electron integrals.

The N^2 x N^2 integral supermatrix annihilates antisymmetric index pairs, so
its eigenproblem is solved in the packed symmetric-pair basis. Each of the
N (N + 1) / 2 eigenpairs (g, V) forms a leaf; the symmetric eigen-matrix V is
then itself eigendecomposed into an orthogonal frame U and spectrum lambda,
yielding the diagonal two-body couplings Z = g * outer(lambda, lambda).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .givens import GivensFabric, decompose
from .hammodel import EffectiveOperators, Hamiltonian, effective_operators

__all__ = [
    "XDFLeaf",
    "XDFFactorization",
    "TruncationPolicy",
    "factorize",
    "reconstruct_eri",
    "z_tensor",
]

EIGEN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class XDFLeaf:
    """One term of the supermatrix eigendecomposition with its own orbital frame."""

    index: int
    g: float
    V: np.ndarray
    U: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        for name in ("V", "U", "lam"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def Z(self) -> np.ndarray:
        return z_tensor(self)


def z_tensor(leaf: XDFLeaf) -> np.ndarray:
    """Diagonal-coupling matrix Z[k, l] = lambda_k * g * lambda_l."""
    return leaf.g * np.outer(leaf.lam, leaf.lam)


@dataclass(frozen=True)
class TruncationPolicy:
    """Leaf retention rule: keep |g| >= threshold, or a fixed leading count."""

    mode: str
    threshold: float | None = None
    count: int | None = None

    def __post_init__(self):
        if self.mode not in ("threshold", "count"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.mode == "threshold" and (self.threshold is None or self.count is not None):
            raise ValueError("threshold mode takes exactly a threshold")
        if self.mode == "count" and (self.count is None or self.threshold is not None):
            raise ValueError("count mode takes exactly a count")

    @classmethod
    def by_threshold(cls, threshold: float) -> "TruncationPolicy":
        return cls("threshold", threshold=float(threshold))

    @classmethod
    def by_count(cls, count: int) -> "TruncationPolicy":
        return cls("count", count=int(count))

    @classmethod
    def exact(cls) -> "TruncationPolicy":
        return cls("threshold", threshold=-1.0)

    def retained_count(self, g_values: np.ndarray) -> int:
        if self.mode == "threshold":
            return int(np.sum(np.abs(g_values) >= self.threshold))
        return min(self.count, len(g_values))


@dataclass(frozen=True, eq=False)
class XDFFactorization:
    """Eigendecomposed one-body part plus the ordered list of two-body leaves.

    Leaves are sorted by descending |g|; the retained set is the length-T
    prefix. Discarded leaves stay available as data: the inter-leaf response
    couples retained to discarded frames.
    """

    n_orbitals: int
    n_alpha: int
    n_beta: int
    eff: EffectiveOperators
    U0: np.ndarray
    F0: np.ndarray
    leaves: tuple[XDFLeaf, ...]
    retained: int
    ham: Hamiltonian
    _fabric_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name in ("U0", "F0"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def retained_leaves(self) -> tuple[XDFLeaf, ...]:
        return self.leaves[: self.retained]

    @property
    def g_values(self) -> np.ndarray:
        return np.array([leaf.g for leaf in self.leaves])

    def fabric0(self) -> GivensFabric:
        if "0" not in self._fabric_cache:
            self._fabric_cache["0"] = decompose(self.U0)
        return self._fabric_cache["0"]

    def leaf_fabric(self, t: int) -> GivensFabric:
        if t not in self._fabric_cache:
            self._fabric_cache[t] = decompose(self.leaves[t].U)
        return self._fabric_cache[t]

    def with_retained(self, retained: int) -> "XDFFactorization":
        return XDFFactorization(
            self.n_orbitals, self.n_alpha, self.n_beta, self.eff,
            self.U0, self.F0, self.leaves, int(retained), self.ham,
        )


def _sign_fix_columns(u: np.ndarray) -> np.ndarray:
    u = u.copy()
    for k in range(u.shape[1]):
        lead = int(np.argmax(np.abs(u[:, k])))
        if u[lead, k] < 0:
            u[:, k] = -u[:, k]
    return u


def _special_orthogonalize(u: np.ndarray) -> np.ndarray:
    u = _sign_fix_columns(u)
    if np.linalg.det(u) < 0:
        u[:, -1] = -u[:, -1]
    return u


def _symmetric_pairs(n: int) -> list[tuple[int, int]]:
    return [(p, q) for p in range(n) for q in range(p, n)]


def _pair_basis(n: int) -> np.ndarray:
    """Orthonormal basis of vectorized symmetric matrices, columns of shape N^2."""
    pairs = _symmetric_pairs(n)
    basis = np.zeros((n * n, len(pairs)))
    for col, (p, q) in enumerate(pairs):
        mat = np.zeros((n, n))
        if p == q:
            mat[p, p] = 1.0
        else:
            mat[p, q] = mat[q, p] = 1.0 / np.sqrt(2.0)
        basis[:, col] = mat.reshape(-1)
    return basis


def factorize(ham: Hamiltonian, policy: TruncationPolicy) -> XDFFactorization:
    """Nested eigendecomposition of a Hamiltonian into X-DF leaves.

    All leaves are kept regardless of the truncation policy; ``retained``
    marks the prefix entering the two-body energy.
    """
    ham.validate()
    n = ham.n_orbitals
    eff = effective_operators(ham)

    f0, u0 = np.linalg.eigh(eff.eff_one_body)
    u0 = _special_orthogonalize(u0)

    basis = _pair_basis(n)
    packed = basis.T @ ham.supermatrix() @ basis
    packed = 0.5 * (packed + packed.T)
    g_all, w_all = np.linalg.eigh(packed)

    raw = []
    for col in range(w_all.shape[1]):
        vec = basis @ w_all[:, col]
        lead = int(np.argmax(np.abs(vec)))
        if vec[lead] < 0:
            vec = -vec
        first_nonzero = int(np.argmax(np.abs(vec) > 1e-12))
        raw.append((float(g_all[col]), vec, first_nonzero))

    raw.sort(key=lambda item: (-abs(item[0]), item[2], item[1].tobytes()))

    leaves = []
    for index, (g, vec, _) in enumerate(raw):
        v = vec.reshape(n, n)
        v = 0.5 * (v + v.T)
        lam, u = np.linalg.eigh(v)
        u = _special_orthogonalize(u)
        leaves.append(XDFLeaf(index, g, v, u, lam))

    retained = policy.retained_count(np.array([leaf.g for leaf in leaves]))
    return XDFFactorization(
        n, ham.n_alpha, ham.n_beta, eff, u0, f0, tuple(leaves), retained, ham,
    )


def reconstruct_eri(fac: XDFFactorization, use_retained_only: bool = False) -> np.ndarray:
    """Rebuild (pq|rs) from the leaf frames, optionally truncated.

    Contracts through the U / Z factors rather than the raw eigenvectors so
    the nested decomposition itself is exercised.
    """
    n = fac.n_orbitals
    out = np.zeros((n * n, n * n))
    leaves = fac.retained_leaves if use_retained_only else fac.leaves
    for leaf in leaves:
        cols = np.stack([np.outer(leaf.U[:, k], leaf.U[:, k]).reshape(-1)
                         for k in range(n)], axis=1)
        out += cols @ z_tensor(leaf) @ cols.T
    return out.reshape(n, n, n, n)
