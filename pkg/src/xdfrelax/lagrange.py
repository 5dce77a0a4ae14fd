"""Relaxed density matrices from nested multiplier solves.

The energy only sees eigenbasis densities, so its integral derivatives need
response terms for every frame the factorization fixed: fabric angles (eta),
one-body and leaf eigenvectors (mu), and the two-electron eigenvectors (nu).
Each solve feeds the next; the final assembly reproduces the full one- and
two-body density matrices without ever measuring their off-diagonals.

Sign conventions are self-consistent within this package (see the scalar
N=2 closed form in the tests): with eta solving  A eta = -dE/dtheta  and
eta_eig = U^T eta,

    mu[a, b]  = (eta_eig[a, b] - eta_eig[b, a]) / (spec[a] - spec[b]),  a > b,
    nu[t, u]  = (R[t, u] - R[u, t]) / (g[u] - g[t]),                    t > u,

where spec is the relevant eigenvalue vector and R projects the leaf-frame
energy and mu gradients onto foreign eigenvectors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import qsim
from .givens import jacobian, pinv_solve
from .qsim import EigenbasisDensities, Statevector
from .xdf import XDFFactorization

__all__ = [
    "MultiplierSet",
    "RelaxedRDMs",
    "solve_eta",
    "solve_mu0",
    "solve_mu_leaf",
    "solve_nu",
    "relaxed_gamma",
    "relaxed_Gamma",
    "measure_and_solve",
    "reconstruct_rdms",
    "ABLATION_MODES",
]

ETA_RESIDUAL_TOL = 1e-8
DEGENERACY_GUARD = 1e-8
STATIONARITY_TOL = 1e-8

ABLATION_MODES = ("eta0", "etat", "nu")


@dataclass(frozen=True, eq=False)
class MultiplierSet:
    """Solved multipliers; strictly-lower-triangular storage throughout.

    ``nu`` spans all leaf pairs t > u and is structurally zero when both
    indices are discarded leaves.
    """

    eta0: np.ndarray
    eta: tuple[np.ndarray, ...]
    mu0: np.ndarray
    mu: tuple[np.ndarray, ...]
    nu: np.ndarray
    eta_residual: float
    ablated: str | None = None


@dataclass(frozen=True, eq=False)
class RelaxedRDMs:
    """Reconstructed density matrices, raw and symmetrized."""

    gamma: np.ndarray
    Gamma: np.ndarray
    gamma_sym: np.ndarray
    Gamma_sym: np.ndarray
    gamma_bar: np.ndarray


def _lower_to_matrix(values: np.ndarray, n: int) -> np.ndarray:
    mat = np.zeros((n, n))
    idx = 0
    for p in range(n):
        for k in range(p):
            mat[p, k] = values[idx]
            idx += 1
    return mat


def _solve_eta(fac: XDFFactorization, state: Statevector, leaf_id):
    fabric = fac.fabric0() if leaf_id is None else fac.leaf_fabric(leaf_id)
    jac = jacobian(fabric)
    rhs = -np.array([qsim.denergy_dtheta_shift(state, fac, leaf_id, g)
                     for g in range(len(fabric.pivots))])
    eta_vec = pinv_solve(jac, rhs)
    residual = float(np.max(np.abs(jac.matrix @ eta_vec - rhs))) if rhs.size else 0.0
    if residual > ETA_RESIDUAL_TOL:
        warnings.warn(
            f"eta solve residual {residual:.3e} for leaf {leaf_id}; "
            "state may not be stationary", stacklevel=3)
    return _lower_to_matrix(eta_vec, fac.n_orbitals), residual


def solve_eta(fac: XDFFactorization, state: Statevector, leaf_id) -> np.ndarray:
    """Fabric-angle multipliers from the pseudoinverted angle Jacobian.

    Solves sum_{p>k} eta[p, k] * A[g, (p, k)] = -dE/dtheta_g with shift-rule
    energy derivatives; returns the strictly-lower-triangular eta matrix.
    """
    return _solve_eta(fac, state, leaf_id)[0]


def _mu_from_eta(eta_lower: np.ndarray, frame: np.ndarray, spectrum: np.ndarray,
                 guard: float) -> np.ndarray:
    eta_eig = frame.T @ eta_lower
    n = len(spectrum)
    spread = float(np.max(spectrum) - np.min(spectrum)) if n else 0.0
    cutoff = guard * max(spread, 1e-300)
    mu = np.zeros((n, n))
    for a in range(n):
        for b in range(a):
            denom = spectrum[a] - spectrum[b]
            if abs(denom) <= cutoff:
                continue  # degenerate pair: numerator vanishes by symmetry
            mu[a, b] = (eta_eig[a, b] - eta_eig[b, a]) / denom
    return mu


def solve_mu0(eta0: np.ndarray, u0: np.ndarray, f0: np.ndarray,
              guard: float = DEGENERACY_GUARD) -> np.ndarray:
    """One-body eigenvector multipliers; quotient over the F0 spectrum."""
    return _mu_from_eta(eta0, u0, f0, guard)


def solve_mu_leaf(eta_t: np.ndarray, u_t: np.ndarray, lam_t: np.ndarray,
                  guard: float = DEGENERACY_GUARD) -> np.ndarray:
    """Leaf eigenvector multipliers; quotient over the leaf lambda spectrum."""
    return _mu_from_eta(eta_t, u_t, lam_t, guard)


def solve_nu(fac: XDFFactorization, omegas: EigenbasisDensities,
             mus: tuple[np.ndarray, ...], guard: float = DEGENERACY_GUARD) -> np.ndarray:
    """Inter-leaf multipliers coupling retained frames to every other leaf.

    R[u_prime, u] projects leaf u's energy + mu gradients onto the
    eigenvector of leaf u_prime; it vanishes identically for discarded u, so
    nu is zero whenever both pair members are discarded.
    """
    n_leaves = fac.n_leaves
    g_values = fac.g_values
    r_mat = np.zeros((n_leaves, n_leaves))
    for u in range(fac.retained):
        leaf = fac.leaves[u]
        w = omegas.omega[u] @ leaf.lam
        core = 2.0 * leaf.g * (leaf.U * w) @ leaf.U.T + leaf.U @ mus[u] @ leaf.U.T
        for up in range(n_leaves):
            if up == u:
                continue
            r_mat[up, u] = float(np.sum(fac.leaves[up].V * core))

    spread = float(np.max(g_values) - np.min(g_values)) if n_leaves else 0.0
    cutoff = guard * max(spread, 1e-300)
    nu = np.zeros((n_leaves, n_leaves))
    for t in range(n_leaves):
        for u in range(t):
            if t >= fac.retained and u >= fac.retained:
                continue  # structurally zero: R vanishes for both members
            denom = g_values[u] - g_values[t]
            if abs(denom) <= cutoff:
                continue
            nu[t, u] = (r_mat[t, u] - r_mat[u, t]) / denom
    return nu


def relaxed_gamma(fac: XDFFactorization, omegas: EigenbasisDensities,
                  mu0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-body density from the measured diagonal plus mu0 off-diagonals."""
    u0 = fac.U0
    gamma = np.eye(fac.n_orbitals) + (u0 * omegas.omega0) @ u0.T + u0 @ mu0 @ u0.T
    return gamma, 0.5 * (gamma + gamma.T)


def _eight_fold(t: np.ndarray) -> np.ndarray:
    t = 0.5 * (t + t.transpose(1, 0, 2, 3))
    t = 0.5 * (t + t.transpose(0, 1, 3, 2))
    t = 0.5 * (t + t.transpose(2, 3, 0, 1))
    return t


def relaxed_Gamma(fac: XDFFactorization, omegas: EigenbasisDensities,
                  nu: np.ndarray, gamma_bar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two-body density: identity terms, gamma_bar dressing, the explicit
    per-leaf eigenvalue derivative, and the inter-leaf nu response."""
    n = fac.n_orbitals
    eye = np.eye(n)
    gamma_term = (
        np.einsum("pq,rs->pqrs", gamma_bar, eye)
        - 0.25 * np.einsum("pr,qs->pqrs", gamma_bar, eye)
        - 0.25 * np.einsum("ps,qr->pqrs", gamma_bar, eye)
    )
    identity_term = (
        0.5 * np.einsum("pq,rs->pqrs", eye, eye)
        - 0.125 * np.einsum("pr,qs->pqrs", eye, eye)
        - 0.125 * np.einsum("ps,qr->pqrs", eye, eye)
    )
    big = identity_term + gamma_term

    vecs = np.stack([leaf.V.reshape(-1) for leaf in fac.leaves], axis=0)
    coeff = np.zeros(fac.n_leaves)
    for t in range(fac.retained):
        leaf = fac.leaves[t]
        coeff[t] = float(leaf.lam @ omegas.omega[t] @ leaf.lam)
    big += ((vecs.T * coeff) @ vecs).reshape(n, n, n, n)
    big += (vecs.T @ nu @ vecs).reshape(n, n, n, n)
    return big, _eight_fold(big)


def measure_and_solve(fac: XDFFactorization, state: Statevector,
                      guard: float = DEGENERACY_GUARD,
                      ablate: str | None = None) -> tuple[EigenbasisDensities, MultiplierSet]:
    """Measure the leaf densities and run the full eta -> mu -> nu chain."""
    if ablate is not None and ablate not in ABLATION_MODES:
        raise ValueError(f"unknown ablation {ablate!r}; choose from {ABLATION_MODES}")
    n = fac.n_orbitals
    omegas = qsim.measure_densities(state, fac)
    worst_residual = 0.0

    eta0, res = _solve_eta(fac, state, None)
    worst_residual = max(worst_residual, res)
    mu0 = solve_mu0(eta0, fac.U0, fac.F0, guard)
    if ablate == "eta0":
        eta0 = np.zeros((n, n))
        mu0 = np.zeros((n, n))

    etas, mus = [], []
    for t in range(fac.retained):
        if ablate == "etat":
            etas.append(np.zeros((n, n)))
            mus.append(np.zeros((n, n)))
            continue
        eta_t, res = _solve_eta(fac, state, t)
        worst_residual = max(worst_residual, res)
        etas.append(eta_t)
        mus.append(solve_mu_leaf(eta_t, fac.leaves[t].U, fac.leaves[t].lam, guard))

    nu = solve_nu(fac, omegas, tuple(mus), guard)
    if ablate == "nu":
        nu = np.zeros_like(nu)

    multipliers = MultiplierSet(eta0, tuple(etas), mu0, tuple(mus), nu,
                                worst_residual, ablated=ablate)
    return omegas, multipliers


def reconstruct_rdms(fac: XDFFactorization, state: Statevector,
                     guard: float = DEGENERACY_GUARD,
                     ablate: str | None = None,
                     stationarity_grad: float | None = None,
                     stationarity_tol: float = STATIONARITY_TOL,
                     ) -> tuple[RelaxedRDMs, MultiplierSet]:
    """Full pipeline from a stationary state to relaxed, symmetrized RDMs.

    ``stationarity_grad``, when supplied, is the caller's ansatz gradient
    infinity-norm; a violation is warned about (the multiplier premise is
    a variationally stationary state), never silently ignored.
    """
    if stationarity_grad is not None and stationarity_grad > stationarity_tol:
        warnings.warn(
            f"state gradient norm {stationarity_grad:.3e} exceeds "
            f"{stationarity_tol:.1e}; relaxed densities will carry the bias",
            stacklevel=2)
    omegas, multipliers = measure_and_solve(fac, state, guard, ablate)
    gamma, gamma_sym = relaxed_gamma(fac, omegas, multipliers.mu0)
    gamma_bar = gamma - np.eye(fac.n_orbitals)
    big, big_sym = relaxed_Gamma(fac, omegas, multipliers.nu, gamma_bar)
    rdms = RelaxedRDMs(gamma, big, gamma_sym, big_sym, gamma_bar)
    return rdms, multipliers
