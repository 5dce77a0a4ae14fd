"""Jordan-Wigner statevector simulation over 2N qubits.

Qubit ordering is blocked by spin: qubits 0 .. N-1 are the alpha spin
orbitals, N .. 2N-1 the beta ones, and bit j of a basis index is the
occupation of qubit j. All fabric gates act on adjacent qubits within one
spin block, so no Jordan-Wigner strings appear in the circuit itself; the
direct RDM oracle handles the strings explicitly.

Expectation values are exact (infinite-shot limit). All gates have real
matrix elements, so amplitudes stay real in practice; complex amplitudes are
accepted and measured through |amplitude|^2 weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .givens import GivensFabric
from .xdf import XDFFactorization, z_tensor

__all__ = [
    "Statevector",
    "EigenbasisDensities",
    "hf_reference",
    "apply_orbital_rotation",
    "apply_pair_exchange",
    "measure_omega0",
    "measure_omega_leaf",
    "measure_densities",
    "energy",
    "apply_hamiltonian",
    "denergy_dtheta_shift",
    "denergy_dtheta_direct",
    "measure_rdms_direct",
]

DESK_CAP = 8  # 4^8 amplitudes

# Exact first-derivative rule for a plane-rotation gate, whose conjugation
# carries both single and double angle frequencies: two symmetric
# differences at pi/4 and pi/2.
_SHIFT_STEPS = ((np.pi / 4.0, 1.0), (np.pi / 2.0, (1.0 - np.sqrt(2.0)) / 2.0))


@lru_cache(maxsize=16)
def _bits(n_qubits: int) -> np.ndarray:
    x = np.arange(1 << n_qubits, dtype=np.int64)
    table = ((x[:, None] >> np.arange(n_qubits)) & 1).astype(np.int8)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=16)
def _zvals(n_qubits: int) -> np.ndarray:
    z = (1.0 - 2.0 * _bits(n_qubits)).astype(float)
    z.setflags(write=False)
    return z


@dataclass(frozen=True, eq=False)
class Statevector:
    """Amplitudes over 2 * n_spatial Jordan-Wigner qubits, blocked by spin."""

    n_spatial: int
    amplitudes: np.ndarray

    def __post_init__(self):
        dtype = complex if np.iscomplexobj(self.amplitudes) else float
        amps = np.array(self.amplitudes, dtype=dtype)
        if self.n_spatial > DESK_CAP:
            raise ValueError(f"n_spatial {self.n_spatial} above desk cap {DESK_CAP}")
        if amps.shape != (4 ** self.n_spatial,):
            raise ValueError("amplitude vector has wrong length")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_spatial

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "Statevector") -> float:
        """Real part of the inner product <self|other>."""
        return float(np.real(np.vdot(self.amplitudes, other.amplitudes)))

    def electron_counts(self) -> tuple[int, int]:
        """Per-spin particle numbers; raises if the state mixes sectors."""
        bits = _bits(self.n_qubits)
        n = self.n_spatial
        weights = np.abs(self.amplitudes) ** 2
        na = bits[:, :n].sum(axis=1)
        nb = bits[:, n:].sum(axis=1)
        support = weights > 1e-24
        counts = {(int(a), int(b)) for a, b in zip(na[support], nb[support])}
        if len(counts) != 1:
            raise ValueError(f"state is not in a single (n_alpha, n_beta) sector: {counts}")
        return counts.pop()


@dataclass(frozen=True, eq=False)
class EigenbasisDensities:
    """Measured leaf-frame densities: omega0 (length N) and per-retained-leaf omega."""

    omega0: np.ndarray
    omega: tuple[np.ndarray, ...]


def hf_reference(n_spatial: int, n_alpha: int, n_beta: int) -> Statevector:
    """Computational basis determinant occupying the lowest orbitals per spin."""
    if not (0 <= n_alpha <= n_spatial and 0 <= n_beta <= n_spatial):
        raise ValueError("occupation exceeds orbital count")
    index = 0
    for k in range(n_alpha):
        index |= 1 << k
    for k in range(n_beta):
        index |= 1 << (n_spatial + k)
    amps = np.zeros(4 ** n_spatial)
    amps[index] = 1.0
    return Statevector(n_spatial, amps)


def _axis(n_qubits: int, qubit: int) -> int:
    return n_qubits - 1 - qubit


def _pair_slices(n_qubits: int, a: int, b: int):
    s10 = [slice(None)] * n_qubits
    s01 = [slice(None)] * n_qubits
    s10[_axis(n_qubits, a)], s10[_axis(n_qubits, b)] = 1, 0
    s01[_axis(n_qubits, a)], s01[_axis(n_qubits, b)] = 0, 1
    return tuple(s10), tuple(s01)


def _rotate_pair(amps: np.ndarray, n_qubits: int, a: int, b: int, theta: float) -> None:
    """In-place number-conserving rotation on qubits (a, b).

    The singly-occupied subspace transforms like the single-particle plane
    rotation: amp(a occupied) -> cos * amp(a) - sin * amp(b).
    """
    if theta == 0.0:
        return
    view = amps.reshape((2,) * n_qubits)
    s10, s01 = _pair_slices(n_qubits, a, b)
    c, s = np.cos(theta), np.sin(theta)
    old10 = view[s10].copy()
    view[s10] = c * old10 - s * view[s01]
    view[s01] = s * old10 + c * view[s01]


def _apply_fabric_raw(
    amps: np.ndarray,
    n_spatial: int,
    fabric: GivensFabric,
    alpha_angles: np.ndarray,
    beta_angles: np.ndarray,
    dagger: bool,
) -> None:
    n_qubits = 2 * n_spatial
    order = range(len(fabric.pivots))
    if dagger:
        order = reversed(order)
    for g in order:
        m = fabric.pivots[g][0]
        ta = -alpha_angles[g] if dagger else alpha_angles[g]
        tb = -beta_angles[g] if dagger else beta_angles[g]
        if dagger:
            _rotate_pair(amps, n_qubits, n_spatial + m, n_spatial + m + 1, tb)
            _rotate_pair(amps, n_qubits, m, m + 1, ta)
        else:
            _rotate_pair(amps, n_qubits, m, m + 1, ta)
            _rotate_pair(amps, n_qubits, n_spatial + m, n_spatial + m + 1, tb)


def apply_orbital_rotation(state: Statevector, fabric: GivensFabric,
                           dagger: bool = False) -> Statevector:
    """Spin-locked fabric circuit; single-particle amplitudes transform by
    the fabric's orthogonal matrix (or its transpose when dagger)."""
    if fabric.n != state.n_spatial:
        raise ValueError("fabric dimension does not match state")
    amps = state.amplitudes.copy()
    _apply_fabric_raw(amps, state.n_spatial, fabric, fabric.angles, fabric.angles, dagger)
    return Statevector(state.n_spatial, amps)


def apply_locked_rotation(state: Statevector, m: int, theta: float) -> Statevector:
    """One spin-locked Givens rotation on adjacent spatial orbitals (m, m+1)."""
    n = state.n_spatial
    if not 0 <= m < n - 1:
        raise ValueError("rotation pivot out of range")
    amps = state.amplitudes.copy()
    _rotate_pair(amps, 2 * n, m, m + 1, theta)
    _rotate_pair(amps, 2 * n, n + m, n + m + 1, theta)
    return Statevector(n, amps)


def apply_pair_exchange(state: Statevector, p: int, theta: float) -> Statevector:
    """Rotation between the paired doubly-occupied states of spatial orbitals
    (p, p+1); amp(pair on p+1) -> cos * amp + sin * amp(pair on p)."""
    n = state.n_spatial
    if not 0 <= p < n - 1:
        raise ValueError("pair-exchange pivot out of range")
    amps = state.amplitudes.copy()
    _rotate_pair_exchange(amps, n, p, theta)
    return Statevector(n, amps)


def _pair_exchange_slices(n_spatial: int, p: int):
    nq = 2 * n_spatial
    sx = [slice(None)] * nq  # pair on p
    sy = [slice(None)] * nq  # pair on p + 1
    for q, bx, by in ((p, 1, 0), (p + 1, 0, 1),
                      (n_spatial + p, 1, 0), (n_spatial + p + 1, 0, 1)):
        sx[_axis(nq, q)] = bx
        sy[_axis(nq, q)] = by
    return tuple(sx), tuple(sy)


def _rotate_pair_exchange(amps: np.ndarray, n_spatial: int, p: int, theta: float) -> None:
    if theta == 0.0:
        return
    view = amps.reshape((2,) * (2 * n_spatial))
    sx, sy = _pair_exchange_slices(n_spatial, p)
    c, s = np.cos(theta), np.sin(theta)
    old_x = view[sx].copy()
    view[sx] = c * old_x - s * view[sy]
    view[sy] = s * old_x + c * view[sy]


def _derivative_pair_exchange(amps: np.ndarray, n_spatial: int, p: int,
                              theta: float) -> np.ndarray:
    view = amps.reshape((2,) * (2 * n_spatial))
    out = np.zeros_like(amps)
    oview = out.reshape((2,) * (2 * n_spatial))
    sx, sy = _pair_exchange_slices(n_spatial, p)
    c, s = np.cos(theta), np.sin(theta)
    oview[sx] = -s * view[sx] - c * view[sy]
    oview[sy] = c * view[sx] - s * view[sy]
    return out


# ---------------------------------------------------------------------------
# Leaf-frame measurements
# ---------------------------------------------------------------------------

def _z_expectations(amps: np.ndarray, n_qubits: int) -> np.ndarray:
    return (np.abs(amps) ** 2) @ _zvals(n_qubits)


def _zz_matrix(amps: np.ndarray, n_qubits: int) -> np.ndarray:
    z = _zvals(n_qubits)
    weighted = z * (np.abs(amps) ** 2)[:, None]
    return z.T @ weighted


def _omega0_from_rotated(amps: np.ndarray, n: int) -> np.ndarray:
    z = _z_expectations(amps, 2 * n)
    return -0.5 * (z[:n] + z[n:])


def _omega_leaf_from_rotated(amps: np.ndarray, n: int) -> np.ndarray:
    c = _zz_matrix(amps, 2 * n)
    omega = c[:n, :n] + c[:n, n:] + c[n:, :n] + c[n:, n:] - 2.0 * np.eye(n)
    return omega / 8.0


def measure_omega0(state: Statevector, fabric0: GivensFabric) -> np.ndarray:
    """One-body eigenbasis density: omega0_k = <E_kk> - 1 in the rotated frame."""
    rotated = apply_orbital_rotation(state, fabric0, dagger=True)
    return _omega0_from_rotated(rotated.amplitudes, state.n_spatial)


def measure_omega_leaf(state: Statevector, fabric_t: GivensFabric) -> np.ndarray:
    """Two-body eigenbasis density of one leaf from Z/ZZ moments in its frame."""
    rotated = apply_orbital_rotation(state, fabric_t, dagger=True)
    return _omega_leaf_from_rotated(rotated.amplitudes, state.n_spatial)


def measure_densities(state: Statevector, fac: XDFFactorization) -> EigenbasisDensities:
    omega0 = measure_omega0(state, fac.fabric0())
    omega = tuple(measure_omega_leaf(state, fac.leaf_fabric(t))
                  for t in range(fac.retained))
    return EigenbasisDensities(omega0, omega)


# ---------------------------------------------------------------------------
# X-DF energy and its angle derivatives
# ---------------------------------------------------------------------------

def _diag_one_body(n: int, f0: np.ndarray) -> np.ndarray:
    bits = _bits(2 * n)
    occ = bits[:, :n].astype(float) + bits[:, n:].astype(float)
    return (occ - 1.0) @ f0


def _diag_leaf(n: int, z_mat: np.ndarray) -> np.ndarray:
    zv = _zvals(2 * n)
    m = zv[:, :n] + zv[:, n:]
    return 0.125 * np.einsum("xk,kl,xl->x", m, z_mat, m) - 0.25 * float(np.trace(z_mat))


def energy(state: Statevector, fac: XDFFactorization) -> float:
    """Eigenbasis-density energy: offset + F0 . omega0 + sum_t Z_t : omega_t."""
    total = fac.eff.scalar_offset
    total += float(fac.F0 @ measure_omega0(state, fac.fabric0()))
    for t in range(fac.retained):
        omega_t = measure_omega_leaf(state, fac.leaf_fabric(t))
        total += float(np.sum(z_tensor(fac.leaves[t]) * omega_t))
    return total


def apply_hamiltonian(state: Statevector, fac: XDFFactorization) -> np.ndarray:
    """Action of the (possibly truncated) factorized Hamiltonian, leaf by leaf."""
    n = state.n_spatial
    out = fac.eff.scalar_offset * np.array(state.amplitudes)
    frames = [(fac.fabric0(), _diag_one_body(n, fac.F0))]
    frames += [(fac.leaf_fabric(t), _diag_leaf(n, z_tensor(fac.leaves[t])))
               for t in range(fac.retained)]
    for fabric, diag in frames:
        work = state.amplitudes.copy()
        _apply_fabric_raw(work, n, fabric, fabric.angles, fabric.angles, dagger=True)
        work *= diag
        _apply_fabric_raw(work, n, fabric, fabric.angles, fabric.angles, dagger=False)
        out += work
    return out


def _leaf_objective(state: Statevector, fac: XDFFactorization, leaf_id,
                    alpha_angles: np.ndarray, beta_angles: np.ndarray) -> float:
    n = state.n_spatial
    fabric = fac.fabric0() if leaf_id is None else fac.leaf_fabric(leaf_id)
    amps = state.amplitudes.copy()
    _apply_fabric_raw(amps, n, fabric, alpha_angles, beta_angles, dagger=True)
    if leaf_id is None:
        return float(fac.F0 @ _omega0_from_rotated(amps, n))
    omega = _omega_leaf_from_rotated(amps, n)
    return float(np.sum(z_tensor(fac.leaves[leaf_id]) * omega))


def _check_leaf_angle(fac: XDFFactorization, leaf_id, g: int) -> GivensFabric:
    if leaf_id is None:
        fabric = fac.fabric0()
    else:
        if not 0 <= leaf_id < fac.retained:
            raise ValueError(f"leaf id {leaf_id} is not a retained leaf")
        fabric = fac.leaf_fabric(leaf_id)
    if not 0 <= g < len(fabric.pivots):
        raise ValueError(f"angle index {g} out of range")
    return fabric


def denergy_dtheta_shift(state: Statevector, fac: XDFFactorization,
                         leaf_id, g: int) -> float:
    """Shift-rule energy derivative with respect to one fabric angle.

    The spin-locked pair is unlocked and each spin's gate is differentiated
    with the exact two-frequency rule (symmetric differences at pi/4 and
    pi/2), eight evaluations in total.
    """
    fabric = _check_leaf_angle(fac, leaf_id, g)
    base = fabric.angles
    total = 0.0
    for spin in (0, 1):
        for step, coeff in _SHIFT_STEPS:
            shifted = [base.copy(), base.copy()]
            shifted[0][g] += step
            shifted[1][g] -= step
            values = []
            for angles in shifted:
                alpha = angles if spin == 0 else base
                beta = base if spin == 0 else angles
                values.append(_leaf_objective(state, fac, leaf_id, alpha, beta))
            total += coeff * (values[0] - values[1])
    return total


def denergy_dtheta_direct(state: Statevector, fac: XDFFactorization,
                          leaf_id, g: int) -> float:
    """Analytic statevector differentiation of the same angle derivative."""
    fabric = _check_leaf_angle(fac, leaf_id, g)
    n = state.n_spatial
    nq = 2 * n
    k = len(fabric.pivots)

    rotated = state.amplitudes.copy()
    _apply_fabric_raw(rotated, n, fabric, fabric.angles, fabric.angles, dagger=True)

    # Dagger circuit applies gates reversed with negated angles; derivative of
    # gate g therefore carries a factor d(-theta)/dtheta = -1 per spin branch.
    branches = []
    for spin in (0, 1):
        work = state.amplitudes.copy()
        for idx in range(k - 1, g, -1):
            m = fabric.pivots[idx][0]
            _rotate_pair(work, nq, n + m, n + m + 1, -fabric.angles[idx])
            _rotate_pair(work, nq, m, m + 1, -fabric.angles[idx])
        m = fabric.pivots[g][0]
        theta = -fabric.angles[g]
        if spin == 0:
            _rotate_pair(work, nq, n + m, n + m + 1, theta)
            work = -_derivative_pair(work, nq, m, m + 1, theta)
        else:
            work = -_derivative_pair(work, nq, n + m, n + m + 1, theta)
            _rotate_pair(work, nq, m, m + 1, theta)
        for idx in range(g - 1, -1, -1):
            m2 = fabric.pivots[idx][0]
            _rotate_pair(work, nq, n + m2, n + m2 + 1, -fabric.angles[idx])
            _rotate_pair(work, nq, m2, m2 + 1, -fabric.angles[idx])
        branches.append(work)
    drotated = branches[0] + branches[1]

    if leaf_id is None:
        diag = _diag_one_body(n, fac.F0)
    else:
        diag = _diag_leaf(n, z_tensor(fac.leaves[leaf_id]))
    return 2.0 * float(np.real(np.vdot(drotated, diag * rotated)))


def _derivative_pair(amps: np.ndarray, n_qubits: int, a: int, b: int,
                     theta: float) -> np.ndarray:
    """Image of the angle derivative of the (a, b) pair rotation."""
    view = amps.reshape((2,) * n_qubits)
    out = np.zeros_like(amps)
    oview = out.reshape((2,) * n_qubits)
    s10, s01 = _pair_slices(n_qubits, a, b)
    c, s = np.cos(theta), np.sin(theta)
    oview[s10] = -s * view[s10] - c * view[s01]
    oview[s01] = c * view[s10] - s * view[s01]
    return out


# ---------------------------------------------------------------------------
# Direct (brute-force) fermionic RDMs
# ---------------------------------------------------------------------------

def _apply_singlet_excitation(amps: np.ndarray, n: int, p: int, q: int) -> np.ndarray:
    """E_pq acting on the amplitude vector, Jordan-Wigner strings included."""
    nq = 2 * n
    bits = _bits(nq)
    out = np.zeros_like(amps)
    for off in (0, n):
        ps, qs = p + off, q + off
        if p == q:
            out += bits[:, ps] * amps
            continue
        mask = (bits[:, qs] == 1) & (bits[:, ps] == 0)
        x = np.nonzero(mask)[0]
        if x.size == 0:
            continue
        y = x ^ (1 << qs) ^ (1 << ps)
        lo, hi = (ps, qs) if ps < qs else (qs, ps)
        if hi - lo > 1:
            parity = bits[x, lo + 1:hi].sum(axis=1) % 2
            signs = 1.0 - 2.0 * parity
        else:
            signs = np.ones(x.size)
        out[y] += signs * amps[x]
    return out


def measure_rdms_direct(state: Statevector) -> tuple[np.ndarray, np.ndarray]:
    """Full one- and two-body fermionic RDMs by explicit operator application.

    gamma[p, q] = <E_pq>; Gamma[p, q, r, s] = (<E_pq E_rs> - d_qr <E_ps>) / 2.
    This is the oracle the leaf-frame workflow avoids measuring.
    """
    n = state.n_spatial
    amps = state.amplitudes
    images = np.empty((n, n, amps.size), dtype=amps.dtype)
    for r in range(n):
        for s in range(n):
            images[r, s] = _apply_singlet_excitation(amps, n, r, s)
    gamma = np.real(images @ np.conj(amps))
    pair = np.real(np.einsum("qpx,rsx->pqrs", np.conj(images), images))
    gamma_term = np.einsum("qr,ps->pqrs", np.eye(n), gamma)
    big_gamma = 0.5 * (pair - gamma_term)
    return gamma, big_gamma
