"""Deterministic reference evolutions: adaptive ODE integration and Trotterized ASP."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from ..pauli import DENSE_QUBIT_CAP, DenseCapError, PauliString
from ..schedule import HamiltonianSchedule
from .statevector import apply_rotation, basis_index

__all__ = [
    "NumericalError",
    "run_exact_reference",
    "exact_propagator",
    "run_trotter_asp",
    "trotter_term_order",
    "sector_indices",
    "sector_ground_energy",
]

NORM_DRIFT_TOL = 1e-8


class NumericalError(RuntimeError):
    """An integrator or estimator could not meet its stated tolerance."""


def _dense_parts(schedule: HamiltonianSchedule) -> tuple[np.ndarray, ...]:
    n = schedule.n_qubits
    if n > DENSE_QUBIT_CAP:
        raise DenseCapError(f"{n} qubits exceeds the dense cap {DENSE_QUBIT_CAP}")
    if schedule.is_snapshot:
        return tuple((s.background + s.interaction).to_dense() for s in schedule.snapshots)
    m = schedule.model
    return m.background.to_dense(), m.interaction.to_dense()


def _generator(schedule: HamiltonianSchedule):
    parts = _dense_parts(schedule)
    T = schedule.total_time
    if schedule.is_snapshot:
        k = len(parts) - 1

        def h_at(t: float) -> np.ndarray:
            x = min(max(t / T, 0.0), 1.0) * k
            i = min(int(x), k - 1)
            f = x - i
            return (1 - f) * parts[i] + f * parts[i + 1]

    else:
        hb, hi = parts
        path = schedule.path

        def h_at(t: float) -> np.ndarray:
            return hb + path.weight(min(max(t / T, 0.0), 1.0)) * hi

    return h_at


def _integrate(schedule: HamiltonianSchedule, y0: np.ndarray, rtol: float, atol: float) -> np.ndarray:
    T = schedule.total_time
    if T == 0:
        return y0.copy()
    h_at = _generator(schedule)
    shape = y0.shape

    def rhs(t, y):
        return (1j * (h_at(t) @ y.reshape(shape))).reshape(-1)

    sol = solve_ivp(rhs, (0.0, T), y0.reshape(-1), method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericalError(f"ODE integration failed: {sol.message}")
    return sol.y[:, -1].reshape(shape)


def run_exact_reference(
    schedule: HamiltonianSchedule,
    initial: str | np.ndarray,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> np.ndarray:
    """Integrate ``d psi/dt = i H(t/T) psi`` from ``initial`` (bitstring or vector).

    The identity part of the Hamiltonian is left out; it only adds a global phase.
    Raises :class:`NumericalError` when the norm drifts by more than 1e-8.
    """
    n = schedule.n_qubits
    if isinstance(initial, str):
        if len(initial) != n:
            raise ValueError("initial bitstring length differs from the qubit count")
        psi0 = np.zeros(1 << n, dtype=np.complex128)
        psi0[basis_index(initial)] = 1.0
    else:
        psi0 = np.asarray(initial, dtype=np.complex128)
    norm0 = np.linalg.norm(psi0)
    psi = _integrate(schedule, psi0, rtol, atol)
    drift = abs(np.linalg.norm(psi) - norm0)
    if drift > NORM_DRIFT_TOL:
        raise NumericalError(f"norm drift {drift:.2e} exceeds {NORM_DRIFT_TOL:.0e}")
    return psi


def exact_propagator(schedule: HamiltonianSchedule, rtol: float = 1e-10, atol: float = 1e-12) -> np.ndarray:
    """Dense ``T exp(i int_0^T H(t/T) dt)`` (identity part omitted)."""
    dim = 1 << schedule.n_qubits
    if schedule.n_qubits > DENSE_QUBIT_CAP:
        raise DenseCapError("dense cap exceeded")
    u = _integrate(schedule, np.eye(dim, dtype=np.complex128), rtol, atol)
    err = np.linalg.norm(u.conj().T @ u - np.eye(dim), 2)
    if err > NORM_DRIFT_TOL:
        raise NumericalError(f"propagator unitarity error {err:.2e}")
    return u


def trotter_term_order(n_terms: int, permutation_seed: int | None = None) -> np.ndarray:
    """Load order, or one seeded random permutation reused at every step."""
    if permutation_seed is None:
        return np.arange(n_terms)
    return np.random.default_rng(permutation_seed).permutation(n_terms)


def run_trotter_asp(
    schedule: HamiltonianSchedule,
    steps: int,
    initial: str | np.ndarray,
    permutation_seed: int | None = None,
) -> np.ndarray:
    """First-order product formula with left-point sampling of ``H(u)``.

    Step ``k`` applies ``prod_n exp(i dt c_n(k dt / T) P_n)`` with ``H(0)``
    acting first. Terms follow the schedule's load order (background then
    interaction), or a seeded permutation of it.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n = schedule.n_qubits
    if isinstance(initial, str):
        psi = np.zeros(1 << n, dtype=np.complex128)
        psi[basis_index(initial)] = 1.0
    else:
        psi = np.array(initial, dtype=np.complex128, copy=True)
    T = schedule.total_time
    dt = T / steps
    strings, coeff_at = _term_coefficients(schedule)
    order = trotter_term_order(len(strings), permutation_seed)
    for k in range(steps):
        c = coeff_at(k * dt / T if T > 0 else 0.0)
        for j in order:
            if c[j] != 0.0:
                psi = apply_rotation(psi, strings[j], dt * c[j])
    return psi


def _term_coefficients(schedule: HamiltonianSchedule):
    if schedule.is_snapshot:
        strings, table = schedule.term_table()
        k = table.shape[0] - 1

        def coeff_at(u: float) -> np.ndarray:
            x = u * k
            i = min(int(x), k - 1)
            f = x - i
            return (1 - f) * table[i] + f * table[i + 1]

        return strings, coeff_at
    m = schedule.model
    bg = [t for t in m.background.terms]
    it = [t for t in m.interaction.terms]
    strings: list[PauliString] = [PauliString(t.letters) for t in bg + it]
    cb = np.array([t.signed_coefficient for t in bg])
    ci = np.array([t.signed_coefficient for t in it])
    path = schedule.path

    def coeff_at(u: float) -> np.ndarray:
        return np.concatenate((cb, path.weight(u) * ci))

    return strings, coeff_at


def sector_indices(n_qubits: int, n_up: int, n_down: int) -> np.ndarray:
    """Basis indices with the given spin-up (even qubit) and spin-down (odd qubit) occupations."""
    b = np.arange(1 << n_qubits, dtype=np.int64)
    up_mask = sum(1 << (n_qubits - 1 - q) for q in range(0, n_qubits, 2))
    down_mask = sum(1 << (n_qubits - 1 - q) for q in range(1, n_qubits, 2))
    ok = (np.bitwise_count(b & up_mask) == n_up) & (np.bitwise_count(b & down_mask) == n_down)
    return np.flatnonzero(ok)


def sector_ground_energy(h_dense: np.ndarray, bits: str) -> tuple[float, np.ndarray]:
    """Lowest eigenpair within the spin sectors of the basis state ``bits``."""
    n = len(bits)
    n_up = sum(bits[q] == "1" for q in range(0, n, 2))
    n_down = sum(bits[q] == "1" for q in range(1, n, 2))
    idx = sector_indices(n, n_up, n_down)
    w, v = np.linalg.eigh(h_dense[np.ix_(idx, idx)])
    vec = np.zeros(h_dense.shape[0], dtype=np.complex128)
    vec[idx] = v[:, 0]
    return float(w[0]), vec
