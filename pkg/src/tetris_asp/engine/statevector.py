"""Batched statevector kernels; the state index is always the last axis."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..pauli import DENSE_QUBIT_CAP, DenseCapError, PauliString
from ..sampler import SampledCircuit

__all__ = [
    "basis_state",
    "basis_index",
    "z_signs",
    "apply_pauli",
    "apply_rotation",
    "apply_sampled",
    "apply_sampled_batch",
    "circuit_unitary",
    "expectation",
]


def basis_index(bits: str) -> int:
    """Dense index of a bitstring; qubit 1 is the most significant bit."""
    return int(bits, 2) if bits else 0


def basis_state(bits: str, cap: int = DENSE_QUBIT_CAP) -> np.ndarray:
    n = len(bits)
    if n > cap:
        raise DenseCapError(f"{n} qubits exceeds the dense cap {cap}")
    psi = np.zeros(1 << n, dtype=np.complex128)
    psi[basis_index(bits)] = 1.0
    return psi


def z_signs(strings: Sequence[PauliString], n_qubits: int) -> np.ndarray:
    """``out[j, b] = <b| Z_j |b>`` (with sign) for Z-only strings."""
    b = np.arange(1 << n_qubits, dtype=np.int64)
    out = np.empty((len(strings), 1 << n_qubits))
    for j, s in enumerate(strings):
        if not s.is_z_only():
            raise ValueError(f"{s} is not Z-only")
        _, z = s.masks
        out[j] = s.sign * (1.0 - 2.0 * (np.bitwise_count(b & z) & 1))
    return out


def apply_pauli(psi: np.ndarray, p: PauliString) -> np.ndarray:
    perm, phase = p.apply_phases()
    return phase * psi[..., perm]


def apply_rotation(psi: np.ndarray, p: PauliString, angle: float) -> np.ndarray:
    """``exp(i angle P) psi``."""
    perm, phase = p.apply_phases()
    return np.cos(angle) * psi + (1j * np.sin(angle)) * (phase * psi[..., perm])


def apply_sampled(circ: SampledCircuit, psi: np.ndarray) -> np.ndarray:
    """Apply a sampled circuit (rotations plus exact background segments) to ``psi``."""
    psi = np.array(psi, dtype=np.complex128, copy=True)
    actions = [s.apply_phases() for s in circ.strings]
    c, s = np.cos(circ.tau), 1j * np.sin(circ.tau)
    diag = None
    if circ.segment_phases is not None and len(circ.background):
        diag = np.exp(1j * (circ.segment_phases @ z_signs(circ.background, circ.n_qubits)))
    for m, n in enumerate(circ.indices):
        if diag is not None:
            psi *= diag[m]
        perm, phase = actions[n]
        psi = c * psi + s * (phase * psi[..., perm])
    if diag is not None:
        psi *= diag[-1]
    return psi


def apply_sampled_batch(circuits: Sequence[SampledCircuit], psi0: np.ndarray) -> np.ndarray:
    """Apply each circuit to ``psi0``; returns one row per circuit.

    All circuits must share their string and background tables (same model and
    sign), so the event loop runs over all circuits at once.
    """
    if not circuits:
        return np.empty((0, psi0.size), dtype=np.complex128)
    first = circuits[0]
    for c in circuits:
        if c.strings != first.strings or c.background != first.background or c.tau != first.tau:
            raise ValueError("batched circuits must share strings, background and tau")
    B, dim = len(circuits), 1 << first.n_qubits
    psi = np.tile(np.asarray(psi0, dtype=np.complex128), (B, 1))
    if first.strings:
        acts = [p.apply_phases() for p in first.strings]
        perms = np.stack([a[0] for a in acts])
        phases = np.stack([a[1] for a in acts]).astype(np.complex128)
    has_bg = first.segment_phases is not None and len(first.background) > 0
    zs = z_signs(first.background, first.n_qubits) if has_bg else None
    c, s = np.cos(first.tau), 1j * np.sin(first.tau)
    lengths = np.array([c_.n_events for c_ in circuits])
    order = np.argsort(-lengths, kind="stable")
    psi = psi[order]
    circs = [circuits[i] for i in order]
    lengths = lengths[order]
    M = int(lengths[0])
    # padded per-circuit tables: rotation indices and gap phases
    idx = np.zeros((B, M), dtype=np.int64)
    for b, cc in enumerate(circs):
        idx[b, : cc.n_events] = cc.indices
    if has_bg:
        seg = np.zeros((B, M + 1, len(first.background)))
        for b, cc in enumerate(circs):
            seg[b, : cc.n_events + 1] = cc.segment_phases
        gap = np.exp(1j * np.einsum("bmj,jd->bmd", seg, zs)) if B * (M + 1) * dim <= 1 << 24 else None
    for m in range(M + 1):
        live = int(np.count_nonzero(lengths >= m))
        if has_bg:
            if gap is not None:
                psi[:live] *= gap[:live, m]
            else:
                psi[:live] *= np.exp(1j * (seg[:live, m] @ zs))
        active = int(np.count_nonzero(lengths > m))
        if active:
            k = idx[:active, m]
            moved = np.take_along_axis(psi[:active], perms[k], axis=1)
            psi[:active] = c * psi[:active] + s * (phases[k] * moved)
    out = np.empty_like(psi)
    out[order] = psi
    return out


def circuit_unitary(circ: SampledCircuit) -> np.ndarray:
    dim = 1 << circ.n_qubits
    rows = apply_sampled(circ, np.eye(dim, dtype=np.complex128))
    # row r holds U e_r, i.e. column r of U
    return rows.T


def expectation(psi: np.ndarray, h_dense: np.ndarray) -> float:
    return float(np.real(np.vdot(psi, h_dense @ psi)))
