from __future__ import annotations

import functools
from pathlib import Path

import numpy as np
import pytest

from tetris_asp.chem import (
    HamiltonianModel,
    MolecularIntegrals,
    initial_state,
    jordan_wigner,
    read_fcidump,
    reduce_norm_particle_number,
    split,
)
from tetris_asp.pauli import PauliSum

DATA = Path(__file__).resolve().parents[1] / "experiments" / "data"


@functools.lru_cache(maxsize=None)
def load_fixture(name: str = "h2_sto3g_1.11.fcidump") -> tuple[HamiltonianModel, str]:
    ints = read_fcidump(DATA / name)
    h, alpha = reduce_norm_particle_number(jordan_wigner(ints))
    model = split(h)
    model = HamiltonianModel(model.background, model.interaction, model.constant, model.rule, model.g_per_term, alpha)
    return model, initial_state(model, ints.n_electrons)


@pytest.fixture(scope="session")
def h2():
    return load_fixture()


def fermion_ops(n: int) -> list[np.ndarray]:
    """Annihilators on ``n`` modes from Kronecker products; occupied is ``|1>``, mode 0 leftmost."""
    a = np.array([[0, 1], [0, 0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    out = []
    for p in range(n):
        m = np.ones((1, 1), dtype=complex)
        for q in range(n):
            m = np.kron(m, z if q < p else a if q == p else np.eye(2))
        out.append(m)
    return out


def fermion_dense(ints: MolecularIntegrals) -> np.ndarray:
    n = ints.n_orbitals
    c = fermion_ops(n)
    cd = [m.conj().T for m in c]
    h = ints.core_energy * np.eye(1 << n, dtype=complex)
    for p in range(n):
        for q in range(n):
            if ints.h_pq[p, q]:
                h += ints.h_pq[p, q] * cd[p] @ c[q]
    for p, q, r, s in np.argwhere(ints.h_pqrs != 0):
        h += ints.h_pqrs[p, q, r, s] * cd[p] @ cd[q] @ c[r] @ c[s]
    return h


def random_integrals(rng: np.random.Generator, n_spatial: int, core: float = 0.0) -> MolecularIntegrals:
    """Real spatial integrals with the 8-fold symmetry of a molecular Hamiltonian."""
    h1 = rng.normal(size=(n_spatial, n_spatial))
    h1 = (h1 + h1.T) / 2
    eri = rng.normal(size=(n_spatial,) * 4)
    sym = np.zeros_like(eri)
    for perm in ((0, 1, 2, 3), (1, 0, 2, 3), (0, 1, 3, 2), (1, 0, 3, 2), (2, 3, 0, 1), (3, 2, 0, 1), (2, 3, 1, 0), (3, 2, 1, 0)):
        sym += eri.transpose(perm)
    return MolecularIntegrals.from_spatial(h1, sym / 8, core, 2)


def sector_spectrum(h: np.ndarray, n: int, k: int) -> np.ndarray:
    idx = [b for b in range(1 << n) if bin(b).count("1") == k]
    return np.linalg.eigvalsh(h[np.ix_(idx, idx)])


def pauli_sum(coeffs: dict[str, float]) -> PauliSum:
    return PauliSum.from_dict(coeffs)
