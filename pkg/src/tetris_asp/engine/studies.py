"""Experiment-level helpers: energy gaps of prepared states and single-shot variance studies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..chem import HamiltonianModel
from ..sampler import SampledCircuit, SamplerConfig, sample_adiabatic, sample_constant, stream
from ..schedule import AdiabaticPath, HamiltonianSchedule
from .reference import run_exact_reference, run_trotter_asp, sector_ground_energy
from .statevector import apply_sampled_batch, basis_state, expectation

__all__ = [
    "exact_energy",
    "trotter_energy",
    "MonteCarloEnergy",
    "tetris_energy",
    "minimal_time",
    "VarianceResult",
    "variance_study",
    "sector_gap",
]


def exact_energy(model: HamiltonianModel, path: AdiabaticPath, T: float, initial: str) -> float:
    """Energy of the exactly evolved ASP state."""
    psi = run_exact_reference(HamiltonianSchedule(model, path, T), initial)
    return expectation(psi, model.dense())


def trotter_energy(
    model: HamiltonianModel, path: AdiabaticPath, T: float, steps: int, initial: str, permutation_seed: int | None = None
) -> float:
    psi = run_trotter_asp(HamiltonianSchedule(model, path, T), steps, initial, permutation_seed)
    return expectation(psi, model.dense())


@dataclass(frozen=True)
class MonteCarloEnergy:
    mean: float
    std_error: float
    circuits: int
    attenuation: float


def _pairs(
    model: HamiltonianModel, path: AdiabaticPath | None, T: float, tau: float, seed: int, k0: int, k1: int, sign: int = 1
) -> tuple[list[SampledCircuit], list[SampledCircuit], list[np.random.Generator]]:
    u1, u2, rngs = [], [], []
    cfg = SamplerConfig(tau, T, "background") if path is not None else None
    for k in range(k0, k1):
        rng = stream(seed, k)
        if path is None:
            u1.append(sample_constant(model.interaction, T, tau, sign, rng, background=model.background))
            u2.append(sample_constant(model.interaction, T, tau, sign, rng, background=model.background))
        else:
            u1.append(sample_adiabatic(model, path, cfg, rng))
            u2.append(sample_adiabatic(model, path, cfg, rng))
        rngs.append(rng)
    return u1, u2, rngs


def tetris_energy(
    model: HamiltonianModel,
    path: AdiabaticPath,
    T: float,
    tau: float,
    initial: str,
    circuits: int,
    seed: int = 0,
    batch: int = 2000,
) -> MonteCarloEnergy:
    """Unbiased Monte-Carlo energy of ``A(T)|ini>`` from independent circuit pairs.

    Each pair contributes ``Re <U1 ini| H |U2 ini> / lambda^2``, whose mean is
    ``<ini| A^dag H A |ini>`` exactly; no time discretization enters.
    """
    h = model.dense()
    psi0 = basis_state(initial)
    vals = []
    lam = 1.0
    for k0 in range(0, circuits, batch):
        u1, u2, _ = _pairs(model, path, T, tau, seed, k0, min(k0 + batch, circuits))
        lam = u1[0].attenuation
        a = apply_sampled_batch(u1, psi0)
        b = apply_sampled_batch(u2, psi0)
        vals.append(np.real(np.einsum("bi,bi->b", a.conj(), b @ h.T)) / lam**2)
    v = np.concatenate(vals)
    return MonteCarloEnergy(float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))), len(v), lam)


def minimal_time(times: np.ndarray, gaps: np.ndarray, threshold: float = 1e-3) -> float:
    """First grid time from which every later gap stays below ``threshold`` (``nan`` if none)."""
    below = np.asarray(gaps) < threshold
    for i in range(len(below)):
        if below[i:].all():
            return float(times[i])
    return math.nan


@dataclass(frozen=True)
class VarianceResult:
    T: float
    n: float
    tau: float
    attenuation: float
    mean: float
    variance: float
    shots: int

    @property
    def bound(self) -> float:
        """``1 / lambda^2``, the largest possible variance."""
        return 1.0 / self.attenuation**2


def variance_study(
    model: HamiltonianModel,
    T: float,
    n: float,
    shots: int,
    initial: str,
    seed: int = 0,
    path: AdiabaticPath | None = None,
    batch: int = 5000,
) -> VarianceResult:
    """Single-shot variance of ``X = lambda^-1 B(Re <ini|U1^dag U2|ini>)`` at ``tau = n / (T mu_I)``.

    One shot per circuit pair, central time zero. With ``path=None`` both
    circuits evolve under the constant Hamiltonian for time ``T`` (``zeta = 1``);
    otherwise they realize the ASP along ``path``.
    """
    mu = model.mu_I
    if T <= 0 or mu <= 0:
        raise ValueError("T and mu_I must be positive")
    tau = n / (T * mu)
    if not 0 < tau < math.pi / 2:
        raise ValueError(f"tau = {tau} outside (0, pi/2)")
    psi0 = basis_state(initial)
    xs = []
    lam = 1.0
    for k0 in range(0, shots, batch):
        u1, u2, rngs = _pairs(model, path, T, tau, seed, k0, min(k0 + batch, shots))
        lam = u1[0].attenuation * u2[0].attenuation
        a = apply_sampled_batch(u1, psi0)
        b = apply_sampled_batch(u2, psi0)
        amp = np.real(np.einsum("bi,bi->b", a.conj(), b))
        u = np.array([r.random() for r in rngs])
        xs.append(np.where(u < (1 + amp) / 2, 1.0, -1.0) / lam)
    x = np.concatenate(xs)
    return VarianceResult(T, n, tau, lam, float(x.mean()), float(x.var(ddof=1)), len(x))


def sector_gap(model: HamiltonianModel, initial: str, energy: float) -> float:
    """``energy - E_GS`` with ``E_GS`` the lowest level in the initial state's spin sectors."""
    e_gs, _ = sector_ground_energy(model.dense(), initial)
    return energy - e_gs

