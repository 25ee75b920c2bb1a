"""Estimation of ``rho(s) = Im <psi| e^{is(E - H)} |psi>`` for the ASP state ``psi``.

Each circuit draws a fresh ``(U1, U2, U')`` triple from the stream
``stream(seed, *key, k)``; queries that share ``key`` therefore reuse the same
circuits, which is how correlated measurement pairs are requested.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from ..chem import HamiltonianModel, initial_state
from ..schedule import AdiabaticPath, HamiltonianSchedule
from ..sampler import SamplerConfig, sample_adiabatic, sample_constant, stream
from .hadamard import (
    AmplitudeEstimate,
    FilterPolicy,
    NoiseModel,
    Part,
    ShotBatch,
    hadamard_test_shots,
    parity_filter,
)
from .reference import run_exact_reference

__all__ = [
    "RhoSetup",
    "estimate_rho",
    "run_circuits",
    "aggregate",
    "exact_rho",
    "RhoOracle",
    "format_rho_csv",
]


@dataclass(frozen=True)
class RhoSetup:
    """Everything about a rho measurement except the probe energy and central time.

    Attributes:
        model: split Hamiltonian.
        path: adiabatic path.
        total_time: ASP duration ``T``.
        tau: gate angle of the two ASP circuits.
        tau_central: gate angle of the central evolution (defaults to ``tau``).
        initial: initial basis state; derived from ``electrons`` when omitted.
        noise: depolarizing model; noisy setups run in circuit mode.
        policy: parity filtering policy applied when aggregating shots.
        part: which part of the amplitude the ancilla measures.
        mode: ``analytic``, ``circuit`` or ``exact``; ``None`` picks circuit mode
            only when noisy. ``exact`` averages each circuit's ideal amplitude
            (the infinite-shot limit) and requires a noiseless setup.
        variant: sampler variant for the ASP circuits.
    """

    model: HamiltonianModel
    path: AdiabaticPath
    total_time: float
    tau: float
    tau_central: float | None = None
    initial: str | None = None
    electrons: int | None = None
    noise: NoiseModel = NoiseModel()
    policy: FilterPolicy = "discard_parity_violations"
    part: Part = "imag"
    mode: Literal["analytic", "circuit", "exact"] | None = None
    variant: Literal["base", "background"] = "background"

    def __post_init__(self) -> None:
        if self.initial is None:
            if self.electrons is None:
                raise ValueError("give either an initial bitstring or an electron count")
            object.__setattr__(self, "initial", initial_state(self.model, self.electrons))
        if len(self.initial) != self.model.n_qubits:
            raise ValueError("initial bitstring length differs from the qubit count")
        if self.mode == "exact" and self.noise.is_noisy:
            raise ValueError("exact amplitudes are noiseless; use circuit mode for noise")

    @property
    def run_mode(self) -> str:
        if self.mode is not None:
            return self.mode
        return "circuit" if self.noise.is_noisy else "analytic"

    @property
    def central_tau(self) -> float:
        return self.tau if self.tau_central is None else self.tau_central


def _one_circuit(setup: RhoSetup, E: float, s: float, shots: int, rng: np.random.Generator) -> ShotBatch:
    cfg = SamplerConfig(setup.tau, setup.total_time, setup.variant)
    m = setup.model
    u1 = sample_adiabatic(m, setup.path, cfg, rng)
    u2 = sample_adiabatic(m, setup.path, cfg, rng)
    central = None
    if s > 0:
        central = sample_constant(m.interaction, s, setup.central_tau, -1, rng, background=m.background)
    # e^{is(E - H)}: the identity part of H is a classical phase
    phase = s * (E - m.constant)
    mode = "analytic" if setup.run_mode == "exact" else setup.run_mode
    return hadamard_test_shots(u1, u2, central, phase, setup.initial, setup.part, rng, shots, setup.noise, mode)


def run_circuits(
    setup: RhoSetup,
    E: float,
    s: float,
    circuits: int,
    shots_per_circuit: int = 1,
    seed: int = 0,
    key: tuple[int, ...] = (),
    threads: int = 1,
) -> list[ShotBatch]:
    """Shot batches of ``circuits`` independent circuits, in circuit order."""
    if circuits < 1 or shots_per_circuit < 1:
        raise ValueError("circuit and shot counts must be positive")
    if s < 0:
        raise ValueError("central time must be non-negative")

    def work(k: int) -> ShotBatch:
        return _one_circuit(setup, E, s, shots_per_circuit, stream(seed, *key, k))

    if threads <= 1:
        return [work(k) for k in range(circuits)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, range(circuits)))


def aggregate(batches: list[ShotBatch], policy: FilterPolicy, part: Part | None = None) -> AmplitudeEstimate:
    """Filter and average shot batches; the error bar is clustered by circuit.

    With ``part`` given, the ideal amplitudes of the circuits are averaged
    instead of the shots.
    """
    if part is not None:
        amps = np.array([b.ideal for b in batches], dtype=complex)
        vals = (amps.imag if part == "imag" else amps.real) / batches[0].attenuation
        se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        return AmplitudeEstimate(float(vals.mean()), se, len(vals), 0, se, vals)
    merged = ShotBatch.concat(batches)
    groups = np.repeat(np.arange(len(batches)), [len(b) for b in batches])
    est = parity_filter(merged, policy, batches[0].attenuation, groups)
    if est.circuit_std_error is None:
        return est
    return AmplitudeEstimate(
        est.mean, est.circuit_std_error, est.shots_used, est.shots_filtered, est.circuit_std_error, est.values
    )


def estimate_rho(
    setup: RhoSetup,
    E: float,
    s: float,
    circuits: int,
    shots_per_circuit: int = 1,
    seed: int = 0,
    key: tuple[int, ...] = (),
    threads: int = 1,
) -> AmplitudeEstimate:
    """``lambda``-scaled estimate of ``rho(s)`` at probe energy ``E``.

    The reported ``std_error`` is the circuit-clustered standard error when
    more than one circuit is run, since shots of one circuit are correlated.

    Raises:
        AllShotsFiltered: when parity filtering removes every shot.
    """
    batches = run_circuits(setup, E, s, circuits, shots_per_circuit, seed, key, threads)
    return aggregate(batches, setup.policy, _exact_part(setup))


def _exact_part(setup: RhoSetup) -> Part | None:
    return setup.part if setup.run_mode == "exact" else None


def exact_rho(
    model: HamiltonianModel,
    path: AdiabaticPath,
    total_time: float,
    initial: str,
    energies: float | Iterable[float],
    s: float,
) -> np.ndarray:
    """Noiseless ``rho(s)`` of the exactly evolved ASP state, for one or many energies."""
    psi = run_exact_reference(HamiltonianSchedule(model, path, total_time), initial)
    w, v = np.linalg.eigh(model.full().to_dense())
    weights = np.abs(v.conj().T @ psi) ** 2
    e = np.atleast_1d(np.asarray(energies, dtype=float))
    return np.imag(np.exp(1j * s * (e[:, None] - w[None, :])) @ weights)


@dataclass
class RhoOracle:
    """Callable ``(E, s, circuits) -> AmplitudeEstimate`` with usage accounting.

    Each call draws fresh circuits unless ``reuse`` is set, in which case
    every call with the same central time sees the same circuit stream.
    ``raw_log`` holds the unfiltered estimate of every call next to ``log``.
    """

    setup: RhoSetup
    seed: int = 0
    shots_per_circuit: int = 1
    threads: int = 1
    reuse: bool = False
    calls: int = 0
    shots_spent: int = 0
    gates_spent: float = 0.0
    log: list[tuple[float, float, AmplitudeEstimate]] = field(default_factory=list)
    raw_log: list[AmplitudeEstimate] = field(default_factory=list)

    def __call__(self, E: float, s: float, circuits: int) -> AmplitudeEstimate:
        key = (0,) if self.reuse else (self.calls + 1,)
        batches = run_circuits(self.setup, E, s, circuits, self.shots_per_circuit, self.seed, key, self.threads)
        self.calls += 1
        part = _exact_part(self.setup)
        est = aggregate(batches, self.setup.policy, part)
        raw = est if part is not None or self.setup.policy == "none" else aggregate(batches, "none")
        self.shots_spent += sum(len(b) for b in batches)
        self.gates_spent += sum(b.two_qubit_count * len(b) for b in batches)
        self.log.append((E, s, est))
        self.raw_log.append(raw)
        return est


def format_rho_csv(
    rows: Iterable[tuple[float, float, AmplitudeEstimate]], raw: Sequence[AmplitudeEstimate] | None = None
) -> str:
    """CSV with header ``E,s,mean,std_error,shots,filtered``, plus ``raw_mean,raw_std_error`` when ``raw`` is given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["E", "s", "mean", "std_error", "shots", "filtered"] + (["raw_mean", "raw_std_error"] if raw else []))
    for i, (E, s, est) in enumerate(rows):
        row = [repr(float(E)), repr(float(s)), repr(est.mean), repr(est.std_error), est.shots_used, est.shots_filtered]
        if raw:
            row += [repr(raw[i].mean), repr(raw[i].std_error)]
        w.writerow(row)
    return buf.getvalue()
