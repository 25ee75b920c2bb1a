"""Hadamard-test shots, trajectory depolarizing noise and parity filtering.

Layout: ancilla (last qubit, least significant bit) in ``|+>``; ``U1``
controlled on ancilla 0; ``U2``, the central circuit and the phase
``exp(i s E)`` controlled on ancilla 1. Measuring the ancilla in the X (Y)
basis gives ``Re`` (``Im``) of ``<ini| U1^dag e^{isE} U' U2 |ini>``.

The two ASP branches are merged in time: both evolve under the same
background Hamiltonian between their rotation events, so that evolution is
applied uncontrolled. Every ZZ gate of the compiled circuit is an error site;
errors are pushed through the Clifford parts of their block and applied as
Pauli operators on the affected trajectories only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from ..chem import rotation_gate_cost
from ..pauli import PauliString
from ..sampler import SampledCircuit
from .native import TWO_QUBIT_PAULIS, error_sites
from .statevector import apply_sampled, basis_index, z_signs

__all__ = [
    "NoiseModel",
    "ShotRecord",
    "ShotBatch",
    "AmplitudeEstimate",
    "AllShotsFiltered",
    "HadamardProgram",
    "build_hadamard_program",
    "hadamard_test_shots",
    "hadamard_test_shot",
    "ideal_amplitude",
    "single_shot_estimator",
    "parity_filter",
    "format_shot_log",
    "parse_shot_log",
]

Part = Literal["real", "imag"]
FilterPolicy = Literal["discard_parity_violations", "particle_number_zero_contribution", "none"]

NOISE_CONVENTIONS = ("pauli_probability", "fidelity", "infidelity")


@dataclass(frozen=True)
class NoiseModel:
    """Uniform random non-identity two-qubit Pauli after each ZZ gate with probability ``p_depol``.

    A Pauli observable touching the gate is then damped by ``1 - 16 p / 15``
    per gate; :meth:`from_convention` converts fidelity figures to ``p_depol``.
    """

    p_depol: float = 0.0
    mode: Literal["off", "trajectory"] = "off"

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_depol <= 1.0:
            raise ValueError("p_depol must lie in [0, 1]")
        if self.mode not in ("off", "trajectory"):
            raise ValueError(f"unknown noise mode {self.mode!r}")

    @classmethod
    def from_convention(cls, value: float, convention: str = "pauli_probability") -> NoiseModel:
        """``pauli_probability``: p = value; ``fidelity``: value is the per-gate damping F,
        p = 15 (1 - F) / 16; ``infidelity``: value is 1 - F."""
        if convention == "pauli_probability":
            p = value
        elif convention == "fidelity":
            p = 15.0 * (1.0 - value) / 16.0
        elif convention == "infidelity":
            p = 15.0 * value / 16.0
        else:
            raise ValueError(f"unknown noise convention {convention!r}")
        return cls(p, "trajectory" if p > 0 else "off")

    @property
    def is_noisy(self) -> bool:
        return self.mode == "trajectory" and self.p_depol > 0

    @property
    def gate_damping(self) -> float:
        return 1.0 - 16.0 * self.p_depol / 15.0 if self.is_noisy else 1.0


@dataclass(frozen=True)
class ShotRecord:
    ancilla_outcome: int
    system_bits: str
    up_parity_ok: bool
    down_parity_ok: bool
    weight: float = 1.0


@dataclass
class ShotBatch:
    """Outcomes of several shots of one Hadamard-test circuit (arrays of equal length)."""

    outcomes: np.ndarray
    system: np.ndarray
    up_ok: np.ndarray
    down_ok: np.ndarray
    n_qubits: int
    two_qubit_count: int = 0
    attenuation: float = 1.0
    ideal: complex | None = None

    def __len__(self) -> int:
        return len(self.outcomes)

    def records(self) -> list[ShotRecord]:
        n = self.n_qubits
        return [
            ShotRecord(int(o), format(int(b), f"0{n}b") if n else "", bool(u), bool(d), 1.0 / self.attenuation)
            for o, b, u, d in zip(self.outcomes, self.system, self.up_ok, self.down_ok)
        ]

    @staticmethod
    def concat(batches: Sequence[ShotBatch]) -> ShotBatch:
        if not batches:
            raise ValueError("no batches")
        return ShotBatch(
            np.concatenate([b.outcomes for b in batches]),
            np.concatenate([b.system for b in batches]),
            np.concatenate([b.up_ok for b in batches]),
            np.concatenate([b.down_ok for b in batches]),
            batches[0].n_qubits,
        )


@dataclass(frozen=True)
class AmplitudeEstimate:
    """``std_error`` is the sample standard deviation over ``sqrt(shots)``.

    ``circuit_std_error`` treats each circuit's shots as one cluster; it is the
    honest error bar when several shots share a circuit.
    """

    mean: float
    std_error: float
    shots_used: int
    shots_filtered: int
    circuit_std_error: float | None = None
    values: np.ndarray | None = field(default=None, repr=False, compare=False)


class AllShotsFiltered(RuntimeError):
    """Every shot violated parity; there is no estimate to report."""


# ---------------------------------------------------------------- programs


@dataclass
class HadamardProgram:
    """Flat list of steps on ``n + 1`` qubits plus its error sites.

    Steps are ``("rot", perm, phase, cos, i sin)`` or ``("diag", vector)``.
    ``sites[g] = (boundary, table)``: an error after ZZ gate ``g`` acts, up to
    phase, as the Pauli ``table[k]`` applied right before step ``boundary``.
    """

    n_qubits: int
    initial: str
    steps: list = field(default_factory=list)
    sites: list = field(default_factory=list)

    @property
    def two_qubit_count(self) -> int:
        return len(self.sites)

    @property
    def dim(self) -> int:
        return 1 << (self.n_qubits + 1)

    def _rot(self, letters: str, sign: int, angle: float) -> None:
        perm, phase = PauliString(letters, sign).apply_phases()
        self.steps.append(("rot", perm, phase, math.cos(angle), 1j * math.sin(angle)))

    def controlled_rotation(self, p: PauliString, angle: float, value: int) -> None:
        n = self.n_qubits
        start = len(self.steps)
        self._rot(p.letters + "I", p.sign, angle / 2)
        self._rot(p.letters + "Z", p.sign, (-angle if value == 1 else angle) / 2)
        for factor, site in error_sites(p, control=n):
            self.sites.append((start + factor + (0 if site.before else 1), site.table))

    def diag(self, vec: np.ndarray) -> None:
        self.steps.append(("diag", vec))

    def pair_site(self, q1: int, q2: int) -> None:
        """Error site of a ZZ gate that ends the most recent step."""
        n1 = self.n_qubits + 1
        table = []
        for a, b in TWO_QUBIT_PAULIS:
            x = z = 0
            for q, ch in ((q1, a), (q2, b)):
                m = 1 << (n1 - 1 - q)
                if ch in "XY":
                    x |= m
                if ch in "ZY":
                    z |= m
            table.append((x, z))
        self.sites.append((len(self.steps), tuple(table)))


def _ext_signs(strings: Sequence[PauliString], n: int) -> np.ndarray:
    """Z signs on the system register, repeated over the ancilla bit."""
    return np.repeat(z_signs(strings, n), 2, axis=1) if len(strings) else np.zeros((0, 1 << (n + 1)))


def _uncontrolled_background(prog: HadamardProgram, strings, signs, phases: np.ndarray) -> None:
    if not len(strings) or not np.any(phases):
        return
    w1 = np.array([s.weight <= 1 for s in strings])
    if np.any(w1):
        prog.diag(np.exp(1j * (phases[w1] @ signs[w1])))
    for j in np.flatnonzero(~w1):
        if phases[j] == 0.0:
            continue
        s = strings[j]
        if s.weight != 2:
            raise ValueError("background strings beyond weight 2 are not supported")
        prog.diag(np.exp(1j * phases[j] * signs[j]))
        prog.pair_site(*s.support)


def _controlled_background(prog: HadamardProgram, strings, signs, j: int, phi: float, value: int) -> None:
    if phi == 0.0:
        return
    s = strings[j]
    n = prog.n_qubits
    if s.weight == 1:
        anc = np.arange(prog.dim) & 1
        on = anc == value
        prog.diag(np.where(on, np.exp(1j * phi * signs[j]), 1.0))
        prog.pair_site(s.support[0], n)
    else:
        prog.controlled_rotation(PauliString(s.letters), phi * s.sign, value)


class _PushedPhases:
    """Accumulates controlled background phases, flushing a term only when a rotation anticommutes with it."""

    def __init__(self, prog: HadamardProgram, strings, signs, value: int):
        self.prog, self.strings, self.signs, self.value = prog, strings, signs, value
        self.acc = np.zeros(len(strings))
        self.zmasks = [s.masks[1] for s in strings]

    def add(self, phases: np.ndarray) -> None:
        self.acc += phases

    def before(self, p: PauliString) -> None:
        x, _ = p.masks
        for j, zm in enumerate(self.zmasks):
            if self.acc[j] != 0.0 and (x & zm).bit_count() % 2:
                _controlled_background(self.prog, self.strings, self.signs, j, self.acc[j], self.value)
                self.acc[j] = 0.0

    def flush(self) -> None:
        for j in range(len(self.strings)):
            _controlled_background(self.prog, self.strings, self.signs, j, self.acc[j], self.value)
            self.acc[j] = 0.0


def _controlled_circuit(prog: HadamardProgram, circ: SampledCircuit, value: int) -> None:
    n = prog.n_qubits
    bg = circ.background if circ.segment_phases is not None else ()
    signs = _ext_signs(bg, n)
    push = _PushedPhases(prog, bg, signs, value)
    for m, k in enumerate(circ.indices):
        if len(bg):
            push.add(circ.segment_phases[m])
        p = circ.strings[k]
        push.before(p)
        prog.controlled_rotation(p, circ.tau, value)
    if len(bg):
        push.add(circ.segment_phases[-1])
    push.flush()


def _mergeable(u1: SampledCircuit, u2: SampledCircuit) -> bool:
    if u1.total_time != u2.total_time:
        return False
    if (u1.segment_phases is None) != (u2.segment_phases is None):
        return False
    if u1.segment_phases is None:
        return True
    return (
        u1.background_rates is not None
        and u2.background_rates is not None
        and tuple(map(str, u1.background)) == tuple(map(str, u2.background))
        and np.array_equal(u1.background_rates, u2.background_rates)
    )


def build_hadamard_program(
    u1: SampledCircuit,
    u2: SampledCircuit,
    central: SampledCircuit | None,
    phase: float,
    initial: str,
) -> HadamardProgram:
    n = u1.n_qubits
    if u2.n_qubits != n or (central is not None and central.n_qubits != n) or len(initial) != n:
        raise ValueError("circuits and initial state must share the qubit count")
    prog = HadamardProgram(n, initial)
    if _mergeable(u1, u2):
        bg = u1.background if u1.segment_phases is not None else ()
        signs = _ext_signs(bg, n)
        rates = u1.background_rates if len(bg) else None
        events = sorted(
            [(t, 0, k) for t, k in zip(u1.times, u1.indices)] + [(t, 1, k) for t, k in zip(u2.times, u2.indices)],
            key=lambda e: (e[0], e[1]),
        )
        last = 0.0
        for t, which, k in events:
            if rates is not None:
                _uncontrolled_background(prog, bg, signs, (t - last) * rates)
            last = t
            circ = u1 if which == 0 else u2
            prog.controlled_rotation(circ.strings[k], circ.tau, 1 if which else 0)
        if rates is not None:
            _uncontrolled_background(prog, bg, signs, (u1.total_time - last) * rates)
    else:
        _controlled_circuit(prog, u1, 0)
        _controlled_circuit(prog, u2, 1)
    if central is not None:
        _controlled_circuit(prog, central, 1)
    if phase:
        anc = np.arange(prog.dim) & 1
        prog.diag(np.where(anc == 1, np.exp(1j * phase), 1.0))
    return prog


# ---------------------------------------------------------------- simulation


def _initial_batch(prog: HadamardProgram, shots: int) -> np.ndarray:
    psi = np.zeros((shots, prog.dim), dtype=np.complex128)
    b = basis_index(prog.initial) << 1
    psi[:, b] = psi[:, b | 1] = 1 / math.sqrt(2)
    return psi


def _apply_error(psi: np.ndarray, rows: np.ndarray, x: int, z: int, idx: np.ndarray) -> None:
    sub = psi[rows][:, idx ^ x]
    if z:
        sub *= 1.0 - 2.0 * (np.bitwise_count(idx & z) & 1)
    psi[rows] = sub


def _draw_errors(prog: HadamardProgram, shots: int, noise: NoiseModel, rng: np.random.Generator) -> dict:
    """``{boundary: [(row, x, z), ...]}`` in gate order."""
    if not noise.is_noisy or not prog.sites:
        return {}
    g = prog.two_qubit_count
    hit = rng.random((shots, g)) < noise.p_depol
    rows, gates = np.nonzero(hit)
    kinds = rng.integers(0, len(TWO_QUBIT_PAULIS), size=len(rows))
    out: dict[int, list] = {}
    order = np.lexsort((rows, gates))
    for i in order:
        boundary, table = prog.sites[gates[i]]
        x, z = table[kinds[i]]
        out.setdefault(boundary, []).append((rows[i], x, z))
    return out


def _run(prog: HadamardProgram, psi: np.ndarray, errors: dict) -> np.ndarray:
    idx = np.arange(prog.dim, dtype=np.int64)
    pending = None

    def apply_errors(b: int) -> None:
        for row, x, z in errors[b]:
            _apply_error(psi, np.array([row]), x, z, idx)

    for i, step in enumerate(prog.steps):
        if i in errors:
            if pending is not None:
                psi *= pending
                pending = None
            apply_errors(i)
        if step[0] == "diag":
            pending = step[1] if pending is None else pending * step[1]
        else:
            if pending is not None:
                psi *= pending
                pending = None
            _, perm, phase, c, s = step
            psi = c * psi + s * (phase * psi[:, perm])
    if pending is not None:
        psi *= pending
    end = len(prog.steps)
    if end in errors:
        apply_errors(end)
    return psi


def _measure(a0: np.ndarray, a1: np.ndarray, part: Part, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Ancilla in the X or Y basis, then the system register in Z."""
    if part == "real":
        plus, minus = a0 + a1, a0 - a1
    elif part == "imag":
        plus, minus = a0 - 1j * a1, a0 + 1j * a1
    else:
        raise ValueError(f"part must be 'real' or 'imag', got {part!r}")
    probs = 0.5 * np.concatenate((np.abs(plus) ** 2, np.abs(minus) ** 2), axis=1)
    cum = np.cumsum(probs, axis=1)
    r = rng.random(len(probs))[:, None] * cum[:, -1:]
    pick = np.minimum((cum < r).sum(axis=1), probs.shape[1] - 1)
    half = a0.shape[1]
    outcomes = np.where(pick < half, 1, -1).astype(np.int8)
    return outcomes, pick % half


def _parities(bits: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    up_mask = sum(1 << (n - 1 - q) for q in range(0, n, 2))
    down_mask = sum(1 << (n - 1 - q) for q in range(1, n, 2))
    return np.bitwise_count(bits & up_mask) & 1, np.bitwise_count(bits & down_mask) & 1


def ideal_amplitude(u1: SampledCircuit, u2: SampledCircuit, central: SampledCircuit | None, phase: float, initial: str) -> complex:
    """``<ini| U1^dag e^{i phase} U' U2 |ini>`` by direct statevector algebra."""
    n = len(initial)
    ini = np.zeros(1 << n, dtype=np.complex128)
    ini[basis_index(initial)] = 1.0
    a = apply_sampled(u1, ini)
    b = apply_sampled(u2, ini)
    if central is not None:
        b = apply_sampled(central, b)
    return complex(np.exp(1j * phase) * np.vdot(a, b))


def _rotation_gates(circ: SampledCircuit) -> int:
    return sum(rotation_gate_cost(circ.strings[k], controlled=True) for k in circ.indices)


def hadamard_test_shots(
    u1: SampledCircuit,
    u2: SampledCircuit,
    central: SampledCircuit | None,
    phase: float,
    initial: str,
    part: Part,
    rng: np.random.Generator,
    shots: int = 1,
    noise: NoiseModel = NoiseModel(),
    mode: Literal["analytic", "circuit"] = "circuit",
) -> ShotBatch:
    """Run ``shots`` repetitions of one Hadamard-test circuit.

    ``analytic`` mode skips the ancilla circuit and samples from the exact
    noiseless joint distribution; it rejects noisy models. Both modes record
    the noiseless amplitude of the sampled circuit in ``ideal``. The analytic
    ``two_qubit_count`` covers the controlled Pauli rotations only, not the
    controlled background phases.
    """
    n = len(initial)
    lam = u1.attenuation * u2.attenuation * (central.attenuation if central is not None else 1.0)
    if mode == "analytic":
        if noise.is_noisy:
            raise ValueError("analytic mode is noiseless; use circuit mode for noise")
        ini = np.zeros(1 << n, dtype=np.complex128)
        ini[basis_index(initial)] = 1.0
        a = apply_sampled(u1, ini)
        b = apply_sampled(u2, ini)
        if central is not None:
            b = apply_sampled(central, b)
        b = np.exp(1j * phase) * b
        amp = complex(np.vdot(a, b))
        a0 = np.broadcast_to(a / math.sqrt(2), (shots, a.size))
        a1 = np.broadcast_to(b / math.sqrt(2), (shots, b.size))
        outcomes, system = _measure(a0, a1, part, rng)
        gates = sum(_rotation_gates(c) for c in (u1, u2, central) if c is not None)
    elif mode == "circuit":
        prog = build_hadamard_program(u1, u2, central, phase, initial)
        errors = _draw_errors(prog, shots, noise, rng)
        psi = _run(prog, _initial_batch(prog, shots), errors)
        outcomes, system = _measure(psi[:, 0::2], psi[:, 1::2], part, rng)
        amp = ideal_amplitude(u1, u2, central, phase, initial)
        gates = prog.two_qubit_count
    else:
        raise ValueError(f"unknown mode {mode!r}")
    up0, down0 = _parities(np.array([basis_index(initial)]), n)
    up, down = _parities(system, n)
    return ShotBatch(outcomes, system, up == up0[0], down == down0[0], n, gates, lam, amp)


def hadamard_test_shot(
    u_forward: SampledCircuit,
    u_backward: SampledCircuit,
    central: SampledCircuit | None,
    phase: float,
    noise: NoiseModel,
    part: Part,
    rng: np.random.Generator,
    initial: str,
    mode: Literal["analytic", "circuit"] = "circuit",
) -> ShotRecord:
    """One shot: ``u_forward`` is ``U2`` (ancilla 1), ``u_backward`` is ``U1`` (ancilla 0)."""
    batch = hadamard_test_shots(u_backward, u_forward, central, phase, initial, part, rng, 1, noise, mode)
    return batch.records()[0]


# ---------------------------------------------------------------- estimators


def single_shot_estimator(record: ShotRecord, lambda_total: float, policy: FilterPolicy = "none") -> float:
    """``lambda^-1 * outcome``; zero for parity-violating shots under the zero-contribution rule."""
    if not 0.0 < lambda_total <= 1.0:
        raise ValueError("lambda must lie in (0, 1]")
    ok = record.up_parity_ok and record.down_parity_ok
    if policy == "particle_number_zero_contribution" and not ok:
        return 0.0
    return record.ancilla_outcome / lambda_total


def _as_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(records, ShotBatch):
        return records.outcomes.astype(float), records.up_ok & records.down_ok
    recs = list(records)
    return (
        np.array([r.ancilla_outcome for r in recs], dtype=float),
        np.array([r.up_parity_ok and r.down_parity_ok for r in recs], dtype=bool),
    )


def parity_filter(
    records: ShotBatch | Iterable[ShotRecord],
    policy: FilterPolicy = "discard_parity_violations",
    lambda_total: float = 1.0,
    groups: np.ndarray | None = None,
) -> AmplitudeEstimate:
    """Aggregate shots into a ``lambda^-1``-scaled amplitude estimate.

    Args:
        records: shots (a batch or an iterable of records).
        policy: ``discard_parity_violations`` drops violating shots entirely;
            ``particle_number_zero_contribution`` keeps them as zeros;
            ``none`` uses every shot as measured.
        lambda_total: total attenuation factor of each circuit.
        groups: optional circuit index per shot for the clustered error bar.

    Raises:
        AllShotsFiltered: when the discard policy leaves no shots.
    """
    x, ok = _as_arrays(records)
    x = x / lambda_total
    if policy == "discard_parity_violations":
        keep = ok
    elif policy == "particle_number_zero_contribution":
        x = np.where(ok, x, 0.0)
        keep = np.ones_like(ok)
    elif policy == "none":
        keep = np.ones_like(ok)
    else:
        raise ValueError(f"unknown policy {policy!r}")
    n_keep = int(keep.sum())
    n_filtered = int(len(x) - (ok.sum() if policy != "none" else len(x)))
    if n_keep == 0:
        raise AllShotsFiltered(f"all {len(x)} shots violate spin-sector parity")
    vals = x[keep]
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_keep)) if n_keep > 1 else math.inf
    cse = None
    if groups is not None:
        g = np.asarray(groups)[keep]
        labels, inv = np.unique(g, return_inverse=True)
        if len(labels) > 1:
            sums = np.bincount(inv, weights=vals)
            counts = np.bincount(inv)
            # ratio estimator over clusters
            resid = sums - mean * counts
            cse = float(math.sqrt(len(labels) / (len(labels) - 1) * np.sum(resid**2)) / n_keep)
    return AmplitudeEstimate(mean, se, n_keep, n_filtered, cse, vals)


# ---------------------------------------------------------------- shot logs


def format_shot_log(records: Iterable[ShotRecord]) -> str:
    """One line per shot: ``ancilla system_bits up_ok down_ok``."""
    return "".join(f"{r.ancilla_outcome:+d} {r.system_bits} {int(r.up_parity_ok)} {int(r.down_parity_ok)}\n" for r in records)


def parse_shot_log(text: str) -> list[ShotRecord]:
    out = []
    for k, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"line {k}: expected 4 fields, got {len(parts)}")
        out.append(ShotRecord(int(parts[0]), parts[1], parts[2] == "1", parts[3] == "1"))
    return out
