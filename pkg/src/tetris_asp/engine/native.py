"""Compilation of Pauli rotations into the native gate set.

Native gates: X, Y, Z, S, Sdg, H, RZ(theta) = exp(i theta Z) and
ZZ(theta) = exp(i theta Z Z). ``exp(i theta P)`` becomes a basis change, a
parity ladder of CNOTs (each a CZ between Hadamards, the CZ built from one ZZ
gate and two S gates), a central RZ, and the mirrored ladder. Forward and
backward ladders use CZ variants whose global phases cancel, so the dense
product equals the target exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..pauli import PauliString

__all__ = [
    "NativeGate",
    "NativeCircuit",
    "compile_rotation",
    "compile_z_phase",
    "native_dense",
    "propagate_pauli",
    "ErrorSite",
    "error_sites",
    "TWO_QUBIT_PAULIS",
]

_SQ = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1, -1]).astype(complex),
    "S": np.diag([1, 1j]),
    "Sdg": np.diag([1, -1j]),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
}


@dataclass(frozen=True)
class NativeGate:
    name: str
    qubits: tuple[int, ...]
    angle: float = 0.0

    @property
    def is_two_qubit(self) -> bool:
        return self.name == "ZZ"

    def matrix(self) -> np.ndarray:
        if self.name in _SQ:
            return _SQ[self.name]
        if self.name == "RZ":
            return np.diag([np.exp(1j * self.angle), np.exp(-1j * self.angle)])
        if self.name == "ZZ":
            e, f = np.exp(1j * self.angle), np.exp(-1j * self.angle)
            return np.diag([e, f, f, e])
        raise ValueError(f"unknown gate {self.name}")


@dataclass(frozen=True)
class NativeCircuit:
    n_qubits: int
    gates: tuple[NativeGate, ...]

    @property
    def two_qubit_count(self) -> int:
        return sum(g.is_two_qubit for g in self.gates)

    def __add__(self, other: NativeCircuit) -> NativeCircuit:
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        return NativeCircuit(self.n_qubits, self.gates + other.gates)


def _cnot(c: int, t: int, forward: bool) -> list[NativeGate]:
    # CZ = e^{-i pi/4} S S ZZ(pi/4) = e^{+i pi/4} Sdg Sdg ZZ(-pi/4)
    if forward:
        core = [NativeGate("ZZ", (c, t), math.pi / 4), NativeGate("S", (c,)), NativeGate("S", (t,))]
    else:
        core = [NativeGate("ZZ", (c, t), -math.pi / 4), NativeGate("Sdg", (c,)), NativeGate("Sdg", (t,))]
    return [NativeGate("H", (t,)), *core, NativeGate("H", (t,))]


def _pauli_exp_gates(letters: str, angle: float) -> list[NativeGate]:
    """Time-ordered native gates for ``exp(i angle P)``, ``P`` unsigned letters."""
    support = [k for k, ch in enumerate(letters) if ch != "I"]
    pre: list[NativeGate] = []
    post: list[NativeGate] = []
    for k in support:
        ch = letters[k]
        if ch == "X":
            pre.append(NativeGate("H", (k,)))
            post.append(NativeGate("H", (k,)))
        elif ch == "Y":
            # B = H Sdg maps Z to Y under B^dag Z B
            pre += [NativeGate("Sdg", (k,)), NativeGate("H", (k,))]
            post += [NativeGate("H", (k,)), NativeGate("S", (k,))]
    ladder_f: list[NativeGate] = []
    ladder_b: list[NativeGate] = []
    for a, b in zip(support[:-1], support[1:]):
        ladder_f += _cnot(a, b, True)
    for a, b in reversed(list(zip(support[:-1], support[1:]))):
        ladder_b += _cnot(a, b, False)
    center = [NativeGate("RZ", (support[-1],), angle)]
    return pre + ladder_f + center + ladder_b + post


def compile_rotation(
    p: PauliString,
    angle: float,
    control: int | None = None,
    control_value: int = 1,
) -> NativeCircuit:
    """Native circuit for ``exp(i angle P)``, optionally controlled on ancilla ``control``.

    The controlled form is ``exp(i (angle/2) P) exp(-+ i (angle/2) Z_a P)``; the
    ancilla must be the qubit right after the system register.

    Raises:
        ValueError: for the identity string (a pure phase, handled classically).
    """
    if p.weight == 0:
        raise ValueError("identity rotation is a global phase; it is never compiled")
    theta = angle * p.sign
    n = p.n_qubits
    if control is None:
        return NativeCircuit(n, tuple(_pauli_exp_gates(p.letters, theta)))
    if control != n:
        raise ValueError("the ancilla must directly follow the system qubits")
    if control_value not in (0, 1):
        raise ValueError("control value must be 0 or 1")
    ext = p.letters + "I"
    with_anc = p.letters + "Z"
    s = -1.0 if control_value == 1 else 1.0
    gates = _pauli_exp_gates(ext, theta / 2) + _pauli_exp_gates(with_anc, s * theta / 2)
    return NativeCircuit(n + 1, tuple(gates))


def compile_z_phase(q: int, phi: float, n_qubits: int, control: int | None = None, control_value: int = 1) -> NativeCircuit:
    """``exp(i phi Z_q)``; the controlled form uses one native ZZ with the ancilla."""
    if control is None:
        return NativeCircuit(n_qubits, (NativeGate("RZ", (q,), phi),))
    s = -1.0 if control_value == 1 else 1.0
    return NativeCircuit(n_qubits, (NativeGate("RZ", (q,), phi / 2), NativeGate("ZZ", (q, control), s * phi / 2)))


def _embed(mat: np.ndarray, qubits: tuple[int, ...], n: int) -> np.ndarray:
    k = len(qubits)
    dim = 1 << n
    t = mat.reshape((2,) * (2 * k))
    out = np.eye(dim, dtype=complex).reshape((2,) * (2 * n))
    # contract gate input legs with the row legs of the running identity
    out = np.tensordot(t, out, axes=(list(range(k, 2 * k)), list(qubits)))
    out = np.moveaxis(out, list(range(k)), list(qubits))
    return out.reshape(dim, dim)


def native_dense(circ: NativeCircuit) -> np.ndarray:
    """Dense product of a native circuit (test oracle; qubit 1 most significant)."""
    u = np.eye(1 << circ.n_qubits, dtype=complex)
    for g in circ.gates:
        u = _embed(g.matrix(), g.qubits, circ.n_qubits) @ u
    return u


# --- Pauli error propagation (phases dropped; they are global per trajectory) ---

TWO_QUBIT_PAULIS: tuple[tuple[str, str], ...] = tuple(
    (a, b) for a in "IXYZ" for b in "IXYZ" if (a, b) != ("I", "I")
)


def _bit(q: int, n: int) -> int:
    return 1 << (n - 1 - q)


def propagate_pauli(x: int, z: int, gate: NativeGate, n: int) -> tuple[int, int]:
    """Conjugate an unsigned Pauli ``(x, z)`` by a Clifford native gate."""
    name = gate.name
    if name in ("X", "Y", "Z"):
        return x, z
    if name == "H":
        m = _bit(gate.qubits[0], n)
        xb, zb = x & m, z & m
        return (x & ~m) | zb, (z & ~m) | xb
    if name in ("S", "Sdg"):
        m = _bit(gate.qubits[0], n)
        return x, z ^ (x & m)
    if name == "ZZ":
        if not math.isclose(abs(gate.angle), math.pi / 4):
            raise ValueError("only ZZ(+-pi/4) is Clifford")
        ma, mb = _bit(gate.qubits[0], n), _bit(gate.qubits[1], n)
        if bool(x & ma) != bool(x & mb):
            z ^= ma | mb
        return x, z
    raise ValueError(f"gate {name} is not Clifford")


@dataclass(frozen=True)
class ErrorSite:
    """Where the error after one ZZ gate lands once pushed out of its block.

    ``before`` selects the block start (True) or end (False); ``table[k]``
    holds the propagated ``(x, z)`` masks for ``TWO_QUBIT_PAULIS[k]``.
    """

    block: int
    before: bool
    table: tuple[tuple[int, int], ...]


def _pauli_masks_on(pair: tuple[int, int], letters: tuple[str, str], n: int) -> tuple[int, int]:
    x = z = 0
    for q, ch in zip(pair, letters):
        m = _bit(q, n)
        if ch in "XY":
            x |= m
        if ch in "ZY":
            z |= m
    return x, z


@lru_cache(maxsize=4096)
def _factor_sites(letters: str) -> tuple[tuple[bool, tuple[tuple[int, int], ...]], ...]:
    gates = _pauli_exp_gates(letters, 0.1)
    n = len(letters)
    center = next(i for i, g in enumerate(gates) if g.name == "RZ")
    out = []
    for i, g in enumerate(gates):
        if not g.is_two_qubit:
            continue
        table = []
        for lt in TWO_QUBIT_PAULIS:
            x, z = _pauli_masks_on(g.qubits, lt, n)
            if i < center:
                for h in reversed(gates[: i + 1]):
                    x, z = propagate_pauli(x, z, h, n)
            else:
                for h in gates[i + 1 :]:
                    x, z = propagate_pauli(x, z, h, n)
            table.append((x, z))
        out.append((i < center, tuple(table)))
    return tuple(out)


def error_sites(p: PauliString, control: int | None = None) -> list[tuple[int, ErrorSite]]:
    """Error sites of ``compile_rotation`` output, split into its one or two factor blocks.

    Returns ``(factor_index, site)`` pairs in gate order; factor 0 is
    ``exp(i theta/2 P)`` (or the whole rotation when uncontrolled), factor 1 the
    ancilla-coupled one.
    """
    if control is None:
        return [(0, ErrorSite(0, b, t)) for b, t in _factor_sites(p.letters)]
    res = [(0, ErrorSite(0, b, t)) for b, t in _factor_sites(p.letters + "I")]
    res += [(1, ErrorSite(1, b, t)) for b, t in _factor_sites(p.letters + "Z")]
    return res
