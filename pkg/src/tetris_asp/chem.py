"""Molecular integrals to qubit Hamiltonians.

Spin-orbitals are interleaved: spatial orbital ``i`` (0-based) becomes qubits
``2i`` (spin up) and ``2i + 1`` (spin down). An occupied spin-orbital is the
qubit state ``|1>`` and ``c_p = (X_p + i Y_p)/2 * Z_0 ... Z_{p-1}``.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Literal, Mapping

import numpy as np

from .pauli import (
    COEFF_TOL,
    DENSE_QUBIT_CAP,
    PauliString,
    PauliSum,
    _mul_masks,
    _letters,
    interleaved_partition,
    spin_sector_parity_signature,
)

__all__ = [
    "FcidumpError",
    "MolecularIntegrals",
    "HamiltonianModel",
    "BackgroundRule",
    "parse_fcidump",
    "read_fcidump",
    "jordan_wigner",
    "ladder_operator",
    "split",
    "rotation_gate_cost",
    "reduce_norm_particle_number",
    "initial_state",
    "check_spin_parity",
    "format_metadata",
    "parse_metadata",
]

BackgroundRule = Literal["z_weight_le_1", "z_weight_le_2"]
_RULE_WEIGHT = {"z_weight_le_1": 1, "z_weight_le_2": 2}


class FcidumpError(ValueError):
    pass


@dataclass(frozen=True)
class MolecularIntegrals:
    """Second-quantized Hamiltonian on ``n_orbitals`` spin-orbitals.

    ``H = core + sum h_pq c+_p c_q + sum h_pqrs c+_p c+_q c_r c_s``.
    """

    n_orbitals: int
    h_pq: np.ndarray
    h_pqrs: np.ndarray
    core_energy: float = 0.0
    n_electrons: int | None = None
    ms2: int = 0

    @classmethod
    def from_spatial(
        cls,
        h1: np.ndarray,
        eri: np.ndarray,
        core_energy: float = 0.0,
        n_electrons: int | None = None,
        ms2: int = 0,
    ) -> MolecularIntegrals:
        """Expand spatial integrals (chemists' ``(ij|kl)``) to interleaved spin-orbitals."""
        h1 = np.asarray(h1, dtype=float)
        eri = np.asarray(eri, dtype=float)
        n = h1.shape[0]
        L = 2 * n
        h_pq = np.zeros((L, L))
        for s in (0, 1):
            h_pq[s::2, s::2] = h1
        # 1/2 sum (ij|kl) a+_{i s} a+_{k t} a_{l t} a_{j s}  ->  h_pqrs = (ps|qr)/2
        h_pqrs = np.zeros((L, L, L, L))
        for s, t in itertools.product((0, 1), repeat=2):
            h_pqrs[s::2, t::2, t::2, s::2] = 0.5 * eri.transpose(0, 2, 3, 1)
        return cls(L, h_pq, h_pqrs, float(core_energy), n_electrons, ms2)


def _canonical(i: int, j: int, k: int, l: int) -> tuple[int, int, int, int]:
    a, b = (i, j) if i >= j else (j, i)
    c, d = (k, l) if k >= l else (l, k)
    return (a, b, c, d) if (a, b) >= (c, d) else (c, d, a, b)


_NAMELIST = re.compile(r"&FCI(.*?)(?:&END|/\s*$|/\s*\n)", re.IGNORECASE | re.DOTALL)


def parse_fcidump(text: str) -> MolecularIntegrals:
    """Parse FCIDUMP text (namelist header plus ``value i j k l`` records).

    Records with all-zero indices give the core energy, ``k = l = 0`` one-body
    integrals, and four nonzero indices two-electron integrals in chemists'
    ordering. Orbital-energy records ``value i 0 0 0`` are ignored.
    """
    m = _NAMELIST.search(text)
    if m is None:
        raise FcidumpError("missing &FCI ... &END header")
    header = m.group(1)
    params: dict[str, str] = {}
    for key, val in re.findall(r"([A-Za-z0-9_]+)\s*=\s*([^=]*?)(?=,?\s*[A-Za-z0-9_]+\s*=|\s*$)", header.strip()):
        params[key.upper()] = val.strip().rstrip(",")
    try:
        norb = int(params["NORB"])
    except (KeyError, ValueError):
        raise FcidumpError("header lacks a valid NORB") from None
    if norb < 1:
        raise FcidumpError(f"NORB must be positive, got {norb}")
    nelec = int(params["NELEC"]) if "NELEC" in params else None
    ms2 = int(params.get("MS2", "0") or 0)

    body_start = text.count("\n", 0, m.end()) + 1
    body = text[m.end():]
    h1 = np.zeros((norb, norb))
    eri = np.zeros((norb,) * 4)
    core = 0.0
    seen1: dict[tuple[int, int], float] = {}
    seen2: dict[tuple[int, int, int, int], float] = {}
    seen_core: float | None = None

    def _clash(old: float, new: float) -> bool:
        return abs(old - new) > 1e-10 * max(1.0, abs(old), abs(new))

    for offset, raw in enumerate(body.splitlines()):
        lineno = body_start + offset
        line = raw.strip()
        if not line or line.startswith(("#", "!")):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise FcidumpError(f"line {lineno}: expected 'value i j k l', got {raw!r}")
        try:
            val = float(parts[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(p) for p in parts[1:])
        except ValueError:
            raise FcidumpError(f"line {lineno}: cannot parse {raw!r}") from None
        if any(x < 0 or x > norb for x in (i, j, k, l)):
            raise FcidumpError(f"line {lineno}: index out of range 0..{norb} in {raw!r}")
        if i == j == k == l == 0:
            if seen_core is not None and _clash(seen_core, val):
                raise FcidumpError(f"line {lineno}: conflicting core energy")
            seen_core = core = val
        elif j == k == l == 0:
            continue
        elif k == l == 0:
            if i == 0 or j == 0:
                raise FcidumpError(f"line {lineno}: malformed one-body record {raw!r}")
            key = (max(i, j), min(i, j))
            if key in seen1 and _clash(seen1[key], val):
                raise FcidumpError(f"line {lineno}: conflicting duplicate of h{key}")
            seen1[key] = val
            h1[i - 1, j - 1] = h1[j - 1, i - 1] = val
        else:
            if 0 in (i, j, k, l):
                raise FcidumpError(f"line {lineno}: malformed two-body record {raw!r}")
            key = _canonical(i, j, k, l)
            if key in seen2 and _clash(seen2[key], val):
                raise FcidumpError(f"line {lineno}: conflicting duplicate of ({i}{j}|{k}{l})")
            seen2[key] = val
            a, b, c, d = (x - 1 for x in (i, j, k, l))
            for p, q, r, s in ((a, b, c, d), (c, d, a, b)):
                eri[p, q, r, s] = eri[q, p, r, s] = eri[p, q, s, r] = eri[q, p, s, r] = val
    return MolecularIntegrals.from_spatial(h1, eri, core, nelec, ms2)


def read_fcidump(path) -> MolecularIntegrals:
    with open(path) as fh:
        return parse_fcidump(fh.read())


def _ladder(n: int, p: int, dagger: bool) -> dict[tuple[int, int], complex]:
    bit = 1 << (n - 1 - p)
    zlow = 0
    for q in range(p):
        zlow |= 1 << (n - 1 - q)
    return {(bit, zlow): 0.5, (bit, zlow | bit): (-0.5j if dagger else 0.5j)}


def ladder_operator(n_qubits: int, p: int, dagger: bool = False) -> list[tuple[complex, str]]:
    """Jordan-Wigner image of ``c_p`` (or ``c_p^dagger``) as ``(coefficient, letters)`` pairs."""
    if not 0 <= p < n_qubits:
        raise ValueError(f"mode {p} outside 0..{n_qubits - 1}")
    return [(c, _letters(x, z, n_qubits)) for (x, z), c in _ladder(n_qubits, p, dagger).items()]


def _op_mul(a: Mapping[tuple[int, int], complex], b: Mapping[tuple[int, int], complex]) -> dict[tuple[int, int], complex]:
    out: dict[tuple[int, int], complex] = {}
    for (x1, z1), c1 in a.items():
        for (x2, z2), c2 in b.items():
            x, z, k = _mul_masks(x1, z1, x2, z2)
            out[(x, z)] = out.get((x, z), 0.0) + c1 * c2 * (1, 1j, -1, -1j)[k]
    return out


def jordan_wigner(ints: MolecularIntegrals, tol: float = 1e-14) -> PauliSum:
    """Qubit Hamiltonian (core energy on the identity string)."""
    n = ints.n_orbitals
    if n < 1:
        raise ValueError("need at least one orbital")
    ann = [_ladder(n, p, False) for p in range(n)]
    cre = [_ladder(n, p, True) for p in range(n)]
    acc: dict[tuple[int, int], complex] = {(0, 0): complex(ints.core_energy)}

    def _add(op, coeff):
        for key, c in op.items():
            acc[key] = acc.get(key, 0.0) + coeff * c

    for p, q in zip(*np.nonzero(np.abs(ints.h_pq) > tol)):
        _add(_op_mul(cre[p], ann[q]), ints.h_pq[p, q])
    nz = np.argwhere(np.abs(ints.h_pqrs) > tol)
    pair_cache: dict[tuple[str, int, int], dict] = {}
    for p, q, r, s in nz:
        left = pair_cache.get(("c", p, q))
        if left is None:
            left = pair_cache[("c", p, q)] = _op_mul(cre[p], cre[q])
        right = pair_cache.get(("a", r, s))
        if right is None:
            right = pair_cache[("a", r, s)] = _op_mul(ann[r], ann[s])
        if left and right:
            _add(_op_mul(left, right), ints.h_pqrs[p, q, r, s])
    coeffs: dict[str, float] = {}
    for (x, z), c in acc.items():
        if abs(c) <= COEFF_TOL:
            continue
        if abs(c.imag) > 1e-9:
            raise ValueError("Jordan-Wigner image is not Hermitian; integrals lack the required symmetry")
        coeffs[_letters(x, z, n)] = c.real
    return PauliSum.from_dict(coeffs, n)


def rotation_gate_cost(p: PauliString, controlled: bool = False) -> int:
    """Two-qubit gates for ``exp(i theta P)``: ``2(w-1)``, plus ``2w`` when ancilla-controlled."""
    w = p.weight
    if w == 0:
        return 0
    return 2 * (w - 1) + (2 * w if controlled else 0)


@dataclass(frozen=True)
class HamiltonianModel:
    """A qubit Hamiltonian split as ``constant + H_B + H_I``."""

    background: PauliSum
    interaction: PauliSum
    constant: float
    rule: str = "z_weight_le_1"
    g_per_term: Mapping[str, int] = field(default_factory=dict)
    alpha: float = 0.0

    @property
    def n_qubits(self) -> int:
        return self.interaction.n_qubits

    @property
    def mu_B(self) -> float:
        return self.background.one_norm()

    @property
    def mu_I(self) -> float:
        return self.interaction.one_norm()

    @property
    def mu(self) -> float:
        return self.mu_B + self.mu_I

    @property
    def g_avg(self) -> float:
        num = math.fsum(t.coefficient * self.g_per_term[t.letters] for t in self.interaction)
        den = self.mu_I
        return num / den if den > 0 else 0.0

    @property
    def g_avg_controlled(self) -> float:
        """Coefficient-weighted gate cost when each rotation is controlled on an ancilla."""
        den = self.mu_I
        if den == 0:
            return 0.0
        return math.fsum(t.coefficient * rotation_gate_cost(t.string, True) for t in self.interaction) / den

    def full(self) -> PauliSum:
        n = self.n_qubits
        return self.background + self.interaction + PauliSum.from_dict({"I" * n: self.constant}, n)

    def dense(self, cap: int = DENSE_QUBIT_CAP) -> np.ndarray:
        return self.full().to_dense(cap)


def split(h: PauliSum, rule: BackgroundRule = "z_weight_le_1") -> HamiltonianModel:
    """Z-only strings of weight up to the rule's bound go to ``H_B``; the rest to ``H_I``."""
    if rule not in _RULE_WEIGHT:
        raise ValueError(f"unknown background rule {rule!r}")
    wmax = _RULE_WEIGHT[rule]
    bg, inter = [], []
    const = 0.0
    for t in h.terms:
        s = t.string
        if s.is_identity():
            const += t.signed_coefficient
        elif s.is_z_only() and s.weight <= wmax:
            bg.append(t)
        else:
            inter.append(t)
    n = h.n_qubits
    g = {t.letters: rotation_gate_cost(t.string) for t in inter}
    return HamiltonianModel(PauliSum(bg, n), PauliSum(inter, n), const, rule, g)


def _two_z_pairs(n: int) -> list[str]:
    out = []
    for p, q in itertools.combinations(range(n), 2):
        chars = ["I"] * n
        chars[p] = chars[q] = "Z"
        out.append("".join(chars))
    return out


def number_operator_squared(n: int) -> PauliSum:
    """Jordan-Wigner image of ``N^2`` with ``N = sum_p (I - Z_p)/2``."""
    coeffs = {"I" * n: n * n / 4 + n / 4}
    for p in range(n):
        chars = ["I"] * n
        chars[p] = "Z"
        coeffs["".join(chars)] = -n / 2
    for letters in _two_z_pairs(n):
        coeffs[letters] = 0.5
    return PauliSum.from_dict(coeffs, n)


def reduce_norm_particle_number(h: PauliSum) -> tuple[PauliSum, float]:
    """Subtract ``alpha N^2`` with ``alpha / 2`` the lower median of the ``Z_p Z_q`` coefficients.

    Pairs absent from ``h`` count as coefficient 0, since the shift touches every pair.
    """
    n = h.n_qubits
    present = [letters for letters in _two_z_pairs(n) if letters in h]
    if not present:
        return h, 0.0
    vals = sorted(h.coefficient(letters) for letters in _two_z_pairs(n))
    median = vals[(len(vals) - 1) // 2]
    alpha = 2.0 * median
    if alpha == 0.0:
        return h, 0.0
    return h - number_operator_squared(n) * alpha, alpha


def check_spin_parity(h: PauliSum, partition=None) -> None:
    """Raise if any term flips the up- or down-spin occupation parity."""
    partition = partition or interleaved_partition(h.n_qubits)
    for t in h.terms:
        if spin_sector_parity_signature(t.string, partition) != (False, False):
            raise ValueError(f"term {t.letters} breaks spin-sector parity; cannot ingest")


def _bits_energy(bits: str, background: PauliSum) -> float:
    total = 0.0
    for t in background.terms:
        par = sum(1 for k, ch in enumerate(t.letters) if ch == "Z" and bits[k] == "1")
        total += t.signed_coefficient * (-1 if par % 2 else 1)
    return total


def initial_state(model: HamiltonianModel, electron_count: int, tol: float = 1e-12) -> str:
    """Lowest-energy ``H_B`` basis state with ``electron_count`` ones (qubit 1 first).

    Ties go to the lexicographically smallest bitstring.
    """
    n = model.n_qubits
    if not 0 <= electron_count <= n:
        raise ValueError(f"electron count {electron_count} outside 0..{n}")
    bg = model.background
    if any(not t.string.is_z_only() for t in bg.terms):
        raise ValueError("background must be Z-only")
    single_only = all(t.string.weight <= 1 for t in bg.terms)
    if single_only and (n > DENSE_QUBIT_CAP or math.comb(n, electron_count) > 200_000):
        field_ = np.zeros(n)
        for t in bg.terms:
            (k,) = t.string.support
            field_[k] = t.signed_coefficient
        # occupying qubit k changes the energy by -2 field[k]; ties prefer later qubits
        order = sorted(range(n), key=lambda k: (-field_[k], -k))
        occ = set(order[:electron_count])
        return "".join("1" if k in occ else "0" for k in range(n))
    if n > DENSE_QUBIT_CAP + 8:
        raise ValueError("exact enumeration of the background ground state is too large")
    best: list[tuple[float, str]] = []
    for occ in itertools.combinations(range(n), electron_count):
        bits = "".join("1" if k in occ else "0" for k in range(n))
        best.append((_bits_energy(bits, bg), bits))
    emin = min(e for e, _ in best)
    return min(b for e, b in best if e <= emin + tol)


def format_metadata(items: Mapping[str, object]) -> str:
    lines = []
    for k, v in items.items():
        if isinstance(v, float):
            v = f"{v:.17g}"
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def parse_metadata(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out
