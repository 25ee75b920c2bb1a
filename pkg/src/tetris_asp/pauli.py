"""Pauli strings, Pauli sums and their dense-matrix realization.

Letters are written qubit 1 first (leftmost). In the dense realization qubit 1
is the most significant tensor factor, so the basis state ``|b_1 b_2 ... b_L>``
has index ``int("b_1 b_2 ... b_L", 2)``. Internally a string is also held as a
pair of integer bitmasks ``(x, z)`` with qubit ``k`` (0-based) on bit
``L - 1 - k``; with that layout the masks act directly on dense indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "COEFF_TOL",
    "DENSE_QUBIT_CAP",
    "DenseCapError",
    "PauliString",
    "PauliTerm",
    "PauliSum",
    "multiply",
    "commutes",
    "to_dense",
    "pauli_dense",
    "spin_sector_parity_signature",
    "interleaved_partition",
    "parse_pauli_text",
    "format_pauli_text",
]

COEFF_TOL = 1e-12
DENSE_QUBIT_CAP = 12

_PHASES = (1, 1j, -1, -1j)


class DenseCapError(ValueError):
    """Raised when a dense matrix would exceed the configured qubit cap."""


def _masks(letters: str) -> tuple[int, int]:
    n = len(letters)
    x = z = 0
    for k, ch in enumerate(letters):
        bit = 1 << (n - 1 - k)
        if ch == "X":
            x |= bit
        elif ch == "Z":
            z |= bit
        elif ch == "Y":
            x |= bit
            z |= bit
        elif ch != "I":
            raise ValueError(f"invalid Pauli letter {ch!r} in {letters!r}")
    return x, z


def _letters(x: int, z: int, n: int) -> str:
    out = []
    for k in range(n):
        bit = 1 << (n - 1 - k)
        xb, zb = bool(x & bit), bool(z & bit)
        out.append("Y" if xb and zb else "X" if xb else "Z" if zb else "I")
    return "".join(out)


@dataclass(frozen=True)
class PauliString:
    """Tensor product of Pauli letters with an overall sign of +1 or -1."""

    letters: str
    sign: int = 1

    def __post_init__(self) -> None:
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign!r}")
        _masks(self.letters)

    @classmethod
    def identity(cls, n_qubits: int) -> PauliString:
        return cls("I" * n_qubits)

    @classmethod
    def from_sparse(cls, n_qubits: int, ops: Mapping[int, str], sign: int = 1) -> PauliString:
        """Build from ``{qubit_index (0-based): letter}``."""
        chars = ["I"] * n_qubits
        for q, ch in ops.items():
            chars[q] = ch
        return cls("".join(chars), sign)

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @cached_property
    def masks(self) -> tuple[int, int]:
        return _masks(self.letters)

    @property
    def weight(self) -> int:
        return sum(ch != "I" for ch in self.letters)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(k for k, ch in enumerate(self.letters) if ch != "I")

    def is_identity(self) -> bool:
        return self.weight == 0

    def is_z_only(self) -> bool:
        return all(ch in "IZ" for ch in self.letters)

    def __neg__(self) -> PauliString:
        return PauliString(self.letters, -self.sign)

    def __str__(self) -> str:
        return ("-" if self.sign < 0 else "") + self.letters

    def apply_phases(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(perm, phase)`` with ``(P psi)[b] = phase[b] * psi[perm[b]]``."""
        return _action(self.letters, self.sign)

    def to_dense(self) -> np.ndarray:
        return to_dense(PauliSum([PauliTerm(1.0, self)], self.n_qubits))


_ACTION_CACHE: dict[tuple[str, int], tuple[np.ndarray, np.ndarray]] = {}


def _action(letters: str, sign: int) -> tuple[np.ndarray, np.ndarray]:
    key = (letters, sign)
    hit = _ACTION_CACHE.get(key)
    if hit is not None:
        return hit
    n = len(letters)
    x, z = _masks(letters)
    b = np.arange(1 << n, dtype=np.int64)
    perm = b ^ x
    # P|c> = i^{|x&z|} (-1)^{|z&c|} |c^x>, so (P psi)[b] = phase(b^x) psi[b^x]
    ny = (x & z).bit_count()
    parity = np.bitwise_count(perm & z) & 1
    phase = (sign * _PHASES[ny % 4]) * (1 - 2 * parity.astype(np.float64))
    phase = phase.astype(np.complex128)
    perm.setflags(write=False)
    phase.setflags(write=False)
    if len(_ACTION_CACHE) < 4096:
        _ACTION_CACHE[key] = (perm, phase)
    return perm, phase


def multiply(a: PauliString, b: PauliString) -> tuple[complex, PauliString]:
    """Product ``a @ b`` as ``(phase, string)`` with the string carrying sign +1."""
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"length mismatch: {a.n_qubits} vs {b.n_qubits}")
    x1, z1 = a.masks
    x2, z2 = b.masks
    x, z = x1 ^ x2, z1 ^ z2
    # write P = i^{|x&z|} X^x Z^z; then Z^z1 X^x2 = (-1)^{|z1&x2|} X^x2 Z^z1
    k = (x1 & z1).bit_count() + (x2 & z2).bit_count() + 2 * (z1 & x2).bit_count() - (x & z).bit_count()
    phase = _PHASES[k % 4] * a.sign * b.sign
    return phase, PauliString(_letters(x, z, a.n_qubits))


def _mul_masks(x1: int, z1: int, x2: int, z2: int) -> tuple[int, int, int]:
    x, z = x1 ^ x2, z1 ^ z2
    k = (x1 & z1).bit_count() + (x2 & z2).bit_count() + 2 * (z1 & x2).bit_count() - (x & z).bit_count()
    return x, z, k % 4


def commutes(a: PauliString, b: PauliString) -> bool:
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"length mismatch: {a.n_qubits} vs {b.n_qubits}")
    x1, z1 = a.masks
    x2, z2 = b.masks
    return ((x1 & z2).bit_count() + (z1 & x2).bit_count()) % 2 == 0


@dataclass(frozen=True)
class PauliTerm:
    """Nonnegative coefficient times a signed Pauli string."""

    coefficient: float
    string: PauliString

    def __post_init__(self) -> None:
        if self.coefficient < 0:
            raise ValueError("PauliTerm coefficient must be nonnegative; fold the sign into the string")

    @property
    def signed_coefficient(self) -> float:
        return self.coefficient * self.string.sign

    @property
    def letters(self) -> str:
        return self.string.letters


@dataclass(frozen=True)
class PauliSum:
    """Real linear combination of distinct Pauli strings.

    Construct through :meth:`from_dict` or :meth:`from_terms` to get merging of
    duplicates and pruning of near-zero coefficients.
    """

    terms: tuple[PauliTerm, ...]
    n_qubits: int
    _index: dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __init__(self, terms: Iterable[PauliTerm], n_qubits: int):
        terms = tuple(terms)
        seen: dict[str, int] = {}
        for i, t in enumerate(terms):
            if t.string.n_qubits != n_qubits:
                raise ValueError(f"term {t.letters!r} does not act on {n_qubits} qubits")
            if t.letters in seen:
                raise ValueError(f"duplicate Pauli string {t.letters!r}; use PauliSum.from_dict")
            seen[t.letters] = i
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "n_qubits", n_qubits)
        object.__setattr__(self, "_index", seen)

    @classmethod
    def from_dict(cls, coeffs: Mapping[str, float], n_qubits: int | None = None, tol: float = COEFF_TOL) -> PauliSum:
        """Build from ``{letters: signed coefficient}``."""
        if n_qubits is None:
            if not coeffs:
                raise ValueError("n_qubits is required for an empty sum")
            n_qubits = len(next(iter(coeffs)))
        terms = []
        for letters, c in coeffs.items():
            c = float(np.real(c))
            if abs(c) <= tol:
                continue
            terms.append(PauliTerm(abs(c), PauliString(letters, 1 if c > 0 else -1)))
        return cls(terms, n_qubits)

    @classmethod
    def from_terms(cls, items: Iterable[tuple[float, PauliString | str]], n_qubits: int | None = None) -> PauliSum:
        """Merge ``(coefficient, string)`` pairs, folding string signs into coefficients."""
        acc: dict[str, float] = {}
        for c, s in items:
            if isinstance(s, str):
                s = PauliString(s)
            acc[s.letters] = acc.get(s.letters, 0.0) + c * s.sign
            if n_qubits is None:
                n_qubits = s.n_qubits
        return cls.from_dict(acc, n_qubits)

    @classmethod
    def zero(cls, n_qubits: int) -> PauliSum:
        return cls((), n_qubits)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[PauliTerm]:
        return iter(self.terms)

    def __contains__(self, letters: object) -> bool:
        return letters in self._index

    def coefficient(self, letters: str) -> float:
        """Signed coefficient of ``letters`` (0 if absent)."""
        i = self._index.get(letters)
        return 0.0 if i is None else self.terms[i].signed_coefficient

    def to_dict(self) -> dict[str, float]:
        return {t.letters: t.signed_coefficient for t in self.terms}

    def one_norm(self) -> float:
        return math.fsum(t.coefficient for t in self.terms)

    def identity_coefficient(self) -> float:
        return self.coefficient("I" * self.n_qubits)

    def without_identity(self) -> PauliSum:
        return PauliSum([t for t in self.terms if not t.string.is_identity()], self.n_qubits)

    def __add__(self, other: PauliSum) -> PauliSum:
        if not isinstance(other, PauliSum):
            return NotImplemented
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        acc = self.to_dict()
        for t in other.terms:
            acc[t.letters] = acc.get(t.letters, 0.0) + t.signed_coefficient
        return PauliSum.from_dict(acc, self.n_qubits)

    def __sub__(self, other: PauliSum) -> PauliSum:
        return self + other * -1.0

    def __mul__(self, scale: float) -> PauliSum:
        return PauliSum.from_dict({k: v * scale for k, v in self.to_dict().items()}, self.n_qubits)

    __rmul__ = __mul__

    def sorted(self) -> PauliSum:
        return PauliSum(sorted(self.terms, key=lambda t: t.letters), self.n_qubits)

    def to_dense(self, cap: int = DENSE_QUBIT_CAP) -> np.ndarray:
        return to_dense(self, cap)


def pauli_dense(letters: str) -> np.ndarray:
    """Dense matrix of a single unsigned string via explicit Kronecker products."""
    single = {
        "I": np.eye(2, dtype=complex),
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    out = np.ones((1, 1), dtype=complex)
    for ch in letters:
        out = np.kron(out, single[ch])
    return out


def to_dense(h: PauliSum, cap: int = DENSE_QUBIT_CAP) -> np.ndarray:
    """Dense ``2^L x 2^L`` matrix of a Pauli sum."""
    n = h.n_qubits
    if n > cap:
        raise DenseCapError(f"{n} qubits exceeds the dense cap of {cap}")
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=np.complex128)
    rows = np.arange(dim)
    for t in h.terms:
        perm, phase = t.string.apply_phases()
        # (P psi)[b] = phase[b] psi[perm[b]]  ->  P[b, perm[b]] = phase[b]
        out[rows, perm] += t.coefficient * phase
    return out


def interleaved_partition(n_qubits: int) -> list[str]:
    """Spin label per qubit for the up, down, up, down, ... ordering."""
    return ["up" if k % 2 == 0 else "down" for k in range(n_qubits)]


def spin_sector_parity_signature(p: PauliString, spin_partition: Sequence[str] | Mapping[int, str]) -> tuple[bool, bool]:
    """Whether ``p`` flips the occupation parity of the (up, down) sectors.

    ``spin_partition`` maps each 0-based qubit index to ``"up"`` or ``"down"``.
    """
    flips = {"up": 0, "down": 0}
    for k, ch in enumerate(p.letters):
        if ch in "XY":
            flips[spin_partition[k]] += 1
    return bool(flips["up"] % 2), bool(flips["down"] % 2)


def format_pauli_text(h: PauliSum, header: Iterable[str] = ()) -> str:
    lines = [f"# {line}" for line in header]
    lines.append(f"# qubits {h.n_qubits}")
    for t in h.terms:
        lines.append(f"{t.signed_coefficient:.17g} {t.letters}")
    return "\n".join(lines) + "\n"


def parse_pauli_text(text: str, n_qubits: int | None = None) -> PauliSum:
    """Parse ``<coefficient> <letters>`` lines; ``#`` starts a comment."""
    acc: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line, _, comment = raw.partition("#")
        parts = comment.split()
        if len(parts) == 2 and parts[0] == "qubits" and n_qubits is None:
            n_qubits = int(parts[1])
        line = line.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ValueError(f"line {lineno}: expected '<coefficient> <letters>', got {raw!r}")
        try:
            c = float(fields[0])
        except ValueError:
            raise ValueError(f"line {lineno}: bad coefficient {fields[0]!r}") from None
        letters = fields[1].upper()
        try:
            _masks(letters)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if n_qubits is None:
            n_qubits = len(letters)
        if len(letters) != n_qubits:
            raise ValueError(f"line {lineno}: expected {n_qubits} letters, got {len(letters)}")
        acc[letters] = acc.get(letters, 0.0) + c
    if n_qubits is None:
        raise ValueError("empty Pauli file without a '# qubits N' line")
    return PauliSum.from_dict(acc, n_qubits)
