"""Adiabatic paths ``H(u) = H_B + w(u) H_I`` and snapshot interpolation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .chem import HamiltonianModel
from .pauli import PauliString, PauliSum

__all__ = [
    "AdiabaticPath",
    "HamiltonianSchedule",
    "linear_path",
    "quadratic_path",
    "tabulated_path",
    "snapshot_path",
    "load_tabulated_path",
    "path_from_spec",
]

_INV_TOL = 1e-15


@dataclass(frozen=True)
class AdiabaticPath:
    """Weight function ``w`` on [0, 1] with ``z(u) = int_0^u w`` and ``zeta = z(1)``.

    Snapshot paths carry no weight function; their time dependence lives in the
    snapshots of the :class:`HamiltonianSchedule`. For them ``w`` is 1 and the
    sampler treats every coefficient as time dependent.
    """

    kind: str
    w: Callable[[np.ndarray], np.ndarray]
    z_exact: Callable[[np.ndarray], np.ndarray]
    zeta: float
    z_inv_exact: Callable[[np.ndarray], np.ndarray] | None = None
    nodes: tuple[np.ndarray, np.ndarray] | None = field(default=None, compare=False)

    def z(self, u):
        """``z(u) = int_0^u w``; scalar in, scalar out."""
        arr = np.asarray(u, dtype=float)
        if np.any(arr < 0) or np.any(arr > 1):
            raise ValueError(f"u must lie in [0, 1], got {u!r}")
        out = self.z_exact(arr)
        return float(out) if np.ndim(out) == 0 else out

    def z_inverse(self, v):
        """Solve ``z(u) = v`` for ``v`` in ``[0, zeta]`` (vectorized)."""
        arr = np.asarray(v, dtype=float)
        if np.any(arr < -_INV_TOL) or np.any(arr > self.zeta * (1 + 1e-14) + _INV_TOL):
            raise ValueError(f"v must lie in [0, {self.zeta}], got {v!r}")
        arr = np.clip(arr, 0.0, self.zeta)
        if self.z_inv_exact is not None:
            out = self.z_inv_exact(arr)
        else:
            out = _monotone_inverse(self.z_exact, arr)
        return float(out) if np.ndim(out) == 0 else out

    def weight(self, u):
        out = self.w(np.asarray(u, dtype=float))
        return float(out) if np.ndim(out) == 0 else out


def _monotone_inverse(f: Callable[[np.ndarray], np.ndarray], v: np.ndarray) -> np.ndarray:
    """Vectorized bisection for an increasing ``f`` on [0, 1]."""
    lo = np.zeros_like(v)
    hi = np.ones_like(v)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = f(mid) < v
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo < 1e-16):
            break
    return 0.5 * (lo + hi)


def linear_path() -> AdiabaticPath:
    return AdiabaticPath(
        kind="linear",
        w=lambda u: u,
        z_exact=lambda u: 0.5 * u * u,
        zeta=0.5,
        z_inv_exact=lambda v: np.sqrt(2.0 * v),
    )


def quadratic_path() -> AdiabaticPath:
    """``w(u) = 2u^2 - u^4``, flat at both ends; ``zeta = 7/15``."""
    return AdiabaticPath(
        kind="quadratic",
        w=lambda u: 2 * u**2 - u**4,
        z_exact=lambda u: 2 * u**3 / 3 - u**5 / 5,
        zeta=7.0 / 15.0,
    )


def tabulated_path(u: Sequence[float], w: Sequence[float]) -> AdiabaticPath:
    """Monotone-cubic (PCHIP) interpolation of tabulated weights; ``z`` is its exact antiderivative."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.ndim != 1 or u.shape != w.shape or len(u) < 2:
        raise ValueError("need matching 1-d arrays of at least two points")
    if np.any(np.diff(u) <= 0) or u[0] != 0.0 or u[-1] != 1.0:
        raise ValueError("u grid must increase strictly from 0 to 1")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if abs(w[0]) > 1e-12 or abs(w[-1] - 1.0) > 1e-12:
        raise ValueError("weights must satisfy w(0) = 0 and w(1) = 1")
    interp = PchipInterpolator(u, w)
    anti = interp.antiderivative()
    zeta = float(anti(1.0))
    if np.any(np.diff(anti(np.linspace(0, 1, 4097))[1:]) <= 0):
        raise ValueError("z(u) must be strictly increasing on (0, 1]")
    return AdiabaticPath(
        kind="custom_tabulated",
        w=lambda x: np.clip(interp(x), 0.0, None),
        z_exact=lambda x: anti(x),
        zeta=zeta,
        nodes=(u, w),
    )


def snapshot_path() -> AdiabaticPath:
    return AdiabaticPath(
        kind="snapshot_interpolation",
        w=lambda u: np.ones_like(u),
        z_exact=lambda u: u,
        zeta=1.0,
        z_inv_exact=lambda v: v,
    )


def load_tabulated_path(path) -> AdiabaticPath:
    """Read whitespace-separated ``u w`` pairs (``#`` comments)."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    return tabulated_path(data[:, 0], data[:, 1])


def path_from_spec(spec: str) -> AdiabaticPath:
    """``linear``, ``quadratic``, ``file:<path>`` or ``snapshots:<dir>``."""
    if spec == "linear":
        return linear_path()
    if spec == "quadratic":
        return quadratic_path()
    if spec.startswith("file:"):
        return load_tabulated_path(spec[5:])
    if spec.startswith("snapshots:"):
        return snapshot_path()
    raise ValueError(f"unknown path spec {spec!r}")


@dataclass(frozen=True)
class HamiltonianSchedule:
    """Time-dependent Hamiltonian ``H(t/T)`` for ``t`` in ``[0, T]``.

    Weight paths use ``model``; snapshot paths interpolate coefficients
    linearly between ``snapshots`` placed on a uniform grid in ``u``.
    """

    model: HamiltonianModel
    path: AdiabaticPath
    total_time: float
    snapshots: tuple[HamiltonianModel, ...] = ()

    def __post_init__(self) -> None:
        if self.total_time < 0:
            raise ValueError("total time must be nonnegative")
        if self.path.kind == "snapshot_interpolation":
            if len(self.snapshots) < 2:
                raise ValueError("snapshot paths need at least two snapshots")
            n = self.snapshots[0].n_qubits
            if any(s.n_qubits != n for s in self.snapshots):
                raise ValueError("snapshots have inconsistent qubit counts")

    @property
    def n_qubits(self) -> int:
        return self.model.n_qubits

    @property
    def is_snapshot(self) -> bool:
        return self.path.kind == "snapshot_interpolation"

    def _bracket(self, u: float) -> tuple[int, float]:
        k = len(self.snapshots) - 1
        x = u * k
        i = min(int(math.floor(x)), k - 1)
        return i, x - i

    def hamiltonian_at(self, u: float, include_constant: bool = False) -> PauliSum:
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"u must lie in [0, 1], got {u}")
        if self.is_snapshot:
            i, frac = self._bracket(u)
            a, b = self.snapshots[i], self.snapshots[i + 1]
            ha = a.background + a.interaction
            hb = b.background + b.interaction
            h = ha * (1 - frac) + hb * frac
            const = a.constant * (1 - frac) + b.constant * frac
        else:
            h = self.model.background + self.model.interaction * self.path.weight(u)
            const = self.model.constant
        if include_constant:
            n = h.n_qubits
            h = h + PauliSum.from_dict({"I" * n: const}, n)
        return h

    def term_table(self) -> tuple[list[PauliString], np.ndarray]:
        """Union of non-identity strings over snapshots and their signed coefficients per snapshot."""
        letters: dict[str, int] = {}
        for snap in self.snapshots:
            for t in (*snap.background.terms, *snap.interaction.terms):
                letters.setdefault(t.letters, len(letters))
        coeffs = np.zeros((len(self.snapshots), len(letters)))
        for k, snap in enumerate(self.snapshots):
            for t in (*snap.background.terms, *snap.interaction.terms):
                coeffs[k, letters[t.letters]] = t.signed_coefficient
        return [PauliString(s) for s in letters], coeffs

    def dense_at(self, u: float) -> np.ndarray:
        return self.hamiltonian_at(u, include_constant=True).to_dense()
