"""Ground-state energy estimators built on ``rho(s)`` queries, plus direct Pauli measurement.

``rho(s) = Im <psi| e^{is(E - H)} |psi>`` behaves like ``q sin(s (E - E_GS))``
near the ground energy, so its sign says on which side of ``E_GS`` the probe
``E`` lies, and its zero is unaffected by a global damping ``q``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Protocol, Sequence

import numpy as np

from .chem import HamiltonianModel

__all__ = [
    "Reading",
    "RhoQuery",
    "SineOracle",
    "EnergyWindow",
    "TraceRow",
    "EnergyEstimate",
    "BranchError",
    "RMConfig",
    "step_exponent_valid",
    "central_time_u",
    "central_time_s",
    "binary_search_query_count",
    "binary_search_energy",
    "arctan_fit_energy",
    "arctan_fit_measure",
    "robbins_monro_energy",
    "RMResult",
    "direct_pauli_shots",
    "direct_pauli_energy",
    "format_trace_csv",
]


class Reading(Protocol):
    mean: float
    std_error: float


RhoQuery = Callable[[float, float, int], Reading]
"""``(E, s, circuits) -> reading`` of ``rho(s)`` at probe energy ``E``."""


@dataclass(frozen=True)
class _Value:
    mean: float
    std_error: float = 0.0


@dataclass(frozen=True)
class SineOracle:
    """Noiseless model oracle ``q sin(s (E - E_GS))`` with zero error bar."""

    e_gs: float
    q: float = 1.0

    def __call__(self, E: float, s: float, circuits: int = 1) -> _Value:
        return _Value(self.q * math.sin(s * (E - self.e_gs)))


@dataclass(frozen=True)
class EnergyWindow:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError("window needs lo < hi")

    @property
    def delta0(self) -> float:
        return (self.hi - self.lo) / 2

    @property
    def mid(self) -> float:
        return (self.lo + self.hi) / 2

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, e: float) -> bool:
        return self.lo <= e <= self.hi


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    energy: float
    s: float
    mean: float
    std_error: float
    decision: str


@dataclass
class EnergyEstimate:
    """Result of an estimator run.

    Attributes:
        value: the energy estimate (Hartree).
        lo, hi: interval bounds when the method provides one.
        std_error: propagated statistical error when available.
        queries: number of oracle queries (binary search: sign decisions).
        shots: total shots or circuits requested from the oracle.
        flags: warnings such as ``indeterminate_sign`` or ``clamped``.
        trace: one row per oracle query.
    """

    value: float
    lo: float = -math.inf
    hi: float = math.inf
    std_error: float = math.nan
    queries: int = 0
    shots: int = 0
    flags: list[str] = field(default_factory=list)
    trace: list[TraceRow] = field(default_factory=list)


class BranchError(ValueError):
    """The probe energies are not inside the monotone branch of ``sin``."""


# ------------------------------------------------------------- central time


def central_time_u(tau: float, mu_I: float, r: float, g: float) -> float:
    """``u(tau) = r g mu_I / sin(tau) + tan(tau/2) mu_I``: decay rate of the measured signal in ``s``."""
    if not 0.0 < tau <= math.pi / 2:
        raise ValueError("tau must lie in (0, pi/2]")
    return r * g * mu_I / math.sin(tau) + math.tan(tau / 2) * mu_I


def central_time_s(delta0: float, u: float) -> float:
    """``s = arctan(delta0 / u) / delta0``, with the ``u -> 0`` limit ``pi / (2 delta0)``."""
    if delta0 <= 0:
        raise ValueError("delta0 must be positive")
    if u < 0:
        raise ValueError("u must be non-negative")
    if u == 0:
        return math.pi / (2 * delta0)
    return math.atan(delta0 / u) / delta0


# ------------------------------------------------------------ binary search


def binary_search_query_count(width: float, eps: float) -> int:
    """Smallest ``k`` with ``width / 2^k <= eps``, i.e. ``ceil(log2(width / eps))``."""
    if width <= 0 or eps <= 0:
        raise ValueError("width and precision must be positive")
    k = max(0, math.ceil(math.log2(width / eps)))
    # guard against log2 rounding either way
    while k > 0 and width / 2 ** (k - 1) <= eps * (1 + 1e-12):
        k -= 1
    while width / 2**k > eps * (1 + 1e-12):
        k += 1
    return k


def binary_search_energy(
    oracle: RhoQuery,
    window: EnergyWindow,
    eps: float,
    shots_per_query: int,
    sigma_rule: float = 3.0,
    max_doublings: int = 4,
    u: float = 0.0,
) -> EnergyEstimate:
    """Bisect ``window`` on the sign of ``rho`` until its width is at most ``eps``.

    Each query probes the midpoint with ``s = central_time_s(delta0, u)`` for the
    current half-width ``delta0``. A sign is accepted once ``|mean| >=
    sigma_rule * std_error``; otherwise the budget doubles up to
    ``max_doublings`` times. An undecided query stops the search with the
    ``indeterminate_sign`` flag and the window kept as it was.
    """
    k = binary_search_query_count(window.width, eps)
    est = EnergyEstimate(value=window.mid, lo=window.lo, hi=window.hi)
    lo, hi = window.lo, window.hi
    for it in range(1, k + 1):
        w = EnergyWindow(lo, hi)
        s = central_time_s(w.delta0, u)
        budget = shots_per_query
        decision = "undecided"
        for attempt in range(max_doublings + 1):
            r = oracle(w.mid, s, budget)
            est.shots += budget
            if r.std_error == 0.0 or abs(r.mean) >= sigma_rule * r.std_error:
                # an exact zero puts the probe on the ground energy; either half keeps it
                decision = "above" if r.mean >= 0 else "below"
            if decision != "undecided" or attempt == max_doublings:
                break
            budget *= 2
        est.queries += 1
        est.trace.append(TraceRow(it, w.mid, s, r.mean, r.std_error, decision))
        if decision == "undecided":
            est.flags.append("indeterminate_sign")
            break
        # rho > 0 means the probe lies above the ground energy
        if decision == "above":
            hi = w.mid
        else:
            lo = w.mid
    est.lo, est.hi = lo, hi
    est.value = (lo + hi) / 2
    est.std_error = (hi - lo) / 2
    return est


# -------------------------------------------------------------- arctan fit


def arctan_fit_energy(rho_plus: float, rho_minus: float, e_test: float, eps: float, s: float) -> float:
    """Zero of ``q sin(s (E - E_GS))`` from its values at ``e_test +- eps``.

    Exact for any damping ``q > 0``.

    Raises:
        ValueError: degenerate input (``rho_plus == rho_minus``) or ``s eps`` outside ``(0, pi/2)``.
        BranchError: ``rho_minus > rho_plus``, which a monotone branch cannot produce.
    """
    if s <= 0 or eps <= 0:
        raise ValueError("s and eps must be positive")
    if s * eps >= math.pi / 2:
        raise ValueError("s * eps must stay below pi/2")
    if rho_plus == rho_minus:
        raise ValueError("rho_plus equals rho_minus; the fit is degenerate")
    if rho_minus > rho_plus:
        raise BranchError("rho decreases across the probe pair; probes are out of the principal branch")
    x = math.tan(s * eps) * (rho_plus + rho_minus) / (rho_minus - rho_plus)
    return e_test + math.atan(x) / s


def arctan_fit_measure(
    oracle: RhoQuery,
    e_test: float,
    eps: float,
    s: float,
    circuits: int,
    max_coarsen: int = 3,
) -> EnergyEstimate:
    """Measure ``rho`` at ``e_test +- eps`` and apply :func:`arctan_fit_energy`.

    On a branch failure ``s`` is halved (up to ``max_coarsen`` times) and the
    pair remeasured; the estimate then carries the ``coarsened_s`` flag.
    """
    est = EnergyEstimate(value=math.nan)
    it = 0
    for attempt in range(max_coarsen + 1):
        rp = oracle(e_test + eps, s, circuits)
        rm = oracle(e_test - eps, s, circuits)
        est.queries += 2
        est.shots += 2 * circuits
        it += 1
        est.trace.append(TraceRow(it, e_test + eps, s, rp.mean, rp.std_error, "plus"))
        est.trace.append(TraceRow(it, e_test - eps, s, rm.mean, rm.std_error, "minus"))
        try:
            est.value = arctan_fit_energy(rp.mean, rm.mean, e_test, eps, s)
        except BranchError:
            if attempt == max_coarsen:
                raise
            est.flags.append("coarsened_s")
            s /= 2
            continue
        est.std_error = _arctan_std_error(rp, rm, eps, s)
        return est
    raise AssertionError("unreachable")


def _arctan_std_error(rp: Reading, rm: Reading, eps: float, s: float) -> float:
    a, b = rp.mean, rm.mean
    t = math.tan(s * eps)
    x = t * (a + b) / (b - a)
    # d/da and d/db of atan(x)/s
    k = t / (s * (1 + x * x) * (b - a) ** 2)
    da = k * 2 * b
    db = -k * 2 * a
    return math.hypot(da * rp.std_error, db * rm.std_error)


# ---------------------------------------------------------- Robbins-Monro


@dataclass(frozen=True)
class RMConfig:
    """Steps ``a_n = a / n^beta`` in units of ``energy_unit`` Hartree.

    ``1/2 < beta <= 1`` is exactly the range where ``sum a_n`` diverges and
    ``sum a_n^2`` converges; it is checked in rational arithmetic.
    """

    s: float
    a: float = 10.0
    beta: float | Fraction = 0.75
    max_iters: int = 1000
    energy_unit: float = 1e-3

    def __post_init__(self) -> None:
        if self.a <= 0:
            raise ValueError("step prefactor must be positive")
        if not step_exponent_valid(self.beta):
            raise ValueError(f"beta={self.beta} violates 1/2 < beta <= 1")
        if self.s <= 0 or self.max_iters < 1:
            raise ValueError("s and max_iters must be positive")

    def step(self, n: int) -> float:
        return self.a * self.energy_unit / n ** float(self.beta)


def step_exponent_valid(beta: float | Fraction | str) -> bool:
    b = Fraction(beta)
    return Fraction(1, 2) < b <= 1



@dataclass
class RMResult:
    iterates: np.ndarray
    flags: list[str] = field(default_factory=list)
    trace: list[TraceRow] = field(default_factory=list)

    @property
    def final(self) -> float:
        return float(self.iterates[-1])


def robbins_monro_energy(
    sample: Callable[[float, int], float],
    e0: float,
    cfg: RMConfig,
    window: EnergyWindow | None = None,
) -> RMResult:
    """Iterate ``E_{n+1} = E_n - a_n V_n(E_n)`` with one fresh sample per step.

    Args:
        sample: ``(E, n) -> V_n(E)``, an unbiased sample of ``rho(s)`` at ``E``.
        e0: starting energy, which should lie within ``pi / (2 s)`` of ``E_GS``.
        cfg: step schedule and central time.
        window: optional clamp interval; clamping is flagged.

    Returns:
        ``iterates[0] = e0`` through ``iterates[max_iters]``.
    """
    it = np.empty(cfg.max_iters + 1)
    it[0] = e = e0
    res = RMResult(it)
    for n in range(1, cfg.max_iters + 1):
        v = sample(e, n)
        e = e - cfg.step(n) * v
        if window is not None and not window.contains(e):
            e = min(max(e, window.lo), window.hi)
            if "clamped" not in res.flags:
                res.flags.append("clamped")
        it[n] = e
        res.trace.append(TraceRow(n, float(it[n - 1]), cfg.s, float(v), math.nan, "step"))
    return res


# -------------------------------------------------------- direct measurement


def direct_pauli_shots(mu: float, eps: float) -> int:
    """``M_S = mu^2 / eps^2`` (rounded up)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return math.ceil(mu * mu / (eps * eps) - 1e-9)


def _allocate(weights: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder split of ``total`` proportional to ``weights``."""
    raw = weights / weights.sum() * total
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def direct_pauli_energy(
    model: HamiltonianModel,
    state_preparer: Callable[[], np.ndarray],
    eps: float,
    rng: np.random.Generator,
    shots: int | None = None,
) -> EnergyEstimate:
    """Estimate ``<H>`` by measuring each Pauli term separately.

    ``M_S = mu^2 / eps^2`` shots are split over the non-identity terms in
    proportion to their coefficients; the identity part is added classically.
    """
    from .engine.statevector import apply_pauli

    psi = state_preparer()
    h = model.full()
    terms = [t for t in h.terms if t.string.weight > 0]
    if not terms:
        return EnergyEstimate(value=model.constant, std_error=0.0)
    c = np.array([t.coefficient for t in terms])
    mu = float(c.sum())
    total = direct_pauli_shots(mu, eps) if shots is None else shots
    alloc = _allocate(c, total)
    value = model.constant
    var = 0.0
    for t, n in zip(terms, alloc):
        if n == 0:
            continue
        ev = float(np.real(np.vdot(psi, apply_pauli(psi, t.string))))
        p_plus = min(max((1 + ev) / 2, 0.0), 1.0)
        k = rng.binomial(int(n), p_plus)
        m = (2 * k - n) / n
        value += t.coefficient * m
        var += t.coefficient**2 * max(1 - m * m, 0.0) / n
    return EnergyEstimate(value=value, std_error=math.sqrt(var), queries=len(terms), shots=int(total))


# --------------------------------------------------------------- trace CSV


def format_trace_csv(trace: Sequence[TraceRow]) -> str:
    """CSV with header ``iteration,E,s,mean,std_error,decision``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "E", "s", "mean", "std_error", "decision"])
    for r in trace:
        w.writerow([r.iteration, repr(r.energy), repr(r.s), repr(r.mean), repr(r.std_error), r.decision])
    return buf.getvalue()
