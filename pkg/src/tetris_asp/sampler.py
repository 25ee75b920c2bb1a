"""Random circuits whose average is the exact (adiabatic) time evolution.

Gate convention: every event applies ``exp(+i tau P)`` with the term's sign
folded into ``P``; the averaged circuit equals ``lambda * T exp(+i int H)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .chem import HamiltonianModel, rotation_gate_cost
from .pauli import PauliString, PauliSum
from .schedule import AdiabaticPath, HamiltonianSchedule

__all__ = [
    "SamplerConfig",
    "GateEvent",
    "SampledCircuit",
    "stream",
    "sample_adiabatic",
    "sample_schedule",
    "sample_constant",
    "expected_gate_counts",
    "attenuation",
    "format_circuit",
    "parse_circuit",
]

Variant = Literal["base", "background"]


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``, e.g. ``stream(seed, shot_index, role)``.

    Built on ``SeedSequence`` spawn keys, so any stream can be recreated
    without drawing the ones before it.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys)))


@dataclass(frozen=True)
class SamplerConfig:
    tau: float
    total_time: float
    variant: Variant = "background"
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < math.pi / 2:
            raise ValueError(f"gate angle must satisfy 0 < tau < pi/2, got {self.tau}")
        if self.total_time < 0:
            raise ValueError("total time must be nonnegative")
        if self.variant not in ("base", "background"):
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass(frozen=True)
class GateEvent:
    time: float
    term_index: int
    angle: float


@dataclass(frozen=True, eq=False)
class SampledCircuit:
    """Time-ordered rotations ``exp(i tau P_n)``, optionally interleaved with exact background evolution.

    ``segment_phases[m, j]`` is the integrated coefficient of background string
    ``j`` over the m-th gap between rotations (``M + 1`` gaps for ``M`` events);
    that gap applies ``exp(i sum_j segment_phases[m, j] Z_j)``.
    """

    n_qubits: int
    strings: tuple[PauliString, ...]
    times: np.ndarray
    indices: np.ndarray
    tau: float
    total_time: float
    variant: str
    attenuation: float
    background: tuple[PauliString, ...] = ()
    segment_phases: np.ndarray | None = None
    background_rates: np.ndarray | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_events(self) -> int:
        return len(self.times)

    @property
    def events(self) -> list[GateEvent]:
        return [GateEvent(float(t), int(n), self.tau) for t, n in zip(self.times, self.indices)]

    @property
    def segment_durations(self) -> np.ndarray:
        edges = np.concatenate(([0.0], self.times, [self.total_time]))
        return np.diff(edges)

    def two_qubit_count(self, controlled: bool = False) -> int:
        costs = np.array([rotation_gate_cost(s, controlled) for s in self.strings], dtype=int)
        return int(costs[self.indices].sum()) if len(self.indices) else 0


def _attenuation_weight(model: HamiltonianModel, path: AdiabaticPath, cfg: SamplerConfig) -> float:
    if cfg.variant == "background":
        return path.zeta * model.mu_I
    return path.zeta * model.mu_I + model.mu_B


def attenuation(model: HamiltonianModel, path: AdiabaticPath, cfg: SamplerConfig) -> float:
    """``exp(-tan(tau/2) T (zeta mu_I + mu_B))`` (base) or ``exp(-tan(tau/2) zeta T mu_I)`` (background)."""
    return math.exp(-math.tan(cfg.tau / 2) * cfg.total_time * _attenuation_weight(model, path, cfg))


def expected_gate_counts(model: HamiltonianModel, path: AdiabaticPath, cfg: SamplerConfig) -> tuple[float, float]:
    """Mean ``(rotations, two-qubit gates)`` per sampled circuit."""
    k = cfg.total_time / math.sin(cfg.tau)
    rot = path.zeta * model.mu_I
    tqg = path.zeta * math.fsum(t.coefficient * model.g_per_term[t.letters] for t in model.interaction)
    if cfg.variant == "base":
        rot += model.mu_B
        tqg += math.fsum(t.coefficient * rotation_gate_cost(t.string) for t in model.background)
    return k * rot, k * tqg


def _merge(times: list[np.ndarray], idx: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    t = np.concatenate(times) if times else np.empty(0)
    n = np.concatenate(idx) if idx else np.empty(0, dtype=np.int64)
    # stable sort: exact ties (probability zero) keep draw order
    order = np.argsort(t, kind="stable")
    return t[order], n[order].astype(np.int64)


def _background_phases(bg: PauliSum, durations: np.ndarray, scale: float = 1.0) -> np.ndarray:
    c = np.array([t.signed_coefficient for t in bg.terms]) * scale
    return np.outer(durations, c)


def sample_adiabatic(
    model: HamiltonianModel,
    path: AdiabaticPath,
    cfg: SamplerConfig,
    rng: np.random.Generator,
) -> SampledCircuit:
    """Draw one circuit for ``T exp(i int_0^T H_B + w(t/T) H_I dt)``."""
    T, tau = cfg.total_time, cfg.tau
    inter = model.interaction.terms
    c_int = np.array([t.coefficient for t in inter])
    counts = rng.poisson(c_int * path.zeta * T / math.sin(tau)) if len(inter) else np.empty(0, dtype=int)
    u = rng.uniform(0.0, path.zeta, size=int(counts.sum()))
    times = [T * np.asarray(path.z_inverse(u), dtype=float).reshape(-1)]
    idx = [np.repeat(np.arange(len(inter)), counts)]
    strings = [t.string for t in inter]
    if cfg.variant == "base":
        bgt = model.background.terms
        c_bg = np.array([t.coefficient for t in bgt])
        bcounts = rng.poisson(c_bg * T / math.sin(tau)) if len(bgt) else np.empty(0, dtype=int)
        times.append(rng.uniform(0.0, T, size=int(bcounts.sum())))
        idx.append(len(inter) + np.repeat(np.arange(len(bgt)), bcounts))
        strings += [t.string for t in bgt]
    t_sorted, n_sorted = _merge(times, idx)
    circ = dict(
        n_qubits=model.n_qubits,
        strings=tuple(strings),
        times=t_sorted,
        indices=n_sorted,
        tau=tau,
        total_time=T,
        variant=cfg.variant,
        attenuation=attenuation(model, path, cfg),
        seed=cfg.seed,
    )
    if cfg.variant == "background":
        durations = np.diff(np.concatenate(([0.0], t_sorted, [T])))
        circ["background"] = tuple(PauliString(t.letters) for t in model.background.terms)
        circ["segment_phases"] = _background_phases(model.background, durations)
        circ["background_rates"] = np.array([t.signed_coefficient for t in model.background.terms])
    return SampledCircuit(**circ)


def _abs_linear_integral(a: np.ndarray, b: np.ndarray, du: float) -> np.ndarray:
    """``int |a + (b - a) x| dx`` over a segment of width ``du``."""
    same = a * b >= 0
    s = np.abs(a) + np.abs(b)
    with np.errstate(invalid="ignore", divide="ignore"):
        cross = np.where(s > 0, (a * a + b * b) / np.where(s > 0, s, 1.0), 0.0)
    return du * np.where(same, 0.5 * s, 0.5 * cross)


def _snapshot_cumulative(coeffs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``int_0^u c(u') du'`` for piecewise-linear coefficients; shape ``(len(u), n_terms)``."""
    k = coeffs.shape[0] - 1
    du = 1.0 / k
    seg = 0.5 * du * (coeffs[:-1] + coeffs[1:])
    cum = np.vstack([np.zeros(coeffs.shape[1]), np.cumsum(seg, axis=0)])
    x = np.clip(u, 0.0, 1.0) * k
    i = np.minimum(np.floor(x).astype(int), k - 1)
    f = (x - i)[:, None]
    a, b = coeffs[i], coeffs[i + 1]
    return cum[i] + du * (a * f + 0.5 * (b - a) * f * f)


def sample_schedule(schedule: HamiltonianSchedule, cfg: SamplerConfig, rng: np.random.Generator) -> SampledCircuit:
    """Sample any schedule; snapshot paths use thinning of per-term time-dependent rates."""
    if not schedule.is_snapshot:
        return sample_adiabatic(schedule.model, schedule.path, cfg, rng)
    T, tau = cfg.total_time, cfg.tau
    strings, coeffs = schedule.term_table()
    n = schedule.n_qubits
    wmax = 2 if schedule.model.rule == "z_weight_le_2" else 1
    is_bg = np.array([s.is_z_only() and s.weight <= wmax for s in strings]) if cfg.variant == "background" else np.zeros(len(strings), bool)
    rot = np.flatnonzero(~is_bg)
    k = coeffs.shape[0] - 1
    abs_int = sum(_abs_linear_integral(coeffs[i, rot], coeffs[i + 1, rot], 1.0 / k) for i in range(k))
    lam = math.exp(-math.tan(tau / 2) * T * float(np.sum(abs_int)))
    cmax = np.max(np.abs(coeffs[:, rot]), axis=0) if len(rot) else np.empty(0)
    counts = rng.poisson(cmax * T / math.sin(tau))
    cand_t = rng.uniform(0.0, T, size=int(counts.sum()))
    cand_n = np.repeat(np.arange(len(rot)), counts)
    acc_u = rng.uniform(0.0, 1.0, size=len(cand_t))
    u = cand_t / T if T > 0 else cand_t
    x = u * k
    i = np.minimum(np.floor(x).astype(int), k - 1)
    f = x - i
    cols = rot[cand_n]
    c_now = coeffs[i, cols] * (1 - f) + coeffs[i + 1, cols] * f
    keep = acc_u * cmax[cand_n] < np.abs(c_now)
    # one string slot per (term, sign)
    signed = [s for s in (strings[j] for j in rot)] + [-strings[j] for j in rot]
    slot = np.where(c_now[keep] > 0, cand_n[keep], cand_n[keep] + len(rot))
    t_sorted, n_sorted = _merge([cand_t[keep]], [slot])
    circ = dict(
        n_qubits=n,
        strings=tuple(signed),
        times=t_sorted,
        indices=n_sorted,
        tau=tau,
        total_time=T,
        variant=cfg.variant,
        attenuation=lam,
        seed=cfg.seed,
    )
    bg_idx = np.flatnonzero(is_bg)
    if cfg.variant == "background":
        edges = np.concatenate(([0.0], t_sorted, [T]))
        cum = _snapshot_cumulative(coeffs[:, bg_idx], edges / T if T > 0 else edges)
        circ["background"] = tuple(strings[j] for j in bg_idx)
        circ["segment_phases"] = T * np.diff(cum, axis=0)
    return SampledCircuit(**circ)


def sample_constant(
    h: PauliSum,
    s: float,
    tau: float,
    sign: int,
    rng: np.random.Generator,
    background: PauliSum | None = None,
) -> SampledCircuit:
    """Draw a circuit averaging to ``lambda * exp(i sign s (h + background))``.

    Only ``h`` is randomized; ``lambda = exp(-tan(tau/2) s mu(h))``. The
    identity part of ``h`` must be removed beforehand and handled as a phase.
    """
    if s < 0:
        raise ValueError("evolution time must be nonnegative")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if not 0.0 < tau < math.pi / 2:
        raise ValueError(f"gate angle must satisfy 0 < tau < pi/2, got {tau}")
    tab = _constant_tables(h, background, sign)
    c = tab.coefficients
    counts = rng.poisson(c * s / math.sin(tau)) if len(c) else np.empty(0, dtype=int)
    times = rng.uniform(0.0, s, size=int(counts.sum()))
    idx = np.repeat(np.arange(len(c)), counts)
    t_sorted, n_sorted = _merge([times], [idx])
    lam = math.exp(-math.tan(tau / 2) * s * tab.norm)
    circ = dict(
        n_qubits=h.n_qubits,
        strings=tab.strings,
        times=t_sorted,
        indices=n_sorted,
        tau=tau,
        total_time=s,
        variant="background" if background is not None else "base",
        attenuation=lam,
    )
    if background is not None:
        durations = np.diff(np.concatenate(([0.0], t_sorted, [s])))
        circ["background"] = tab.background
        circ["segment_phases"] = np.outer(durations, tab.rates)
        circ["background_rates"] = tab.rates
    return SampledCircuit(**circ)


@dataclass(frozen=True)
class _ConstantTables:
    strings: tuple[PauliString, ...]
    coefficients: np.ndarray
    norm: float
    background: tuple[PauliString, ...]
    rates: np.ndarray


_TABLE_CACHE: dict[tuple[int, int, int], tuple[PauliSum, PauliSum | None, _ConstantTables]] = {}


def _constant_tables(h: PauliSum, background: PauliSum | None, sign: int) -> _ConstantTables:
    # keyed by identity; the stored references keep the ids valid
    key = (id(h), id(background), sign)
    hit = _TABLE_CACHE.get(key)
    if hit is not None and hit[0] is h and hit[1] is background:
        return hit[2]
    terms = h.terms
    if any(t.string.is_identity() for t in terms):
        raise ValueError("remove the identity term before sampling; it is a classical phase")
    bg = background.terms if background is not None else ()
    tab = _ConstantTables(
        strings=tuple(t.string if sign > 0 else -t.string for t in terms),
        coefficients=np.array([t.coefficient for t in terms]),
        norm=h.one_norm(),
        background=tuple(PauliString(t.letters) for t in bg),
        rates=sign * np.array([t.signed_coefficient for t in bg]),
    )
    if len(_TABLE_CACHE) > 64:
        _TABLE_CACHE.clear()
    _TABLE_CACHE[key] = (h, background, tab)
    return tab


def format_circuit(circ: SampledCircuit) -> str:
    """Line-oriented ``t n angle`` listing with a replayable header."""
    lines = [
        f"# variant {circ.variant}",
        f"# lambda {circ.attenuation:.17g}",
        f"# seed {circ.seed}",
        f"# qubits {circ.n_qubits}",
        f"# tau {circ.tau:.17g}",
        f"# total_time {circ.total_time:.17g}",
    ]
    lines += [f"# term {k} {s}" for k, s in enumerate(circ.strings)]
    if circ.segment_phases is not None:
        rates = circ.background_rates
        for k, s in enumerate(circ.background):
            extra = f" {rates[k]:.17g}" if rates is not None else ""
            lines.append(f"# background {k} {s}{extra}")
        for m, row in enumerate(circ.segment_phases):
            lines.append("# segment " + " ".join(f"{v:.17g}" for v in row))
    for t, n in zip(circ.times, circ.indices):
        lines.append(f"{t:.17g} {n} {circ.tau:.17g}")
    return "\n".join(lines) + "\n"


def _parse_string(tok: str) -> PauliString:
    return PauliString(tok[1:], -1) if tok.startswith("-") else PauliString(tok)


def parse_circuit(text: str) -> SampledCircuit:
    head: dict[str, str] = {}
    strings: list[PauliString] = []
    background: list[PauliString] = []
    segments: list[list[float]] = []
    rates: list[float] = []
    times, idx = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            key = parts[0]
            if key == "term":
                strings.append(_parse_string(parts[2]))
            elif key == "background":
                background.append(_parse_string(parts[2]))
                if len(parts) > 3:
                    rates.append(float(parts[3]))
            elif key == "segment":
                segments.append([float(v) for v in parts[1:]])
            else:
                head[key] = parts[1] if len(parts) > 1 else ""
            continue
        t, n, _angle = line.split()
        times.append(float(t))
        idx.append(int(n))
    seed = head.get("seed")
    return SampledCircuit(
        n_qubits=int(head["qubits"]),
        strings=tuple(strings),
        times=np.array(times, dtype=float),
        indices=np.array(idx, dtype=np.int64),
        tau=float(head["tau"]),
        total_time=float(head["total_time"]),
        variant=head["variant"],
        attenuation=float(head["lambda"]),
        background=tuple(background),
        segment_phases=np.array(segments, dtype=float).reshape(len(segments), len(background)) if segments or background else None,
        background_rates=np.array(rates) if rates else None,
        seed=None if seed in (None, "None") else int(seed),
    )
