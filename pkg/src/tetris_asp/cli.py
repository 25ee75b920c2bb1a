"""Batch driver: ``tetris-asp <command> --config run.json``.

Every command reads a JSON config, resolves defaults and ``auto`` values,
writes ``resolved_config.json`` next to its outputs and emits plain CSV or
key-value text. Outputs depend only on the config and the seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .chem import (
    FcidumpError,
    HamiltonianModel,
    check_spin_parity,
    format_metadata,
    initial_state,
    jordan_wigner,
    parse_metadata,
    read_fcidump,
    reduce_norm_particle_number,
    split,
)
from .engine.hadamard import AllShotsFiltered, NoiseModel
from .engine.reference import NumericalError, run_exact_reference, sector_ground_energy
from .engine.rho import RhoOracle, RhoSetup, exact_rho, format_rho_csv
from .engine.studies import exact_energy, minimal_time, tetris_energy, trotter_energy, variance_study
from .estimators import (
    BranchError,
    EnergyWindow,
    RMConfig,
    arctan_fit_measure,
    binary_search_energy,
    central_time_u,
    direct_pauli_energy,
    format_trace_csv,
    robbins_monro_energy,
)
from .pauli import format_pauli_text, parse_pauli_text
from .planner import (
    H6_PRESET,
    CostInputs,
    compare_trotter_lcu,
    format_report,
    format_report_csv,
    optimal_gate_angle,
)
from .sampler import stream
from .schedule import AdiabaticPath, HamiltonianSchedule, path_from_spec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------- config


@dataclasses.dataclass
class Context:
    """A loaded config plus the objects every command needs."""

    config: dict[str, Any]
    base: Path
    out: Path
    seed: int
    threads: int
    model: HamiltonianModel | None = None
    electrons: int | None = None
    initial: str | None = None
    e_gs: float | None = None

    def get(self, key: str, default: Any = None, section: dict | None = None) -> Any:
        src = self.config if section is None else section
        return src.get(key, default)

    def require(self, key: str, section: dict | None = None) -> Any:
        src = self.config if section is None else section
        if key not in src:
            raise ConfigError(f"config lacks required key {key!r}")
        return src[key]

    def resolve_path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base / q


def _load_config(path: str | None) -> tuple[dict[str, Any], Path]:
    if path is None:
        return {}, Path.cwd()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return cfg, p.resolve().parent


def load_hamiltonian(
    spec: dict[str, Any], base: Path
) -> tuple[HamiltonianModel, int | None]:
    """Model and electron count from a ``hamiltonian`` config section.

    ``fcidump`` files are mapped and norm-reduced here (unless ``reduce`` is
    false); ``pauli`` files are taken as they are, with the electron count
    read from a ``.meta`` sidecar when one exists.
    """
    rule = spec.get("background_rule", "z_weight_le_1")
    electrons = spec.get("electrons")
    alpha = 0.0
    if "fcidump" in spec:
        p = Path(spec["fcidump"])
        p = p if p.is_absolute() else base / p
        ints = read_fcidump(p)
        h = jordan_wigner(ints)
        check_spin_parity(h)
        if spec.get("reduce", True):
            h, alpha = reduce_norm_particle_number(h)
        if electrons is None:
            electrons = ints.n_electrons
    elif "pauli" in spec:
        p = Path(spec["pauli"])
        p = p if p.is_absolute() else base / p
        h = parse_pauli_text(p.read_text())
        meta_path = p.with_suffix(".meta")
        if meta_path.exists():
            meta = parse_metadata(meta_path.read_text())
            alpha = float(meta.get("alpha", 0.0))
            if electrons is None and meta.get("electrons", "none") != "none":
                electrons = int(meta["electrons"])
    else:
        raise ConfigError("hamiltonian section needs 'fcidump' or 'pauli'")
    model = dataclasses.replace(split(h, rule), alpha=alpha)
    return model, electrons


def _context(args: argparse.Namespace, need_model: bool = True) -> Context:
    cfg, base = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = args.out or cfg.get("output")
    if out is None:
        raise ConfigError("no output directory: pass --out or set 'output'")
    out_path = Path(out)
    if not out_path.is_absolute() and args.out is None:
        out_path = base / out_path
    ctx = Context(cfg, base, out_path, seed, args.threads)
    cfg["seed"] = seed
    if need_model:
        ham = ctx.require("hamiltonian")
        ctx.model, ctx.electrons = load_hamiltonian(ham, base)
        if ctx.electrons is None:
            raise ConfigError("electron count unknown: set hamiltonian.electrons")
        ctx.initial = cfg.get("initial") or initial_state(ctx.model, int(ctx.electrons))
        cfg["initial"] = ctx.initial
        ctx.e_gs, _ = sector_ground_energy(ctx.model.dense(), ctx.initial)
    return ctx


def _path(spec: str) -> AdiabaticPath:
    path = path_from_spec(spec)
    if path.kind == "snapshot_interpolation":
        raise ConfigError("snapshot schedules need HamiltonianSchedule from the Python API; the CLI takes weight paths")
    return path


def _noise(ctx: Context) -> NoiseModel:
    spec = ctx.get("noise") or {}
    if not spec:
        return NoiseModel()
    return NoiseModel.from_convention(float(spec.get("p_depol", 0.0)), spec.get("convention", "pauli_probability"))


def _gate_exponent(noise: NoiseModel) -> float:
    """Per-gate ``r`` with fidelity ``e^{-r}``."""
    d = noise.gate_damping
    if d <= 0:
        return math.inf
    return -math.log(d) + 0.0


def _resolve_tau(ctx: Context, key: str, T: float) -> float:
    """A configured angle, or the planner's optimum when set to ``auto``."""
    tau = ctx.get(key, "auto")
    if tau == "auto":
        m = ctx.model
        path = _path(ctx.get("path", "linear"))
        inputs = CostInputs(
            mu_I=m.mu_I, T=T, g=max(m.g_avg, 1e-12), zeta=path.zeta, r=_gate_exponent(_noise(ctx)), mu_B=m.mu_B
        )
        tau = optimal_gate_angle(inputs).tau_star
    tau = float(tau)
    ctx.config[key] = tau
    return tau


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text)
    return p


def _write_resolved(ctx: Context) -> None:
    _write(ctx.out, "resolved_config.json", json.dumps(ctx.config, indent=2, sort_keys=True) + "\n")


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    def cell(v: Any) -> str:
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = [",".join(header)]
    lines += [",".join(cell(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------- commands


def cmd_ingest(args: argparse.Namespace) -> int:
    src = Path(args.fcidump)
    if not src.exists():
        raise ConfigError(f"no such file: {src}")
    out = Path(args.out or ".")
    ints = read_fcidump(src)
    h = jordan_wigner(ints)
    check_spin_parity(h)
    mu_before = split(h).mu_I
    alpha = 0.0
    if not args.no_reduce:
        h, alpha = reduce_norm_particle_number(h)
    model = split(h, args.background_rule)
    electrons = args.electrons if args.electrons is not None else ints.n_electrons
    stem = src.stem
    _write(out, f"{stem}.pauli", format_pauli_text(h, header=[f"from {src.name}", "ordering interleaved up/down"]))
    meta = {
        "L": model.n_qubits,
        "electrons": "none" if electrons is None else electrons,
        "mu": model.mu,
        "mu_I": model.mu_I,
        "mu_B": model.mu_B,
        "mu_I_unreduced": mu_before,
        "alpha": alpha,
        "constant": model.constant,
        "g_avg": model.g_avg,
        "background_rule": args.background_rule,
        "ordering": "interleaved",
    }
    _write(out, f"{stem}.meta", format_metadata(meta))
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    cfg, _ = _load_config(args.config)
    needs_model = "hamiltonian" in cfg
    ctx = _context(args, need_model=needs_model)
    plan = dict(ctx.get("plan") or {})
    if ctx.model is not None:
        m = ctx.model
        path = _path(ctx.get("path", "linear"))
        plan.setdefault("mu_I", m.mu_I)
        plan.setdefault("mu_B", m.mu_B)
        plan.setdefault("g", m.g_avg)
        plan.setdefault("zeta", path.zeta)
        plan.setdefault("L", m.n_qubits)
    if "T" not in plan and "T" in ctx.config:
        plan["T"] = ctx.config["T"]
    if "r" not in plan:
        plan["r"] = _gate_exponent(_noise(ctx))
    fields = {f.name for f in dataclasses.fields(CostInputs)}
    unknown = set(plan) - fields - {"compare"}
    if unknown:
        raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
    try:
        inputs = CostInputs(**{k: v for k, v in plan.items() if k in fields})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    report = optimal_gate_angle(inputs)
    text = format_report(inputs, report)
    compare = plan.get("compare")
    if compare is not None:
        preset = dict(H6_PRESET) if compare == "h6" else dict(compare)
        mu = float(preset.pop("mu", preset["mu_I"]))
        cmp = compare_trotter_lcu(mu=mu, **preset)
        text += format_metadata(
            {
                "trotter_rotations": cmp.trotter_rotations,
                "tetris_rotations": cmp.tetris_rotations,
                "ratio": cmp.ratio,
                "lcu_crossover_T": cmp.lcu_crossover_T,
                "tetris_beats_lcu": cmp.tetris_beats_lcu,
            }
        )
    ctx.config["plan"] = plan
    _write(ctx.out, "plan.txt", text)
    _write(ctx.out, "plan.csv", format_report_csv(inputs, report))
    _write_resolved(ctx)
    return EXIT_OK


def cmd_asp_sweep(args: argparse.Namespace) -> int:
    ctx = _context(args)
    m, ini, e_gs = ctx.model, ctx.initial, ctx.e_gs
    times = sorted(float(t) for t in ctx.require("times"))
    paths = ctx.get("paths", [ctx.get("path", "linear")])
    mc = ctx.get("monte_carlo")
    e_ini = float(np.real(_basis_energy(m, ini)))
    header = ["T"] + [f"{p}_gap" for p in paths]
    if mc:
        header += [f"{p}_mc_gap" for p in paths] + [f"{p}_mc_se" for p in paths]
    rows = []
    gaps = {p: [] for p in paths}
    for T in times:
        row: list[Any] = [T]
        for p in paths:
            g = e_ini - e_gs if T == 0 else exact_energy(m, _path(p), T, ini) - e_gs
            gaps[p].append(g)
            row.append(g)
        if mc:
            mcs = []
            for i, p in enumerate(paths):
                if T == 0:
                    mcs.append((e_ini - e_gs, 0.0))
                    continue
                r = tetris_energy(m, _path(p), T, float(mc["tau"]), ini, int(mc["circuits"]), seed=ctx.seed + i)
                mcs.append((r.mean - e_gs, r.std_error))
            row += [g for g, _ in mcs] + [se for _, se in mcs]
        rows.append(row)
    _write(ctx.out, "asp_sweep.csv", _csv(header, rows))
    threshold = float(ctx.get("threshold", 1e-3))
    summary = {"E_GS": e_gs, "initial": ini, "threshold": threshold}
    for p in paths:
        summary[f"T_min_{p}"] = minimal_time(np.array(times), np.array(gaps[p]), threshold)
    _write(ctx.out, "summary.txt", format_metadata(summary))
    _write_resolved(ctx)
    return EXIT_OK


def _basis_energy(model: HamiltonianModel, bits: str) -> float:
    from .engine.statevector import basis_state, expectation

    return expectation(basis_state(bits), model.dense())


def cmd_trotter_compare(args: argparse.Namespace) -> int:
    ctx = _context(args)
    m, ini, e_gs = ctx.model, ctx.initial, ctx.e_gs
    path = _path(ctx.get("path", "linear"))
    times = [float(t) for t in ctx.require("times")]
    steps = [int(k) for k in ctx.get("steps", [10])]
    perm = ctx.get("permutation_seed")
    mc = ctx.get("monte_carlo")
    header = ["T", "exact_gap"] + [f"trotter{k}_gap" for k in steps]
    if mc:
        header += ["mc_gap", "mc_se"]
    rows = []
    for i, T in enumerate(times):
        row: list[Any] = [T, exact_energy(m, path, T, ini) - e_gs]
        row += [trotter_energy(m, path, T, k, ini, perm) - e_gs for k in steps]
        if mc:
            r = tetris_energy(m, path, T, float(mc["tau"]), ini, int(mc["circuits"]), seed=ctx.seed, batch=2000)
            row += [r.mean - e_gs, r.std_error]
        rows.append(row)
    _write(ctx.out, "trotter_compare.csv", _csv(header, rows))
    _write_resolved(ctx)
    return EXIT_OK


def _rho_setup(ctx: Context) -> RhoSetup:
    T = float(ctx.require("T"))
    tau = _resolve_tau(ctx, "tau", T)
    tau_c = ctx.get("tau_central")
    policy = ctx.get("policy", "discard_parity_violations")
    return RhoSetup(
        ctx.model,
        _path(ctx.get("path", "linear")),
        T,
        tau,
        None if tau_c is None else float(tau_c),
        ctx.initial,
        noise=_noise(ctx),
        policy=policy,
        mode=ctx.get("mode"),
    )


def _shots(ctx: Context) -> tuple[int, int]:
    shots = ctx.get("shots") or {}
    return int(shots.get("circuits", 1000)), int(shots.get("per_circuit", 1))


def fit_zero_crossing(deltas: np.ndarray, means: np.ndarray, errors: np.ndarray, s: float) -> tuple[float, float]:
    """Least-squares ``(q, delta0)`` of ``q sin(s (delta - delta0))``."""
    sigma = np.where(errors > 0, errors, 1.0)
    (q, d0), _ = curve_fit(lambda d, q, d0: q * np.sin(s * (d - d0)), deltas, means, p0=(0.5, 0.0), sigma=sigma)
    return float(q), float(d0)


def cmd_rho_scan(args: argparse.Namespace) -> int:
    ctx = _context(args)
    setup = _rho_setup(ctx)
    s = float(ctx.require("s"))
    deltas = np.array([float(d) for d in ctx.require("deltas")])
    circuits, per = _shots(ctx)
    oracle = RhoOracle(setup, ctx.seed, per, ctx.threads)
    for d in deltas:
        oracle(ctx.e_gs + d, s, circuits)
    exact = exact_rho(ctx.model, setup.path, setup.total_time, ctx.initial, ctx.e_gs + deltas, s)
    _write(ctx.out, "rho_scan.csv", format_rho_csv(oracle.log, oracle.raw_log))
    rows = [[float(d), float(x)] for d, x in zip(deltas, exact)]
    _write(ctx.out, "rho_exact.csv", _csv(["delta", "rho"], rows))
    means = np.array([e.mean for _, _, e in oracle.log])
    errs = np.array([e.std_error for _, _, e in oracle.log])
    summary: dict[str, Any] = {
        "E_GS": ctx.e_gs,
        "s": s,
        "shots": oracle.shots_spent,
        "gates": oracle.gates_spent,
        "gates_per_shot": oracle.gates_spent / oracle.shots_spent,
    }
    if len(deltas) >= 3:
        q, d0 = fit_zero_crossing(deltas, means, errs, s)
        raw_means = np.array([e.mean for e in oracle.raw_log])
        raw_errs = np.array([e.std_error for e in oracle.raw_log])
        q_raw, d0_raw = fit_zero_crossing(deltas, raw_means, raw_errs, s)
        summary.update({"fit_q": q, "fit_delta0": d0, "fit_q_raw": q_raw, "fit_delta0_raw": d0_raw})
    _write(ctx.out, "summary.txt", format_metadata(summary))
    _write_resolved(ctx)
    return EXIT_OK


def _energy(ctx: Context, section: dict, key: str) -> float:
    """Absolute energy from ``key`` or from ``key_offset`` relative to the exact ground energy."""
    if key in section:
        return float(section[key])
    if f"{key}_offset" in section:
        return ctx.e_gs + float(section[f"{key}_offset"])
    raise ConfigError(f"estimator needs {key!r} or {key + '_offset'!r}")


def cmd_measure(args: argparse.Namespace) -> int:
    ctx = _context(args)
    est_cfg = dict(ctx.require("estimator"))
    kind = ctx.require("kind", est_cfg)
    circuits, per = _shots(ctx)
    summary: dict[str, Any] = {"kind": kind}
    trace = []
    if kind == "direct":
        T = float(ctx.require("T"))
        path = _path(ctx.get("path", "linear"))
        psi = run_exact_reference(HamiltonianSchedule(ctx.model, path, T), ctx.initial)
        shots = est_cfg.get("shots")
        res = direct_pauli_energy(ctx.model, lambda: psi, float(est_cfg.get("eps", 1e-3)), stream(ctx.seed), shots)
        value, flags = res.value, res.flags
        summary.update({"estimate": value, "std_error": res.std_error, "shots": res.shots, "gates": 0})
    else:
        setup = _rho_setup(ctx)
        oracle = RhoOracle(setup, ctx.seed, per, ctx.threads, reuse=bool(est_cfg.get("reuse", False)))
        if kind == "arctan":
            res = arctan_fit_measure(
                oracle, _energy(ctx, est_cfg, "e_test"), float(est_cfg["eps"]), float(est_cfg["s"]), circuits
            )
            value, flags, trace = res.value, res.flags, res.trace
            summary["std_error"] = res.std_error
        elif kind == "binary_search":
            lo, hi = est_cfg.get("window") or [ctx.e_gs + w for w in est_cfg["window_offset"]]
            u = est_cfg.get("u", 0.0)
            if u == "auto":
                # signal decay rate of the controlled central evolution under the configured noise
                m = ctx.model
                u = central_time_u(setup.central_tau, m.mu_I, _gate_exponent(setup.noise), m.g_avg_controlled)
                est_cfg["u"] = u
                ctx.config["estimator"] = est_cfg
            res = binary_search_energy(
                oracle,
                EnergyWindow(float(lo), float(hi)),
                float(est_cfg["eps"]),
                circuits,
                float(est_cfg.get("sigma_rule", 3.0)),
                int(est_cfg.get("max_doublings", 4)),
                float(u),
            )
            value, flags, trace = res.value, res.flags, res.trace
            summary.update({"lo": res.lo, "hi": res.hi, "queries": res.queries})
        elif kind == "robbins_monro":
            rm = RMConfig(
                float(est_cfg.get("s", 20.0)),
                float(est_cfg.get("a", 10.0)),
                float(est_cfg.get("beta", 0.75)),
                int(est_cfg.get("iterations", 1000)),
                float(est_cfg.get("energy_unit", 1e-3)),
            )
            res = robbins_monro_energy(
                lambda E, n: oracle(E, rm.s, circuits).mean, _energy(ctx, est_cfg, "e0"), rm
            )
            value, flags, trace = res.final, res.flags, res.trace
        else:
            raise ConfigError(f"unknown estimator kind {kind!r}")
        summary.update({"estimate": value, "shots": oracle.shots_spent, "gates": oracle.gates_spent})
    summary["E_GS"] = ctx.e_gs
    summary["error"] = value - ctx.e_gs
    summary["flags"] = ",".join(flags) if flags else "none"
    for f in flags:
        print(f"warning: {f}", file=sys.stderr)
    _write(ctx.out, "trace.csv", format_trace_csv(trace))
    _write(ctx.out, "summary.txt", format_metadata(summary))
    _write_resolved(ctx)
    return EXIT_OK


def cmd_variance_study(args: argparse.Namespace) -> int:
    ctx = _context(args)
    times = [float(t) for t in ctx.require("times")]
    ns = [float(n) for n in ctx.get("n", [1, 2])]
    shots, _ = _shots(ctx)
    path = ctx.get("path")
    p = None if path in (None, "constant") else _path(path)
    rows = []
    for i, n in enumerate(ns):
        for j, T in enumerate(times):
            r = variance_study(ctx.model, T, n, shots, ctx.initial, seed=ctx.seed + 1000 * i + j, path=p)
            rows.append([T, n, r.tau, r.attenuation, r.mean, r.variance, r.bound, math.exp(2 * n)])
    header = ["T", "n", "tau", "attenuation", "mean", "variance", "bound", "exp_2n"]
    _write(ctx.out, "variance.csv", _csv(header, rows))
    _write_resolved(ctx)
    return EXIT_OK


# ------------------------------------------------------------------ entry


COMMANDS = {
    "ingest": cmd_ingest,
    "plan": cmd_plan,
    "asp-sweep": cmd_asp_sweep,
    "trotter-compare": cmd_trotter_compare,
    "rho-scan": cmd_rho_scan,
    "measure": cmd_measure,
    "variance-study": cmd_variance_study,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tetris-asp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config: bool = True) -> None:
        if config:
            p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for shot simulation")
        p.add_argument("--out", help="output directory")

    ing = sub.add_parser("ingest", help="FCIDUMP to Pauli file plus metadata")
    ing.add_argument("fcidump")
    ing.add_argument("--no-reduce", action="store_true", help="skip the particle-number norm reduction")
    ing.add_argument("--electrons", type=int, help="override NELEC")
    ing.add_argument("--background-rule", default="z_weight_le_1", choices=["z_weight_le_1", "z_weight_le_2"])
    common(ing, config=False)
    for name in COMMANDS:
        if name != "ingest":
            common(sub.add_parser(name))
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if not hasattr(args, "config"):
        args.config = None
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FcidumpError, FileNotFoundError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) else exc
        print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, AllShotsFiltered, BranchError, FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
