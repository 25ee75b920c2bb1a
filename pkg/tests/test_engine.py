from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import load_fixture
from tetris_asp.chem import rotation_gate_cost, split
from tetris_asp.engine.hadamard import (
    AllShotsFiltered,
    NoiseModel,
    ShotRecord,
    _draw_errors,
    _initial_batch,
    _run,
    build_hadamard_program,
    format_shot_log,
    hadamard_test_shots,
    ideal_amplitude,
    parity_filter,
    parse_shot_log,
    single_shot_estimator,
)
from tetris_asp.engine.native import (
    NativeCircuit,
    NativeGate,
    compile_rotation,
    compile_z_phase,
    error_sites,
    native_dense,
    propagate_pauli,
)
from tetris_asp.engine.reference import (
    exact_propagator,
    run_exact_reference,
    run_trotter_asp,
    sector_ground_energy,
    sector_indices,
)
from tetris_asp.engine.rho import RhoSetup, estimate_rho, exact_rho
from tetris_asp.engine.statevector import basis_state
from tetris_asp.engine.studies import exact_energy, minimal_time, tetris_energy, trotter_energy, variance_study
from tetris_asp.pauli import PauliString, PauliSum, pauli_dense
from tetris_asp.sampler import SamplerConfig, sample_adiabatic, sample_constant, stream
from tetris_asp.schedule import HamiltonianSchedule, linear_path, snapshot_path

SMALL = split(PauliSum.from_dict({"ZI": 0.5, "IZ": -0.3, "XX": 0.2, "YY": 0.2, "XZ": 0.1, "II": -0.4}))


def letters_strategy(max_n: int = 4):
    return st.integers(1, max_n).flatmap(
        lambda n: st.text(alphabet="IXYZ", min_size=n, max_size=n).filter(lambda s: set(s) != {"I"})
    )


def from_masks(x: int, z: int, n: int) -> str:
    out = []
    for q in range(n):
        b = 1 << (n - 1 - q)
        out.append({(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}[(bool(x & b), bool(z & b))])
    return "".join(out)


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-10) -> bool:
    k = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    phase = a[k] / b[k]
    return abs(abs(phase) - 1) < atol and np.allclose(a, phase * b, atol=atol)


class TestNative:
    @settings(max_examples=60, deadline=None)
    @given(letters_strategy(), st.floats(-3, 3), st.sampled_from([1, -1]))
    def test_rotation_exact(self, letters, angle, sign):
        p = PauliString(letters, sign)
        u = native_dense(compile_rotation(p, angle))
        np.testing.assert_allclose(u, expm(1j * angle * sign * pauli_dense(letters)), atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(letters_strategy(3), st.floats(-3, 3), st.sampled_from([0, 1]))
    def test_controlled_rotation(self, letters, angle, value):
        p = PauliString(letters)
        n = len(letters)
        u = native_dense(compile_rotation(p, angle, control=n, control_value=value))
        on = expm(1j * angle * pauli_dense(letters))
        # ancilla is the least significant bit
        np.testing.assert_allclose(u[value::2, value::2], on, atol=1e-12)
        np.testing.assert_allclose(u[1 - value :: 2, 1 - value :: 2], np.eye(1 << n), atol=1e-12)
        np.testing.assert_allclose(u[0::2, 1::2], 0, atol=1e-12)

    @pytest.mark.parametrize("letters", ["X", "ZZ", "XYZ", "IXIY", "ZZZZ"])
    def test_gate_counts(self, letters):
        p = PauliString(letters)
        assert compile_rotation(p, 0.3).two_qubit_count == rotation_gate_cost(p)
        assert compile_rotation(p, 0.3, control=len(letters)).two_qubit_count == rotation_gate_cost(p, controlled=True)

    def test_identity_rejected(self):
        with pytest.raises(ValueError):
            compile_rotation(PauliString("II"), 0.3)

    def test_control_position(self):
        with pytest.raises(ValueError):
            compile_rotation(PauliString("XX"), 0.3, control=0)

    def test_controlled_z_phase(self):
        u = native_dense(compile_z_phase(0, 0.7, 2, control=1))
        np.testing.assert_allclose(np.diag(u), [1, np.exp(0.7j), 1, np.exp(-0.7j)], atol=1e-14)

    @pytest.mark.parametrize("gate", [NativeGate("H", (1,)), NativeGate("S", (0,)), NativeGate("Sdg", (2,)),
                                      NativeGate("ZZ", (0, 2), math.pi / 4), NativeGate("ZZ", (1, 2), -math.pi / 4)])
    def test_propagation_matches_conjugation(self, gate):
        n = 3
        g = native_dense(NativeCircuit(n, (gate,)))
        for x in range(8):
            for z in range(8):
                x2, z2 = propagate_pauli(x, z, gate, n)
                lhs = g @ pauli_dense(from_masks(x, z, n)) @ g.conj().T
                assert equal_up_to_phase(lhs, pauli_dense(from_masks(x2, z2, n)))

    def test_non_clifford_rejected(self):
        with pytest.raises(ValueError):
            propagate_pauli(1, 0, NativeGate("RZ", (0,), 0.1), 1)

    @pytest.mark.parametrize("letters,control", [("XYZ", None), ("ZXIY", None), ("YX", 2)])
    def test_error_sites_match_insertion(self, letters, control):
        p = PauliString(letters)
        circ = compile_rotation(p, 0.37, control=control)
        n = circ.n_qubits
        zz = [i for i, g in enumerate(circ.gates) if g.is_two_qubit]
        sites = error_sites(p, control)
        assert len(sites) == len(zz)
        # factor blocks: the controlled form is the rotation on P x I followed by the one on P x Z
        half = len(compile_rotation(PauliString(letters + "I"), 0.1).gates) if control is not None else len(circ.gates)
        blocks = [circ.gates[:half], circ.gates[half:]] if control is not None else [circ.gates]
        rng = np.random.default_rng(0)
        for gate_pos, (factor, site) in zip(zz, sites):
            start = 0 if factor == 0 else half
            block = blocks[factor]
            local = gate_pos - start
            k = int(rng.integers(len(site.table)))
            ex, ez = _pair_masks(circ.gates[gate_pos].qubits, k, n)
            with_error = native_dense(NativeCircuit(n, block[local + 1 :])) @ pauli_dense(from_masks(ex, ez, n)) @ native_dense(
                NativeCircuit(n, block[: local + 1])
            )
            ub = native_dense(NativeCircuit(n, block))
            moved = pauli_dense(from_masks(*site.table[k], n))
            want = ub @ moved if site.before else moved @ ub
            assert equal_up_to_phase(with_error, want)


def _pair_masks(pair, k, n):
    from tetris_asp.engine.native import TWO_QUBIT_PAULIS, _pauli_masks_on

    return _pauli_masks_on(pair, TWO_QUBIT_PAULIS[k], n)


class TestReference:
    def test_zero_time_is_identity(self):
        sched = HamiltonianSchedule(SMALL, linear_path(), 0.0)
        np.testing.assert_array_equal(run_exact_reference(sched, "10"), basis_state("10"))

    def test_constant_snapshots_match_expm(self):
        sched = HamiltonianSchedule(SMALL, snapshot_path(), 2.5, (SMALL, SMALL))
        h = (SMALL.background + SMALL.interaction).to_dense()
        np.testing.assert_allclose(exact_propagator(sched), expm(2.5j * h), atol=1e-9)

    def test_trotter_first_order_convergence(self):
        sched = HamiltonianSchedule(SMALL, linear_path(), 3.0)
        exact = run_exact_reference(sched, "10")
        e1 = np.linalg.norm(run_trotter_asp(sched, 200, "10") - exact)
        e2 = np.linalg.norm(run_trotter_asp(sched, 400, "10") - exact)
        assert e2 < 1e-2
        assert e1 / e2 == pytest.approx(2.0, rel=0.15)

    def test_trotter_permutation_is_seeded(self):
        sched = HamiltonianSchedule(SMALL, linear_path(), 3.0)
        a = run_trotter_asp(sched, 5, "10", permutation_seed=4)
        b = run_trotter_asp(sched, 5, "10", permutation_seed=4)
        np.testing.assert_array_equal(a, b)
        with pytest.raises(ValueError):
            run_trotter_asp(sched, 0, "10")

    def test_sector_helpers(self):
        idx = sector_indices(4, 1, 1)
        assert [format(int(i), "04b") for i in idx] == ["0011", "0110", "1001", "1100"]
        h = np.diag(np.arange(16.0))
        e, vec = sector_ground_energy(h, "1100")
        assert e == 3.0
        assert np.argmax(np.abs(vec)) == 3


class TestStudies:
    def test_slow_asp_reaches_ground_state(self, h2):
        model, bits = h2
        e_gs, _ = sector_ground_energy(model.dense(), bits)
        assert exact_energy(model, linear_path(), 40.0, bits) - e_gs < 1e-3

    def test_tetris_energy_unbiased(self, h2):
        model, bits = h2
        ref = exact_energy(model, linear_path(), 3.0, bits)
        mc = tetris_energy(model, linear_path(), 3.0, 0.3, bits, 4000, seed=1)
        assert abs(mc.mean - ref) < 4 * mc.std_error

    def test_trotter_one_step_differs(self, h2):
        model, bits = h2
        assert abs(trotter_energy(model, linear_path(), 10.0, 1, bits) - exact_energy(model, linear_path(), 10.0, bits)) > 1e-3

    def test_minimal_time(self):
        t = np.array([1.0, 2.0, 3.0, 4.0])
        assert minimal_time(t, np.array([0.1, 1e-4, 0.1, 1e-4])) == 4.0
        assert minimal_time(t, np.array([1e-4] * 4)) == 1.0
        assert math.isnan(minimal_time(t, np.array([0.1] * 4)))

    def test_variance_bounded(self):
        res = variance_study(SMALL, 4.0, 1.0, 2000, "10", seed=3)
        assert res.variance <= res.bound
        assert res.tau == pytest.approx(1.0 / (4.0 * SMALL.mu_I))
        with pytest.raises(ValueError):
            variance_study(SMALL, 0.0, 1.0, 10, "10")


def _triple(model, T, tau, s, seed):
    rng = stream(seed)
    cfg = SamplerConfig(tau, T)
    u1 = sample_adiabatic(model, linear_path(), cfg, rng)
    u2 = sample_adiabatic(model, linear_path(), cfg, rng)
    central = sample_constant(model.interaction, s, tau, -1, rng, background=model.background)
    return u1, u2, central


class TestHadamard:
    @pytest.mark.parametrize("seed", range(4))
    def test_circuit_state_matches_ideal_amplitude(self, seed):
        model, bits = load_fixture()
        u1, u2, central = _triple(model, 2.0, 0.4, 1.5, seed)
        prog = build_hadamard_program(u1, u2, central, 0.3, bits)
        psi = _run(prog, _initial_batch(prog, 1), _draw_errors(prog, 1, NoiseModel(), stream(0)))
        amp = 2 * np.vdot(psi[0, 0::2], psi[0, 1::2])
        assert amp == pytest.approx(ideal_amplitude(u1, u2, central, 0.3, bits), abs=1e-10)

    def test_identity_circuits(self):
        empty = sample_constant(PauliSum.from_dict({"XX": 1.0}), 0.0, 0.3, 1, stream(0))
        for part, want in (("real", 1), ("imag", None)):
            b = hadamard_test_shots(empty, empty, None, 0.0, "10", part, stream(1), 400, mode="circuit")
            if want is not None:
                assert np.all(b.outcomes == want)
            else:
                assert abs(b.outcomes.mean()) < 0.2
        b = hadamard_test_shots(empty, empty, None, math.pi / 2, "10", "imag", stream(2), 50)
        assert np.all(b.outcomes == 1)

    def test_analytic_and_circuit_agree(self):
        model, bits = load_fixture()
        u1, u2, central = _triple(model, 2.0, 0.4, 1.0, 7)
        amp = ideal_amplitude(u1, u2, central, 0.2, bits)
        for mode in ("analytic", "circuit"):
            b = hadamard_test_shots(u1, u2, central, 0.2, bits, "imag", stream(mode == "circuit"), 20000, mode=mode)
            assert abs(b.outcomes.mean() - amp.imag) < 4 / math.sqrt(20000)
            assert b.up_ok.all() and b.down_ok.all()

    def test_analytic_rejects_noise(self):
        u1, u2, _ = _triple(SMALL, 1.0, 0.3, 0.0, 0)
        with pytest.raises(ValueError):
            hadamard_test_shots(u1, u2, None, 0.0, "10", "real", stream(0), 1, NoiseModel(0.1, "trajectory"), "analytic")

    def test_noise_breaks_parity_sometimes(self):
        model, bits = load_fixture()
        u1, u2, central = _triple(model, 3.0, 0.3, 2.0, 1)
        b = hadamard_test_shots(u1, u2, central, 0.0, bits, "imag", stream(3), 2000, NoiseModel.from_convention(0.05))
        ok = b.up_ok & b.down_ok
        assert 0 < ok.sum() < len(ok)

    @pytest.mark.parametrize(
        "value,convention,p",
        [(0.01, "pauli_probability", 0.01), (0.9982, "fidelity", 15 * 0.0018 / 16), (0.0018, "infidelity", 15 * 0.0018 / 16)],
    )
    def test_noise_conventions(self, value, convention, p):
        noise = NoiseModel.from_convention(value, convention)
        assert noise.p_depol == pytest.approx(p)
        if convention != "pauli_probability":
            assert noise.gate_damping == pytest.approx(0.9982)


class TestFilter:
    RECS = [
        ShotRecord(1, "1100", True, True),
        ShotRecord(-1, "1100", True, True),
        ShotRecord(1, "1000", False, True),
        ShotRecord(1, "1101", True, False),
    ]

    def test_single_shot_estimator(self):
        rec = ShotRecord(-1, "10", True, True)
        assert single_shot_estimator(rec, math.exp(-1)) == pytest.approx(-math.e)
        bad = ShotRecord(1, "11", False, True)
        assert single_shot_estimator(bad, 0.5, "particle_number_zero_contribution") == 0.0
        with pytest.raises(ValueError):
            single_shot_estimator(rec, 0.0)

    def test_policies(self):
        d = parity_filter(self.RECS, "discard_parity_violations", 0.5)
        assert (d.mean, d.shots_used, d.shots_filtered) == (0.0, 2, 2)
        z = parity_filter(self.RECS, "particle_number_zero_contribution", 0.5)
        assert (z.mean, z.shots_used, z.shots_filtered) == (0.0, 4, 2)
        n = parity_filter(self.RECS, "none", 0.5)
        assert (n.mean, n.shots_used, n.shots_filtered) == (1.0, 4, 0)

    def test_all_filtered(self):
        with pytest.raises(AllShotsFiltered):
            parity_filter(self.RECS[2:])

    def test_clustered_error(self):
        recs = [ShotRecord(o, "11", True, True) for o in (1, 1, -1, -1)]
        est = parity_filter(recs, "none", 1.0, groups=np.array([0, 0, 1, 1]))
        assert est.circuit_std_error == pytest.approx(1.0)

    def test_shot_log_round_trip(self):
        assert parse_shot_log(format_shot_log(self.RECS)) == self.RECS


class TestRho:
    def test_exact_rho_zero_time(self, h2):
        model, bits = h2
        np.testing.assert_allclose(exact_rho(model, linear_path(), 2.0, bits, [-2.0, -1.0], 0.0), 0.0, atol=1e-15)

    def test_estimate_matches_exact(self, h2):
        model, bits = h2
        setup = RhoSetup(model, linear_path(), 4.0, 0.3, initial=bits)
        E, s = -2.25, 10.0
        est = estimate_rho(setup, E, s, 3000, seed=2)
        want = exact_rho(model, linear_path(), 4.0, bits, E, s)[0]
        assert abs(est.mean - want) < 4 * est.std_error
        assert est.shots_filtered == 0

    def test_seeded_reproducible(self, h2):
        model, bits = h2
        setup = RhoSetup(model, linear_path(), 2.0, 0.4, initial=bits)
        a = estimate_rho(setup, -2.2, 5.0, 50, 2, seed=5, key=(1,))
        b = estimate_rho(setup, -2.2, 5.0, 50, 2, seed=5, key=(1,))
        assert a.mean == b.mean and a.std_error == b.std_error

    def test_setup_validation(self, h2):
        model, _ = h2
        with pytest.raises(ValueError):
            RhoSetup(model, linear_path(), 2.0, 0.3)
        assert RhoSetup(model, linear_path(), 2.0, 0.3, electrons=2).initial == "1100"

    def test_exact_mode(self, h2):
        model, bits = h2
        setup = RhoSetup(model, linear_path(), 4.0, 0.3, initial=bits, mode="exact")
        est = estimate_rho(setup, -2.25, 10.0, 3000, seed=2)
        want = exact_rho(model, linear_path(), 4.0, bits, -2.25, 10.0)[0]
        assert abs(est.mean - want) < 4 * est.std_error
        with pytest.raises(ValueError):
            RhoSetup(model, linear_path(), 4.0, 0.3, initial=bits, mode="exact", noise=NoiseModel(0.01, "trajectory"))
