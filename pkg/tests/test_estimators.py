from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from tetris_asp.chem import split
from tetris_asp.estimators import (
    BranchError,
    EnergyWindow,
    RMConfig,
    SineOracle,
    arctan_fit_energy,
    arctan_fit_measure,
    binary_search_energy,
    binary_search_query_count,
    central_time_s,
    central_time_u,
    direct_pauli_energy,
    direct_pauli_shots,
    format_trace_csv,
    robbins_monro_energy,
    step_exponent_valid,
)
from tetris_asp.estimators import _allocate
from tetris_asp.pauli import PauliSum


class TestCentralTime:
    def test_u_examples(self):
        assert central_time_u(math.pi / 2, 1.0, 0.0, 3.0) == pytest.approx(1.0)
        assert central_time_u(1e-9, 1.0, 0.0, 3.0) < 1e-8
        # 0.2 / sin(0.2) + 10 tan(0.1), evaluated independently
        assert central_time_u(0.2, 10.0, 0.02, 1.0) == pytest.approx(2.0100446, abs=1e-7)

    def test_s_examples(self):
        assert central_time_s(1e-3, 0.0) == pytest.approx(500 * math.pi)
        assert central_time_s(0.3, 0.3) == pytest.approx(math.pi / 4 / 0.3)
        with pytest.raises(ValueError):
            central_time_s(0.0, 1.0)
        with pytest.raises(ValueError):
            central_time_s(1.0, -1.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-4, 1.0), st.floats(1e-3, 1.0), st.floats(1e-3, 1e2))
    def test_s_bounds(self, frac, delta0, u):
        # the chosen s never exceeds the optimum 1/u of the damped signal
        s = central_time_s(delta0, u)
        assert math.atan(delta0 / u) / delta0 <= s * (1 + 1e-12)
        assert s <= 1 / u * (1 + 1e-12)
        delta = frac * delta0
        assert math.atan(delta / u) / delta >= s * (1 - 1e-12)


class TestBinarySearch:
    def test_query_count_example(self):
        assert binary_search_query_count(32e-3, 1e-3) == 5
        assert binary_search_query_count(1e-3, 1e-3) == 0
        assert binary_search_query_count(3e-3, 1e-3) == 2

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-4, 10), st.floats(1e-6, 1))
    def test_query_count_is_minimal(self, width, eps):
        k = binary_search_query_count(width, eps)
        assert width / 2**k <= eps * (1 + 1e-9)
        assert k == 0 or width / 2 ** (k - 1) > eps * (1 - 1e-9)

    def test_noiseless_oracle(self):
        e_gs = -1.1372
        est = binary_search_energy(SineOracle(e_gs, 0.3), EnergyWindow(e_gs - 0.011, e_gs + 0.021), 1e-3, 10)
        assert est.queries == 5
        assert est.hi - est.lo <= 1e-3 * (1 + 1e-9)
        assert est.lo <= e_gs <= est.hi
        assert not est.flags
        assert est.value == pytest.approx((est.lo + est.hi) / 2)

    def test_undecided_sign_is_flagged(self):
        class Flat:
            def __call__(self, E, s, circuits):
                return type("R", (), {"mean": 0.01, "std_error": 1.0})()

        est = binary_search_energy(Flat(), EnergyWindow(-1.0, 1.0), 0.1, 5, max_doublings=2)
        assert est.flags == ["indeterminate_sign"]
        assert (est.lo, est.hi) == (-1.0, 1.0)
        assert est.shots == 5 + 10 + 20

    def test_trace_csv(self):
        est = binary_search_energy(SineOracle(0.0), EnergyWindow(-0.004, 0.004), 1e-3, 1)
        lines = format_trace_csv(est.trace).splitlines()
        assert lines[0] == "iteration,E,s,mean,std_error,decision"
        assert len(lines) == 1 + est.queries


class TestArctan:
    @pytest.mark.parametrize("q", [1.0, 0.1, 0.01])
    def test_example(self, q):
        rp, rm = q * math.sin(0.6), -q * math.sin(0.2)
        assert arctan_fit_energy(rp, rm, 0.010, 0.020, 20.0) == pytest.approx(0.0, abs=1e-12)

    def test_symmetric_pair(self):
        assert arctan_fit_energy(0.3, -0.3, -1.5, 0.01, 10.0) == -1.5

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-1, 1), st.floats(0.05, 0.9), st.floats(0.3, 0.95), st.floats(1e-3, 1.0), st.floats(1.0, 50.0))
    def test_damping_invariance(self, e_gs, frac_eps, frac_off, q, s):
        # probes inside the monotone branch |s (E - E_GS)| < pi/2
        eps = frac_eps * (math.pi / 2) / s
        off = (frac_off * (math.pi / 2) / s - eps) * np.sign(e_gs or 1)
        assume(abs(off) + eps < 0.999 * math.pi / 2 / s)
        e_test = e_gs + off
        rp = q * math.sin(s * (e_test + eps - e_gs))
        rm = q * math.sin(s * (e_test - eps - e_gs))
        assume(rp != rm)
        assert arctan_fit_energy(rp, rm, e_test, eps, s) == pytest.approx(e_gs, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.1, 30), st.floats(-0.999, 0.999), st.floats(-0.999, 0.999))
    def test_sine_increasing_on_branch(self, s, a, b):
        lo, hi = sorted((a, b))
        assume(hi - lo > 1e-6)
        x, y = lo * math.pi / 2 / s, hi * math.pi / 2 / s
        assert math.sin(s * x) < math.sin(s * y)

    @pytest.mark.parametrize(
        "args,err",
        [((0.2, 0.2, 0, 0.01, 10), ValueError), ((0.2, 0.3, 0, 0.01, 10), BranchError), ((0.3, 0.2, 0, 0.2, 10), ValueError)],
    )
    def test_errors(self, args, err):
        with pytest.raises(err):
            arctan_fit_energy(*args)

    def test_measure_coarsens_out_of_branch(self):
        # e_test sits past the branch edge at s = 20, inside it at s = 10
        est = arctan_fit_measure(SineOracle(0.0, 0.5), 0.1, 0.01, 20.0, 10)
        assert est.flags == ["coarsened_s"]
        assert est.value == pytest.approx(0.0, abs=1e-12)
        assert est.queries == 4


class TestRobbinsMonro:
    @pytest.mark.parametrize(
        "beta,ok",
        [(Fraction(1, 2), False), ("0.75", True), (1, True), (Fraction(101, 100), False), (0.5000001, True)],
    )
    def test_step_exponent(self, beta, ok):
        assert step_exponent_valid(beta) is ok

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            RMConfig(s=20.0, beta=0.5)
        with pytest.raises(ValueError):
            RMConfig(s=20.0, a=-1.0)

    def test_zero_signal_keeps_iterates(self):
        res = robbins_monro_energy(lambda e, n: 0.0, -1.0, RMConfig(s=20.0, max_iters=50))
        np.testing.assert_array_equal(res.iterates, -1.0)

    def test_deterministic_recursion_approaches_root(self):
        e_gs = -2.0
        res = robbins_monro_energy(lambda e, n: math.sin(20 * (e - e_gs)), e_gs - 0.01, RMConfig(s=20.0))
        errors = np.abs(res.iterates - e_gs)
        assert np.all(np.diff(errors) <= 1e-15)
        assert errors[-1] < errors[0] / 20

    def test_clamping(self):
        res = robbins_monro_energy(lambda e, n: -1.0, 0.0, RMConfig(s=1.0, max_iters=20), EnergyWindow(-0.01, 0.01))
        assert res.flags == ["clamped"]
        assert res.final == 0.01


class TestDirect:
    def test_shot_formula(self):
        assert direct_pauli_shots(2.0, 1e-3) == 4_000_000

    def test_allocation(self):
        alloc = _allocate(np.array([0.5, 0.3, 0.2]), 101)
        assert alloc.sum() == 101
        assert alloc[0] in (50, 51)
        np.testing.assert_array_equal(_allocate(np.array([1.0, 1.0]), 10), [5, 5])

    @pytest.mark.parametrize("bits,value", [("0", -0.7), ("1", 0.7)])
    def test_single_z_eigenstate(self, bits, value):
        model = split(PauliSum.from_dict({"Z": -0.7}))
        psi = np.zeros(2, dtype=complex)
        psi[int(bits)] = 1
        est = direct_pauli_energy(model, lambda: psi, 1e-2, np.random.default_rng(0))
        assert est.value == pytest.approx(value)
        assert est.std_error == 0.0

    def test_error_within_target(self):
        model = split(PauliSum.from_dict({"ZI": 0.4, "XX": 0.3, "YY": 0.3, "II": -1.0}))
        rng = np.random.default_rng(1)
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        psi /= np.linalg.norm(psi)
        exact = float(np.real(np.vdot(psi, model.dense() @ psi)))
        est = direct_pauli_energy(model, lambda: psi, 0.01, rng)
        assert est.shots == 10_000
        assert est.std_error <= 0.01
        assert abs(est.value - exact) < 4 * 0.01
