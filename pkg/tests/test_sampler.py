from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.stats import kstest

from tetris_asp.chem import split
from tetris_asp.engine.statevector import circuit_unitary
from tetris_asp.pauli import PauliSum
from tetris_asp.sampler import (
    SamplerConfig,
    attenuation,
    expected_gate_counts,
    format_circuit,
    parse_circuit,
    sample_adiabatic,
    sample_constant,
    stream,
)
from tetris_asp.schedule import linear_path, quadratic_path

MODEL = split(PauliSum.from_dict({"ZII": 0.4, "IZI": -0.3, "XXI": 0.25, "IYY": -0.15, "XZX": 0.1, "III": -0.5}))


class TestConfig:
    @pytest.mark.parametrize("tau", [0.0, -0.1, math.pi / 2, 2.0])
    def test_rejects_angle(self, tau):
        with pytest.raises(ValueError):
            SamplerConfig(tau, 1.0)

    def test_rejects_negative_time_and_variant(self):
        with pytest.raises(ValueError):
            SamplerConfig(0.1, -1.0)
        with pytest.raises(ValueError):
            SamplerConfig(0.1, 1.0, variant="fancy")


class TestAttenuation:
    def test_unit_exponent(self):
        path = linear_path()
        T = 20.0
        tau = 2 * math.atan(1 / (path.zeta * T * MODEL.mu_I))
        assert attenuation(MODEL, path, SamplerConfig(tau, T)) == pytest.approx(math.exp(-1), rel=1e-14)

    def test_zero_time(self):
        assert attenuation(MODEL, linear_path(), SamplerConfig(0.3, 0.0)) == 1.0

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.01, 1.5), st.floats(0.0, 50.0))
    def test_base_never_exceeds_background(self, tau, T):
        path = quadratic_path()
        base = attenuation(MODEL, path, SamplerConfig(tau, T, "base"))
        bg = attenuation(MODEL, path, SamplerConfig(tau, T, "background"))
        assert 0.0 < base <= bg <= 1.0


class TestSampleAdiabatic:
    def test_deterministic_streams(self):
        cfg = SamplerConfig(0.2, 5.0)
        a = sample_adiabatic(MODEL, linear_path(), cfg, stream(7, 3, 1))
        b = sample_adiabatic(MODEL, linear_path(), cfg, stream(7, 3, 1))
        c = sample_adiabatic(MODEL, linear_path(), cfg, stream(7, 3, 2))
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.indices, b.indices)
        assert a.n_events != c.n_events or not np.array_equal(a.times, c.times)

    @pytest.mark.parametrize("variant", ["background", "base"])
    def test_mean_counts(self, variant):
        cfg = SamplerConfig(0.3, 6.0, variant)
        path = linear_path()
        rng = np.random.default_rng(0)
        n = 4000
        rot = np.empty(n)
        tqg = np.empty(n)
        for k in range(n):
            circ = sample_adiabatic(MODEL, path, cfg, rng)
            rot[k] = circ.n_events
            tqg[k] = circ.two_qubit_count()
        want_rot, want_tqg = expected_gate_counts(MODEL, path, cfg)
        assert abs(rot.mean() - want_rot) < 4 * math.sqrt(want_rot / n)
        assert abs(tqg.mean() - want_tqg) < 4 * tqg.std() / math.sqrt(n)

    def test_times_sorted_and_in_range(self):
        circ = sample_adiabatic(MODEL, quadratic_path(), SamplerConfig(0.1, 10.0, "base"), stream(1))
        assert np.all(np.diff(circ.times) >= 0)
        assert circ.times.min() >= 0 and circ.times.max() <= 10.0

    def test_linear_time_density(self):
        # interaction events have density proportional to w(t/T) = t/T, so (t/T)^2 is uniform
        rng = np.random.default_rng(5)
        T = 3.0
        ts = np.concatenate([sample_adiabatic(MODEL, linear_path(), SamplerConfig(0.2, T), rng).times for _ in range(300)])
        assert kstest((ts / T) ** 2, "uniform").pvalue > 1e-3

    def test_background_segments(self):
        circ = sample_adiabatic(MODEL, linear_path(), SamplerConfig(0.2, 5.0), stream(2))
        assert circ.segment_phases.shape == (circ.n_events + 1, 2)
        assert circ.segment_durations.sum() == pytest.approx(5.0)
        np.testing.assert_allclose(circ.segment_phases.sum(axis=0), 5.0 * circ.background_rates)


class TestSampleConstant:
    def test_unbiased_mean_unitary(self):
        h = PauliSum.from_dict({"XX": 0.3, "ZY": -0.2, "IX": 0.1})
        bg = PauliSum.from_dict({"ZI": 0.5})
        s, tau = 1.5, 0.25
        rng = np.random.default_rng(11)
        n = 6000
        us = np.array([circuit_unitary(sample_constant(h, s, tau, 1, rng, bg)) for _ in range(n)])
        lam = math.exp(-math.tan(tau / 2) * s * h.one_norm())
        target = expm(1j * s * (h + bg).to_dense())
        sigma = np.sqrt(us.real.var(axis=0) + us.imag.var(axis=0)) / math.sqrt(n) / lam
        err = np.abs(us.mean(axis=0) / lam - target)
        assert np.all(err <= 4 * sigma + 1e-12)

    def test_sign_and_attenuation(self):
        h = PauliSum.from_dict({"XX": 0.3})
        circ = sample_constant(h, 2.0, 0.4, -1, stream(0))
        assert circ.attenuation == pytest.approx(math.exp(-math.tan(0.2) * 0.6))
        assert all(s.sign == -1 for s in circ.strings)

    @pytest.mark.parametrize("kwargs", [dict(s=-1.0), dict(sign=0), dict(tau=2.0)])
    def test_errors(self, kwargs):
        args = dict(h=PauliSum.from_dict({"XX": 0.3}), s=1.0, tau=0.2, sign=1, rng=stream(0)) | kwargs
        with pytest.raises(ValueError):
            sample_constant(**args)


@pytest.mark.parametrize("variant", ["background", "base"])
def test_text_round_trip(variant):
    circ = sample_adiabatic(MODEL, linear_path(), SamplerConfig(0.2, 4.0, variant, seed=9), stream(9))
    back = parse_circuit(format_circuit(circ))
    np.testing.assert_array_equal(back.times, circ.times)
    np.testing.assert_array_equal(back.indices, circ.indices)
    assert back.strings == circ.strings
    assert back.attenuation == circ.attenuation
    assert back.seed == 9
    np.testing.assert_allclose(circuit_unitary(back), circuit_unitary(circ), atol=1e-14)
