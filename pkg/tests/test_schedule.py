from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from tetris_asp.chem import split
from tetris_asp.pauli import PauliSum
from tetris_asp.schedule import (
    HamiltonianSchedule,
    linear_path,
    load_tabulated_path,
    path_from_spec,
    quadratic_path,
    snapshot_path,
    tabulated_path,
)

PATHS = [linear_path(), quadratic_path(), tabulated_path([0, 0.3, 0.7, 1], [0, 0.2, 0.8, 1])]


def model(coeffs):
    return split(PauliSum.from_dict(coeffs))


class TestZ:
    def test_zeta_values(self):
        assert linear_path().z(1.0) == 0.5
        assert quadratic_path().z(1.0) == pytest.approx(7 / 15, abs=1e-15)

    @pytest.mark.parametrize("path", PATHS, ids=lambda p: p.kind)
    def test_origin(self, path):
        assert path.z(0.0) == 0.0
        assert path.z_inverse(0.0) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("path", PATHS, ids=lambda p: p.kind)
    def test_zeta_by_quadrature(self, path):
        val, _ = quad(path.weight, 0, 1, epsabs=1e-13)
        assert path.zeta == pytest.approx(val, abs=1e-10)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            linear_path().z(1.5)
        with pytest.raises(ValueError):
            linear_path().z_inverse(0.6)


class TestInverse:
    def test_linear_midpoint(self):
        assert linear_path().z_inverse(0.25) == pytest.approx(1 / math.sqrt(2), abs=1e-15)

    def test_quadratic_endpoint(self):
        assert quadratic_path().z_inverse(7 / 15) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("path", PATHS, ids=lambda p: p.kind)
    def test_round_trip(self, path):
        v = np.linspace(0, path.zeta, 101)
        np.testing.assert_allclose(path.z(path.z_inverse(v)), v, atol=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from(range(len(PATHS))), st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, k, a, b):
        path = PATHS[k]
        lo, hi = sorted((a * path.zeta, b * path.zeta))
        if hi - lo > 1e-9:
            assert path.z_inverse(lo) < path.z_inverse(hi)


class TestTabulated:
    def test_matches_linear(self):
        p = tabulated_path(np.linspace(0, 1, 11), np.linspace(0, 1, 11))
        assert p.zeta == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize(
        "u,w",
        [([0, 1], [0, 0.5]), ([0, 0.5, 0.4, 1], [0, 0.5, 0.6, 1]), ([0, 0.5, 1], [0, -0.1, 1]), ([0.1, 1], [0, 1])],
    )
    def test_rejects_bad_tables(self, u, w):
        with pytest.raises(ValueError):
            tabulated_path(u, w)

    def test_load_and_spec(self, tmp_path):
        f = tmp_path / "w.txt"
        f.write_text("# u w\n0 0\n0.5 0.25\n1 1\n")
        p = load_tabulated_path(f)
        assert p.kind == "custom_tabulated"
        assert path_from_spec(f"file:{f}").zeta == pytest.approx(p.zeta)
        assert path_from_spec("linear").kind == "linear"
        assert path_from_spec("snapshots:anything").kind == "snapshot_interpolation"
        with pytest.raises(ValueError):
            path_from_spec("cubic")


class TestSchedule:
    def test_weight_path_endpoints(self):
        m = model({"ZI": 0.3, "XX": 0.2, "II": -1.0})
        sched = HamiltonianSchedule(m, linear_path(), 5.0)
        assert sched.hamiltonian_at(0.0).to_dict() == {"ZI": 0.3}
        assert sched.hamiltonian_at(1.0).to_dict() == pytest.approx({"ZI": 0.3, "XX": 0.2})
        assert sched.hamiltonian_at(1.0, include_constant=True).to_dict() == pytest.approx(m.full().to_dict())

    def test_snapshot_midpoint(self):
        a = model({"ZI": 0.2, "XX": 0.4, "II": -1.0})
        b = model({"ZI": 0.6, "YY": 0.2, "II": -2.0})
        sched = HamiltonianSchedule(b, snapshot_path(), 3.0, (a, b))
        mid = sched.hamiltonian_at(0.5, include_constant=True).to_dict()
        assert mid == pytest.approx({"ZI": 0.4, "XX": 0.2, "YY": 0.1, "II": -1.5})

    def test_snapshot_validation(self):
        a = model({"ZI": 0.2})
        b = model({"ZII": 0.2})
        with pytest.raises(ValueError, match="inconsistent"):
            HamiltonianSchedule(a, snapshot_path(), 1.0, (a, b))
        with pytest.raises(ValueError):
            HamiltonianSchedule(a, snapshot_path(), 1.0, (a,))

    def test_negative_time(self):
        with pytest.raises(ValueError):
            HamiltonianSchedule(model({"Z": 1.0}), linear_path(), -1.0)
