import math

import numpy as np
import pytest

import sbm

SMALL = {"grid": {"half_width": 3, "dx": 0.1}, "time": {"dt": 0.005, "horizon": 0.1, "output_every": 5}}


def test_kernels():
    assert sbm.heat_kernel(1.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))
    c = 2 ** 0.25 * math.gamma(0.75) / math.sqrt(math.pi)
    assert sbm.g_m_coefficient(64, 0.0) == pytest.approx(c * 64 ** -0.25, rel=0.01)
    value, d1, d2 = sbm.h_k(8, 0.5)
    assert 0.0 <= value <= 1.0
    with pytest.raises(sbm.DomainError):
        sbm.g_m_coefficient(0, 1.0)


def test_validate_reports_paths():
    assert sbm.validate(SMALL) == []
    bad = {"grid": {"dx": 0.1}, "time": {"dt": 0.0102}}
    paths = [p for p, _ in sbm.validate(bad)]
    assert "time.dt" in paths


def test_simulate_shapes_and_determinism():
    t, x, f = sbm.simulate(SMALL, seed=5)
    assert f.shape == (len(t), len(x))
    assert (f >= 0).all()
    _, _, g = sbm.simulate(SMALL, seed=5)
    assert np.array_equal(f, g)


def test_simulate_u_is_monotone():
    cfg = dict(SMALL, branching={"partition": [0.0], "rates": [{"name": "constant", "params": [1]}, {"name": "reciprocal", "params": [1]}]})
    t, parts = sbm.simulate_u(cfg, seed=2)
    assert len(parts) == 2
    for x, u in parts:
        assert u.shape == (len(t), len(x))
        assert (np.diff(u, axis=1) >= -1e-10).all()


def test_total_mass_and_cli(tmp_path):
    t, z = sbm.simulate_total_mass(1.0, 1.0, 0.5, 1e-3, seed=3)
    assert z[0] == 1.0 and (z >= 0).all()
    status, _, err = sbm.run_cli("frobnicate")
    assert status == 2 and err
    status, _, _ = sbm.run_cli("appendix", "hk", "--f", "linear", "--out", tmp_path / "hk")
    assert status == 0
    assert (tmp_path / "hk" / "manifest.json").exists()
