import numpy as np
import pytest

from flexopf import _pf_fallback, powerflow
from flexopf.errors import NonConvergence
from flexopf.fixtures import four_bus, two_bus
from flexopf.network import build_admittance


def test_zero_injection_gives_flat_profile(two_bus_model):
    res = powerflow.run_powerflow(two_bus_model, np.zeros(6), np.zeros(6))
    assert res.converged
    assert np.abs(res.voltages - two_bus_model.flat_voltage()).max() < 1e-10


def test_converges_below_tolerance(four_bus_model):
    n = four_bus_model.nbp
    p = np.zeros(n)
    q = np.zeros(n)
    for bus in (2, 3, 4):
        for ph in "abc":
            p[four_bus_model.index(bus, ph)] = -0.1
            q[four_bus_model.index(bus, ph)] = -0.04
    res = powerflow.run_powerflow(four_bus_model, p, q)
    assert res.converged and res.residual < 1e-10
    Y = build_admittance(four_bus_model)
    S = powerflow.injections(Y, res.voltages)
    ns = list(four_bus_model.nonslack_indices)
    assert np.abs(S[ns] - (p[ns] + 1j * q[ns])).max() < 1e-10


def test_kernels_agree(four_bus_model):
    Y = build_admittance(four_bus_model)
    ns = np.asarray(four_bus_model.nonslack_indices, dtype=np.int64)
    slack = np.asarray(four_bus_model.slack_indices, dtype=np.int64)
    rng = np.random.default_rng(0)
    p = np.where(np.isin(np.arange(12), ns), -0.05 * rng.random(12), 0.0)
    q = 0.3 * p
    v0 = four_bus_model.flat_voltage()
    args = (Y, ns, slack, four_bus_model.slack_voltage, p, q, v0, 1e-12, 40)
    v_ref, it_ref, r_ref, ok_ref = _pf_fallback.newton_solve(*args)
    assert ok_ref
    if powerflow.USING_COMPILED_KERNEL:
        from flexopf import _pf_kernel
        v_c, it_c, r_c, ok_c = _pf_kernel.newton_solve(*args)
        assert ok_c and it_c == it_ref
        assert np.abs(v_c - v_ref).max() < 1e-12


def test_batch_matches_sequential(four_bus_model):
    rng = np.random.default_rng(5)
    n = four_bus_model.nbp
    ns = list(four_bus_model.nonslack_indices)
    p = np.zeros((8, n))
    p[:, ns] = -0.08 * rng.random((8, len(ns)))
    q = 0.3 * p
    Vb, iters, resid, ok = powerflow.run_powerflow_batch(four_bus_model, p, q)
    assert ok.all()
    for s in range(8):
        single = powerflow.run_powerflow(four_bus_model, p[s], q[s])
        assert np.abs(Vb[s] - single.voltages).max() < 1e-12


def test_nonconvergence_raises(two_bus_model):
    p = np.zeros(6)
    p[3:] = -30.0  # absurd overload
    with pytest.raises(NonConvergence):
        powerflow.run_powerflow(two_bus_model, p, 0.3 * p)
    res = powerflow.run_powerflow(two_bus_model, p, 0.3 * p, raise_on_failure=False)
    assert not res.converged


def test_warm_start_converges_faster(four_bus_model):
    n = four_bus_model.nbp
    ns = list(four_bus_model.nonslack_indices)
    p = np.zeros(n)
    p[ns] = -0.1
    q = 0.3 * p
    cold = powerflow.run_powerflow(four_bus_model, p, q)
    warm = powerflow.run_powerflow(four_bus_model, p, q, v0=cold.voltages)
    assert warm.iterations <= cold.iterations
    assert np.abs(warm.voltages - cold.voltages).max() < 1e-9
