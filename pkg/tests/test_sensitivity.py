import numpy as np
import pytest

from flexopf.errors import SingularAtOperatingPoint
from flexopf.fixtures import two_bus
from flexopf.network import build_admittance
from flexopf.opf import FlexInfo, nominal_injections
from flexopf.powerflow import run_powerflow
from flexopf.sensitivity import (
    build_jacobians,
    build_response,
    build_response_kernels,
    embed_policy,
    invert_js,
)
from flexopf.tracemat import build_trace_matrices, stack_voltage, trace_value


@pytest.fixture(scope="module")
def two_bus_setup():
    m = two_bus()
    Y = build_admittance(m)
    tm = build_trace_matrices(m, Y)
    rng = np.random.default_rng(12)
    V = m.flat_voltage() * (1 + 0.03 * rng.normal(size=m.nbp))
    x = stack_voltage(V)
    return m, Y, tm, x


def test_zero_point_gives_zero_rows(two_bus_setup):
    m, Y, tm, _ = two_bus_setup
    b = build_jacobians(m, tm, np.zeros(2 * m.nbp))
    assert np.count_nonzero(b.JS) == 0


def test_rows_scale_linearly(two_bus_setup):
    m, Y, tm, x = two_bus_setup
    b1 = build_jacobians(m, tm, x)
    b2 = build_jacobians(m, tm, 2.0 * x)
    assert np.allclose(b2.JS, 2.0 * b1.JS, atol=0)
    for key in b1.JPij:
        assert np.allclose(b2.JPij[key], 2.0 * b1.JPij[key], atol=0)


def test_finite_difference_oracle(two_bus_setup):
    m, Y, tm, x = two_bus_setup
    b = build_jacobians(m, tm, x)
    h = 1e-6
    rng = np.random.default_rng(1)
    for _ in range(5):
        j = rng.integers(0, 2 * m.nbp)
        xp = x.copy(); xp[j] += h
        xm = x.copy(); xm[j] -= h
        for row in rng.integers(0, m.nbp, size=3):
            fd = (trace_value(tm.Yp[row], xp) - trace_value(tm.Yp[row], xm)) / (2 * h)
            ref = b.JP[row, j]
            assert fd == pytest.approx(ref, rel=1e-4, abs=1e-8)
            fd_v = (trace_value(tm.M[row], xp) - trace_value(tm.M[row], xm)) / (2 * h)
            assert fd_v == pytest.approx(b.JV[row, j], rel=1e-4, abs=1e-10)


def test_inverse_is_projector_on_nonslack(two_bus_setup):
    m, Y, tm, x = two_bus_setup
    b = invert_js(m, build_jacobians(m, tm, x))
    n = m.nbp
    ns = np.asarray(m.nonslack_indices)
    keep = np.r_[ns, ns + n]
    rng = np.random.default_rng(7)
    ds = np.zeros(2 * n)
    ds[keep] = rng.normal(size=keep.size)
    dx = b.js_inv @ ds
    back = b.JS @ dx
    assert np.abs(back[keep] - ds[keep]).max() < 1e-8
    assert np.abs(dx[[0, 1, 2, n, n + 1, n + 2]]).max() == 0.0  # slack coordinates pinned


def test_singular_at_zero_point(two_bus_setup):
    m, Y, tm, _ = two_bus_setup
    with pytest.raises(SingularAtOperatingPoint):
        invert_js(m, build_jacobians(m, tm, np.zeros(2 * m.nbp)))


def test_flat_start_phase_permutation_symmetry():
    """Cyclic phase relabel + 120-degree rotation maps the Jacobian onto itself."""
    m = two_bus()
    Y = build_admittance(m)
    tm = build_trace_matrices(m, Y)
    x = stack_voltage(m.flat_voltage())
    b = build_jacobians(m, tm, x)
    n = m.nbp
    perm = np.array([1, 2, 0, 4, 5, 3])        # phase a->b->c->a per bus
    rot = np.exp(-2j * np.pi / 3)
    P = np.zeros((n, n))
    for i, j in enumerate(perm):
        P[j, i] = 1.0
    # complex rotation as a real 2x2 block acting on [Re; Im]
    T = np.zeros((2 * n, 2 * n))
    T[:n, :n] = rot.real * P
    T[:n, n:] = -rot.imag * P
    T[n:, :n] = rot.imag * P
    T[n:, n:] = rot.real * P
    Pinj = np.zeros((2 * n, 2 * n))
    Pinj[:n, :n] = P
    Pinj[n:, n:] = P
    assert np.abs(b.JS @ T - Pinj @ b.JS).max() < 1e-10


def _response_setup(art):
    model = art.model
    unc = art.uncertainty
    flex = FlexInfo.from_model(model)
    rec = art.det_recoveries[0]
    bundle = invert_js(model, build_jacobians(model, art.tm, stack_voltage(rec.voltages)))
    return model, unc, flex, bundle


def test_self_balancing_policy_cancels(art_4bus_risk):
    model, unc, flex, bundle = _response_setup(art_4bus_risk)
    beta = unc.a_xi.copy()      # balance each source exactly at its own bus-phase
    resp = build_response(model, bundle, unc.a_xi, beta, model.psi)
    assert np.abs(resp.K).max() < 1e-12
    assert np.abs(resp.XV).max() < 1e-12


def test_zero_policy_is_pure_disturbance(art_4bus_risk):
    model, unc, flex, bundle = _response_setup(art_4bus_risk)
    resp = build_response(model, bundle, unc.a_xi, np.zeros_like(unc.a_xi), model.psi)
    n = model.nbp
    for k in range(unc.n_sources):
        col = np.flatnonzero(unc.a_xi[:, k])[0]
        expect = -(bundle.js_inv[:, col] + model.psi[col] * bundle.js_inv[:, n + col])
        assert np.abs(resp.K[:, k] - expect).max() < 1e-14


def test_superposition_exact(art_4bus_risk):
    model, unc, flex, bundle = _response_setup(art_4bus_risk)
    rng = np.random.default_rng(3)
    beta = embed_policy(model, flex.bus_phases, rng.random((flex.n_bus_phases, 2)))
    resp = build_response(model, bundle, unc.a_xi, beta, model.psi)
    xi1 = np.array([1e-3, 0.0])
    xi2 = np.array([0.0, -2e-3])
    lhs = resp.XV @ (xi1 + xi2)
    rhs = resp.XV @ xi1 + resp.XV @ xi2
    assert np.abs(lhs - rhs).max() < 1e-15


def test_kernels_match_direct_response(art_4bus_risk):
    model, unc, flex, bundle = _response_setup(art_4bus_risk)
    kern = build_response_kernels(model, bundle, unc.a_xi, model.psi, flex.bus_phases,
                                  [(ln.from_bus, ln.to_bus) for ln in model.lines])
    rng = np.random.default_rng(9)
    bf = rng.random((flex.n_bus_phases, unc.n_sources))
    resp = build_response(model, bundle, unc.a_xi,
                          embed_policy(model, flex.bus_phases, bf), model.psi)
    xv = kern.xv(bf)
    for r, bp in enumerate(kern.v_rows):
        m = model.index(*bp)
        assert np.abs(xv[r] - resp.XV[m]).max() < 1e-12
    xp = kern.xp_sum(bf)
    for li, key in enumerate(kern.lines):
        direct = sum(resp.XP[(key[0], key[1], ph)] for ph in "abc")
        assert np.abs(xp[li] - direct).max() < 1e-12


def test_response_predictions_first_order_accurate(art_4bus_risk):
    """Prediction error halves ~4x when the disturbance halves."""
    art = art_4bus_risk
    model = art.model
    sol = art.solution
    kern = art.kernels[0]
    beta = sol.beta[0]
    xv = kern.const_v + kern.gamma_v @ beta
    rec = art.recoveries[0]
    p0, q0 = nominal_injections(sol, 0)
    # evaluate against a self-consistent nonlinear base so the measured
    # error is pure linearization, not recovery noise
    pf0 = run_powerflow(model, p0, q0, v0=rec.voltages, ybus=art.ybus)
    base_mag2 = np.abs(pf0.voltages) ** 2

    errors = {}
    for scale in (1e-3, 5e-4):
        xi = np.array([scale, -scale]) / np.sqrt(2.0)
        B = np.zeros((model.nbp, 2))
        flex = sol.meta["flex"]
        for f, bp in enumerate(flex.bus_phases):
            B[model.index(*bp)] = beta[f]
        dp = (-art.uncertainty.a_xi + B) @ xi
        dq = model.psi * dp
        pf = run_powerflow(model, p0 + dp, q0 + dq, v0=pf0.voltages, ybus=art.ybus)
        err = 0.0
        dev = 0.0
        for r, bp in enumerate(kern.v_rows):
            m = model.index(*bp)
            pred = base_mag2[m] + float(xv[r] @ xi)
            truth = abs(pf.voltages[m]) ** 2
            err = max(err, abs(pred - truth))
            dev = max(dev, abs(truth - base_mag2[m]))
        errors[scale] = (err, dev)

    err1, dev1 = errors[1e-3]
    err2, dev2 = errors[5e-4]
    assert err1 / max(dev1, 1e-12) < 0.02
    assert 3.0 < err1 / err2 < 5.0
