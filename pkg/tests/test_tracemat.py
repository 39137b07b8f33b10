import numpy as np
import pytest

from flexopf.errors import DimensionMismatch
from flexopf.fixtures import four_bus, ieee34_reduced, two_bus
from flexopf.network import build_admittance, line_flows
from flexopf.tracemat import build_trace_matrices, stack_voltage, trace_value


def _random_voltages(model, rng, scale=0.08):
    base = model.flat_voltage()
    return base + scale * (rng.normal(size=model.nbp) + 1j * rng.normal(size=model.nbp))


@pytest.mark.parametrize("make_model", [two_bus, four_bus, ieee34_reduced])
def test_trace_forms_match_complex_arithmetic(make_model):
    model = make_model()
    Y = build_admittance(model)
    tm = build_trace_matrices(model, Y)
    rng = np.random.default_rng(17)
    for _ in range(50):
        V = _random_voltages(model, rng)
        x = stack_voltage(V)
        S = V * np.conj(Y @ V)
        scale = max(np.abs(S).max(), 1.0)
        for m in range(model.nbp):
            assert abs(trace_value(tm.Yp[m], x) - S[m].real) < 1e-10 * scale
            assert abs(trace_value(tm.Yq[m], x) - S[m].imag) < 1e-10 * scale
            v2 = abs(V[m]) ** 2
            assert abs(trace_value(tm.M[m], x) - v2) < 1e-10 * max(v2, 1.0)
        flows = line_flows(model, V)
        fscale = max(max(abs(v) for v in flows.values()), 1.0)
        for key, s in flows.items():
            assert abs(trace_value(tm.PhiP[key], x) - s.real) < 1e-10 * fscale
            assert abs(trace_value(tm.PhiQ[key], x) - s.imag) < 1e-10 * fscale


def test_flat_profile_has_no_injections(two_bus_model):
    Y = build_admittance(two_bus_model)
    tm = build_trace_matrices(two_bus_model, Y)
    x = stack_voltage(two_bus_model.flat_voltage())
    for m in range(two_bus_model.nbp):
        assert abs(trace_value(tm.Yp[m], x)) < 1e-12
        assert abs(trace_value(tm.Yq[m], x)) < 1e-12


def test_magnitude_matrix_definition(two_bus_model):
    tm = build_trace_matrices(two_bus_model, build_admittance(two_bus_model))
    rng = np.random.default_rng(3)
    x = rng.normal(size=2 * two_bus_model.nbp)
    n = two_bus_model.nbp
    for m in range(n):
        assert trace_value(tm.M[m], x) == pytest.approx(x[m] ** 2 + x[m + n] ** 2)
        diag = np.diag(tm.M[m])
        assert np.count_nonzero(diag) == 2
        assert np.count_nonzero(tm.M[m]) == 2


def test_matrices_are_exactly_symmetric(four_bus_model):
    tm = build_trace_matrices(four_bus_model, build_admittance(four_bus_model))
    for m in range(four_bus_model.nbp):
        assert np.abs(tm.Yp[m] - tm.Yp[m].T).max() == 0.0
        assert np.abs(tm.Yq[m] - tm.Yq[m].T).max() == 0.0
        assert np.abs(tm.M[m] - tm.M[m].T).max() == 0.0
    for mat in tm.PhiP.values():
        assert np.abs(mat - mat.T).max() == 0.0
    for mat in tm.PhiQ.values():
        assert np.abs(mat - mat.T).max() == 0.0


def test_conservation_injections_equal_flows(four_bus_model):
    """Total complex injection equals the sum of sending-end flows."""
    model = four_bus_model
    Y = build_admittance(model)
    tm = build_trace_matrices(model, Y)
    rng = np.random.default_rng(8)
    V = _random_voltages(model, rng)
    x = stack_voltage(V)
    total_inj = sum(trace_value(tm.Yp[m], x) + 1j * trace_value(tm.Yq[m], x)
                    for m in range(model.nbp))
    total_flow = sum(trace_value(tm.PhiP[k], x) + 1j * trace_value(tm.PhiQ[k], x)
                     for k in tm.PhiP)
    assert abs(total_inj - total_flow) < 1e-10


def test_dimension_mismatch_rejected(two_bus_model):
    with pytest.raises(DimensionMismatch):
        build_trace_matrices(two_bus_model, np.zeros((3, 3), dtype=complex))
