import numpy as np
import pytest

from flexopf.errors import RankDeficient
from flexopf.network import build_admittance
from flexopf.recovery import recover_voltages
from flexopf.tracemat import stack_voltage


def test_exact_rank_one_recovers_vector(two_bus_model):
    rng = np.random.default_rng(2)
    V = two_bus_model.flat_voltage() * (1 + 0.02 * rng.normal(size=6))
    x = stack_voltage(V)
    W = np.outer(x, x)
    Y = build_admittance(two_bus_model)
    rec = recover_voltages(two_bus_model, W, Y)
    assert rec.lambda2 == pytest.approx(0.0, abs=1e-12)
    assert rec.ratio > 1e12
    assert np.abs(rec.voltages - V).max() < 1e-8
    assert rec.pf_mismatch < 1e-10


def test_identity_matrix_exercises_degenerate_path(two_bus_model):
    # fully degenerate spectrum: the dominant eigenvector is arbitrary and
    # carries no usable slack reference
    Y = build_admittance(two_bus_model)
    with pytest.raises(RankDeficient):
        recover_voltages(two_bus_model, np.eye(12), Y)


def test_flat_spectrum_is_not_rank_one_like(two_bus_model):
    Y = build_admittance(two_bus_model)
    x = stack_voltage(two_bus_model.flat_voltage())
    W = np.eye(12) + 0.5 * np.outer(x, x)
    rec = recover_voltages(two_bus_model, W, Y)
    assert rec.ratio < 10.0
    assert not rec.rank_one_like


def test_zero_matrix_raises(two_bus_model):
    Y = build_admittance(two_bus_model)
    with pytest.raises(RankDeficient):
        recover_voltages(two_bus_model, np.zeros((12, 12)), Y)


def test_solved_fixture_is_tight(art_4bus_det):
    for rec in art_4bus_det.recoveries:
        assert rec.ratio > 1e4
        assert rec.pf_mismatch < 1e-5
        assert rec.rank_one_like


def test_sign_fixed_against_slack(two_bus_model):
    V = two_bus_model.flat_voltage()
    x = stack_voltage(V)
    W = np.outer(-x, -x)     # eigenvector sign is arbitrary
    Y = build_admittance(two_bus_model)
    rec = recover_voltages(two_bus_model, W, Y)
    assert rec.voltages[two_bus_model.slack_indices[0]].real > 0
