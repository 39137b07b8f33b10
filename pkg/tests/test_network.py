import json

import numpy as np
import pytest

from flexopf.errors import (
    DanglingBus,
    DuplicateLine,
    InvariantViolation,
    ParseError,
    SchemaViolation,
)
from flexopf.fixtures import data_path, four_bus, ieee34_mod, line_admittance, two_bus
from flexopf.network import (
    Bus,
    FeederModel,
    Line,
    Load,
    build_admittance,
    feeder_to_dict,
    line_flows,
    load_feeder,
    save_feeder,
)


def test_two_bus_ladder_identity():
    m = FeederModel(
        buses=(Bus(1, ("a",)), Bus(2, ("a",))),
        lines=(Line(1, 2, ("a",), line_admittance(0.05, 0.1, "a")),),
        devices=(),
        slack=1,
    )
    y = complex(m.lines[0].y_series[0, 0])
    Y = build_admittance(m)
    assert np.allclose(Y, [[y, -y], [-y, y]])


def test_zero_lines_gives_zero_matrix():
    m = FeederModel(buses=(Bus(1, ("a", "b", "c")),), lines=(), devices=(), slack=1)
    assert np.count_nonzero(build_admittance(m)) == 0


def _stamp_oracle(model):
    """Independent per-branch stamping: accumulate each line block separately."""
    n = model.nbp
    Y = np.zeros((n, n), dtype=complex)
    from flexopf.network import _PHASE_POS
    for ln in model.lines:
        idx = {p: (model.index(ln.from_bus, p), model.index(ln.to_bus, p)) for p in ln.phases}
        for pa in ln.phases:
            for pb in ln.phases:
                y = ln.y_series[_PHASE_POS[pa], _PHASE_POS[pb]]
                ia, ja = idx[pa]
                ib, jb = idx[pb]
                Y[ia, ib] += y
                Y[ja, jb] += y
                Y[ia, jb] -= y
                Y[ja, ib] -= y
    return Y


def test_four_bus_matches_branch_stamping_oracle(four_bus_model):
    Y = build_admittance(four_bus_model)
    assert np.allclose(Y, _stamp_oracle(four_bus_model), atol=0, rtol=0)


def test_admittance_row_sums_vanish(four_bus_model):
    # series-only network: every row of Y sums to zero exactly
    Y = build_admittance(four_bus_model)
    assert np.abs(Y.sum(axis=1)).max() < 1e-14


def test_admittance_symmetric(four_bus_model):
    Y = build_admittance(four_bus_model)
    assert np.abs(Y - Y.T).max() == 0.0


def test_duplicate_line_rejected():
    with pytest.raises(DuplicateLine):
        FeederModel(
            buses=(Bus(1, ("a",)), Bus(2, ("a",))),
            lines=(Line(1, 2, ("a",), line_admittance(0.05, 0.1, "a")),
                   Line(2, 1, ("a",), line_admittance(0.05, 0.1, "a"))),
            devices=(), slack=1)


def test_dangling_bus_rejected():
    with pytest.raises(DanglingBus):
        FeederModel(
            buses=(Bus(1, ("a",)),),
            lines=(Line(1, 9, ("a",), line_admittance(0.05, 0.1, "a")),),
            devices=(), slack=1)


def test_line_phase_must_exist_at_endpoints():
    with pytest.raises(InvariantViolation):
        FeederModel(
            buses=(Bus(1, ("a",)), Bus(2, ("a", "b"))),
            lines=(Line(1, 2, ("a", "b"), line_admittance(0.05, 0.1, "ab")),),
            devices=(), slack=1)


def test_voltage_window_must_be_ordered():
    with pytest.raises(InvariantViolation):
        FeederModel(buses=(Bus(1, ("a",), v_min=1.1, v_max=0.9),), lines=(),
                    devices=(), slack=1)


def test_one_flexible_device_per_bus():
    from flexopf.network import Generator, Storage
    with pytest.raises(InvariantViolation):
        FeederModel(
            buses=(Bus(1, ("a",)), Bus(2, ("a",))),
            lines=(Line(1, 2, ("a",), line_admittance(0.05, 0.1, "a")),),
            devices=(Generator("g", 2, ("a",)), Storage("s", 2, ("a",))),
            slack=1)


def test_load_feeder_ieee34_mod_fleet():
    m = load_feeder(data_path("ieee34_mod.feeder.json"))
    assert len(m.buses) == 34
    assert sorted(d.bus for d in m.storages) == [8, 11, 26]
    assert sorted(d.bus for d in m.generators) == [6, 9, 19]
    assert len(m.renewables) == 4
    assert sorted(d.bus for d in m.renewables) == [8, 21, 26, 32]


def test_empty_device_list_is_valid(tmp_path):
    m = FeederModel(
        buses=(Bus(1, ("a",)), Bus(2, ("a",))),
        lines=(Line(1, 2, ("a",), line_admittance(0.05, 0.1, "a")),),
        devices=(), slack=1)
    path = tmp_path / "empty.feeder.json"
    save_feeder(m, path)
    assert load_feeder(path).devices == ()


def test_missing_slack_is_schema_violation(tmp_path):
    doc = feeder_to_dict(two_bus())
    del doc["slack"]
    path = tmp_path / "noslack.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaViolation) as err:
        load_feeder(path)
    assert err.value.field == "slack"


def test_parse_error_carries_location(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"base": {"mva": 1.0,\n  broken')
    with pytest.raises(ParseError) as err:
        load_feeder(path)
    assert err.value.line is not None


def test_save_load_save_round_trip(tmp_path):
    m = ieee34_mod()
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    save_feeder(m, p1)
    save_feeder(load_feeder(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_line_flows_direction_swap(two_bus_model):
    rng = np.random.default_rng(4)
    V = two_bus_model.flat_voltage() * (1 + 0.03 * rng.normal(size=6))
    fl = line_flows(two_bus_model, V)
    # sending-end flows of both directions sum to the line loss (positive real part)
    loss = sum((fl[(1, 2, p)] + fl[(2, 1, p)]).real for p in "abc")
    assert loss > 0
