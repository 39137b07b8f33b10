"""Multi-period SDP-relaxed three-phase ACOPF assembly and solution extraction.

The deterministic core builds, per period: the PSD voltage-product block,
trace-form injection balances, magnitude and per-bus phase-spread limits,
apparent-power relaxations per line, and the device blocks (dispatch,
ramping, state of charge, reserve headroom). Risk extensions (participation
factors and chance-constraint reformulations) bolt onto the same program via
:mod:`flexopf.drcc`.

Substation reference: fixing the slack voltages pins a rank-one principal
block of the voltage-product matrix, which would leave the PSD cone with no
strictly feasible point and stall interior-point solvers. The assembly
therefore performs the facial reduction explicitly: the decision block is
[[1, g^T], [g, Wr]] over the non-slack coordinates with the slack block and
cross terms substituted analytically. This keeps Slater's condition, removes
the reference-rotation symmetry exactly, and shrinks the PSD block.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import cvxpy as cp
import numpy as np

from .errors import InfeasibleBoundsDetectedAtAssembly, MissingForecast
from .network import FeederModel, Generator, Storage
from .program import ConicProgram, ConstraintTag, ConicSolverInterface, SolveResult, solve_program
from .scenario import Scenario
from .tracemat import TraceMatrixSet


@dataclass(frozen=True)
class FlexInfo:
    """Flexible fleet view: one generator or storage per bus."""

    devices: tuple
    buses: tuple[int, ...]
    bus_phases: tuple[tuple[int, str], ...]

    @classmethod
    def from_model(cls, model: FeederModel) -> "FlexInfo":
        devs = sorted(
            [d for d in model.devices if isinstance(d, (Generator, Storage))],
            key=lambda d: d.bus)
        bps = [(d.bus, p) for d in devs for p in d.phases]
        bps.sort(key=lambda bp: model.index(*bp))
        return cls(devices=tuple(devs), buses=tuple(d.bus for d in devs),
                   bus_phases=tuple(bps))

    @property
    def n_bus_phases(self) -> int:
        return len(self.bus_phases)


def _forecast(series: dict, bus: int, phase: str, horizon: int, kind: str) -> np.ndarray:
    try:
        return series[(bus, phase)]
    except KeyError:
        raise MissingForecast(bus, phase, kind) from None


class FacialReduction:
    """Maps full-space trace coefficients onto the reduced PSD block.

    With slack coordinates s, non-slack coordinates r, and pinned slack
    vector x_s, every feasible W factors as
    [[x_s x_s^T, x_s g^T], [g x_s^T, Wr]] with [[1, g^T], [g, Wr]] PSD; any
    Tr{A W} becomes Tr{A~ What} for the reduced symmetric A~ built here.
    """

    def __init__(self, model: FeederModel):
        n = model.nbp
        self.n = n
        self.s = np.array(list(model.slack_indices) + [i + n for i in model.slack_indices])
        ns = np.asarray(model.nonslack_indices)
        self.r = np.concatenate([ns, ns + n]) if ns.size else np.array([], dtype=int)
        vs = model.slack_voltage
        self.xs = np.concatenate([vs.real, vs.imag])
        self.dim = 1 + self.r.size

    def reduce(self, A: np.ndarray) -> np.ndarray:
        out = np.empty((self.dim, self.dim))
        out[0, 0] = self.xs @ A[np.ix_(self.s, self.s)] @ self.xs
        cross = self.xs @ A[np.ix_(self.s, self.r)]
        out[0, 1:] = cross
        out[1:, 0] = cross
        out[1:, 1:] = A[np.ix_(self.r, self.r)]
        return out

    def expand(self, what: np.ndarray) -> np.ndarray:
        """Reduced block value -> full (2n, 2n) voltage-product matrix."""
        n2 = 2 * self.n
        W = np.empty((n2, n2))
        g = what[1:, 0]
        W[np.ix_(self.s, self.s)] = np.outer(self.xs, self.xs)
        W[np.ix_(self.s, self.r)] = np.outer(self.xs, g)
        W[np.ix_(self.r, self.s)] = np.outer(g, self.xs)
        W[np.ix_(self.r, self.r)] = what[1:, 1:]
        return W


def assemble_deterministic(model: FeederModel, tm: TraceMatrixSet,
                           scenario: Scenario) -> ConicProgram:
    """Build the deterministic multi-period clearing program."""
    T = scenario.horizon
    n = model.nbp
    dt = scenario.dt_hours
    sb = model.s_base_mva
    qpf = scenario.tariff.q_price_factor

    for b in model.buses:
        if b.v_min >= b.v_max:
            raise InfeasibleBoundsDetectedAtAssembly(f"bus {b.id}: v_min >= v_max")

    prog = ConicProgram()
    flex = FlexInfo.from_model(model)
    fr = FacialReduction(model)

    W = [cp.Variable((fr.dim, fr.dim), symmetric=True, name=f"W_{t}") for t in range(T)]
    P0 = cp.Variable(T, name="P0")
    Q0 = cp.Variable(T, name="Q0")
    prog.vars.update({"W": W, "P0": P0, "Q0": Q0})
    prog.meta.update({"model": model, "tm": tm, "scenario": scenario, "flex": flex,
                      "freduction": fr})

    def tr(A: np.ndarray, t: int):
        return cp.trace(cp.Constant(fr.reduce(A)) @ W[t])

    prog.meta["trace_expr"] = tr

    # demand-side forecasts resolved up front so missing series fail fast
    load_p: dict[tuple[int, str], np.ndarray] = {}
    load_q: dict[tuple[int, str], np.ndarray] = {}
    for ld in model.loads:
        for p in ld.phases:
            series = _forecast(scenario.load_p, ld.bus, p, T, "load")
            load_p[(ld.bus, p)] = series
            load_q[(ld.bus, p)] = series * ld.q_factor
    renew_p: dict[tuple[int, str], np.ndarray] = {}
    for rw in model.renewables:
        for p in rw.phases:
            renew_p[(rw.bus, p)] = _forecast(scenario.renewable_p, rw.bus, p, T, "renewable")

    # per-device variables
    gen_vars: dict[int, dict] = {}
    ess_vars: dict[int, dict] = {}
    for dev in flex.devices:
        nph = len(dev.phases)
        if isinstance(dev, Generator):
            gen_vars[dev.bus] = {
                "p": cp.Variable(T, name=f"pg_{dev.bus}"),
                "q": cp.Variable(T, name=f"qg_{dev.bus}"),
                "p_ph": cp.Variable((nph, T), name=f"pg_ph_{dev.bus}"),
                "q_ph": cp.Variable((nph, T), name=f"qg_ph_{dev.bus}"),
            }
        else:
            ess_vars[dev.bus] = {
                "ch": cp.Variable(T, name=f"ch_{dev.bus}"),
                "dis": cp.Variable(T, name=f"dis_{dev.bus}"),
                "ch_ph": cp.Variable((nph, T), name=f"ch_ph_{dev.bus}"),
                "dis_ph": cp.Variable((nph, T), name=f"dis_ph_{dev.bus}"),
                "q": cp.Variable(T, name=f"qs_{dev.bus}"),
                "q_ph": cp.Variable((nph, T), name=f"qs_ph_{dev.bus}"),
                "soc": cp.Variable(T, name=f"soc_{dev.bus}"),
                "thr": cp.Variable(T, name=f"thr_{dev.bus}"),  # epigraph of |ch - dis|
            }
    rup = {bus: cp.Variable(T, name=f"Rup_{bus}") for bus in flex.buses}
    rdn = {bus: cp.Variable(T, name=f"Rdn_{bus}") for bus in flex.buses}
    prog.vars.update({"gen": gen_vars, "ess": ess_vars, "Rup": rup, "Rdn": rdn})

    cap_lines = [ln for ln in model.lines if np.isfinite(ln.s_max)]
    shat = {(ln.from_bus, ln.to_bus): cp.Variable(T, name=f"shat_{ln.from_bus}_{ln.to_bus}")
            for ln in cap_lines}
    prog.vars["shat"] = shat

    slack_bus = model.bus_by_id[model.slack]
    if not (slack_bus.v_min <= 1.0 <= slack_bus.v_max):
        raise InfeasibleBoundsDetectedAtAssembly(
            "substation reference 1 pu lies outside the slack voltage window")

    flow_p_expr: dict[tuple[int, int, str], list] = {}
    flow_q_expr: dict[tuple[int, int, str], list] = {}
    prog.meta["flow_p_expr"] = flow_p_expr
    prog.meta["flow_q_expr"] = flow_q_expr

    for t in range(T):
        Wt = W[t]
        prog.add(Wt >> 0, ConstraintTag("psd", period=t))
        prog.add(Wt[0, 0] == 1.0, ConstraintTag("homog", period=t))

        # injection balances, trace form
        for m, (bus, ph) in enumerate(model.bus_phases):
            if bus == model.slack:
                continue
            p_terms, q_terms = [], []
            if bus in gen_vars:
                dev = next(d for d in flex.devices if d.bus == bus)
                if ph in dev.phases:
                    k = dev.phases.index(ph)
                    p_terms.append(gen_vars[bus]["p_ph"][k, t])
                    q_terms.append(gen_vars[bus]["q_ph"][k, t])
            if bus in ess_vars:
                dev = next(d for d in flex.devices if d.bus == bus)
                if ph in dev.phases:
                    k = dev.phases.index(ph)
                    p_terms.append(ess_vars[bus]["dis_ph"][k, t] - ess_vars[bus]["ch_ph"][k, t])
                    q_terms.append(ess_vars[bus]["q_ph"][k, t])
            p_rhs = sum(p_terms) + (renew_p.get((bus, ph), np.zeros(T))[t]
                                    - load_p.get((bus, ph), np.zeros(T))[t])
            q_rhs = sum(q_terms) - load_q.get((bus, ph), np.zeros(T))[t]
            prog.add(tr(tm.Yp[m], t) == p_rhs,
                     ConstraintTag("inj_p", period=t, bus=bus, phase=ph))
            prog.add(tr(tm.Yq[m], t) == q_rhs,
                     ConstraintTag("inj_q", period=t, bus=bus, phase=ph))

        # substation exchange
        slack_p = sum(tr(tm.Yp[model.index(model.slack, p)], t)
                      for p in model.bus_by_id[model.slack].phases)
        slack_q = sum(tr(tm.Yq[model.index(model.slack, p)], t)
                      for p in model.bus_by_id[model.slack].phases)
        prog.add(slack_p == P0[t], ConstraintTag("sub_p", period=t))
        prog.add(slack_q == Q0[t], ConstraintTag("sub_q", period=t))

        # voltage magnitude windows and per-bus phase spread; the pinned
        # substation block satisfies both trivially and is skipped
        for m, (bus, ph) in enumerate(model.bus_phases):
            if bus == model.slack:
                continue
            b = model.bus_by_id[bus]
            vexpr = tr(tm.M[m], t)
            prog.add(vexpr >= b.v_min ** 2, ConstraintTag("v_lo", period=t, bus=bus, phase=ph))
            prog.add(vexpr <= b.v_max ** 2, ConstraintTag("v_hi", period=t, bus=bus, phase=ph))
        for b in model.buses:
            if b.id == model.slack or len(b.phases) < 2 or not np.isfinite(b.vdi_limit):
                continue
            for pa, pb in permutations(b.phases, 2):
                ma, mb = model.index(b.id, pa), model.index(b.id, pb)
                prog.add(tr(tm.M[ma] - tm.M[mb], t) <= b.vdi_limit,
                         ConstraintTag("vdi", period=t, bus=b.id, pair=(pa, pb)))

        # line flows and apparent-power relaxation
        for ln in model.lines:
            key = (ln.from_bus, ln.to_bus)
            p_ph = {ph: tr(tm.PhiP[(ln.from_bus, ln.to_bus, ph)], t) for ph in ln.phases}
            q_ph = {ph: tr(tm.PhiQ[(ln.from_bus, ln.to_bus, ph)], t) for ph in ln.phases}
            for ph in ln.phases:
                flow_p_expr.setdefault((*key, ph), []).append(p_ph[ph])
                flow_q_expr.setdefault((*key, ph), []).append(q_ph[ph])
            if key in shat:
                ptot = cp.sum(cp.hstack(list(p_ph.values())))
                qtot = cp.sum(cp.hstack(list(q_ph.values())))
                prog.add(cp.sum_squares(cp.hstack([ptot, qtot])) <= shat[key][t],
                         ConstraintTag("shat_cone", period=t, line=key))
                prog.add(shat[key][t] >= 0.0, ConstraintTag("shat_lb", period=t, line=key))
                prog.add(shat[key][t] <= ln.s_max ** 2, ConstraintTag("shat_ub", period=t, line=key))

    # device blocks
    for dev in flex.devices:
        bus = dev.bus
        if isinstance(dev, Generator):
            g = gen_vars[bus]
            prog.add(g["p"] >= dev.g_min + rdn[bus],
                     [ConstraintTag("gen_lo", period=t, bus=bus) for t in range(T)])
            prog.add(g["p"] <= dev.g_max - rup[bus],
                     [ConstraintTag("gen_hi", period=t, bus=bus) for t in range(T)])
            if T > 1:
                diff = g["p"][1:] - g["p"][:-1]
                prog.add(diff <= dev.ramp_up * dt,
                         [ConstraintTag("gen_ramp_up", period=t, bus=bus) for t in range(1, T)])
                prog.add(diff >= -dev.ramp_down * dt,
                         [ConstraintTag("gen_ramp_dn", period=t, bus=bus) for t in range(1, T)])
            prog.add(rup[bus] <= dev.ramp_up * dt,
                     [ConstraintTag("res_up_cap", period=t, bus=bus) for t in range(T)])
            prog.add(rdn[bus] <= dev.ramp_down * dt,
                     [ConstraintTag("res_dn_cap", period=t, bus=bus) for t in range(T)])
            prog.add(g["q"] >= dev.pf_min * g["p"],
                     [ConstraintTag("gen_pf_lo", period=t, bus=bus) for t in range(T)])
            prog.add(g["q"] <= dev.pf_max * g["p"],
                     [ConstraintTag("gen_pf_hi", period=t, bus=bus) for t in range(T)])
            prog.add(cp.sum(g["p_ph"], axis=0) == g["p"],
                     [ConstraintTag("gen_sum_p", period=t, bus=bus) for t in range(T)])
            prog.add(cp.sum(g["q_ph"], axis=0) == g["q"],
                     [ConstraintTag("gen_sum_q", period=t, bus=bus) for t in range(T)])
            prog.add(cp.vec(g["p_ph"], order="C") >= 0.0,
                     [ConstraintTag("gen_ph_lb", period=t, bus=bus, phase=ph)
                      for ph in dev.phases for t in range(T)])
            pg_mw = g["p"] * sb
            prog.add_objective(dt * (dev.cost_a1 * cp.sum(pg_mw)
                                     + dev.cost_a2 * cp.sum_squares(pg_mw)))
        else:
            e = ess_vars[bus]
            prog.add(e["ch"] >= 0.0, [ConstraintTag("ess_ch_lb", period=t, bus=bus) for t in range(T)])
            prog.add(e["dis"] >= 0.0, [ConstraintTag("ess_dis_lb", period=t, bus=bus) for t in range(T)])
            prog.add(cp.vec(e["ch_ph"], order="C") >= 0.0,
                     [ConstraintTag("ess_ch_ph_lb", period=t, bus=bus, phase=ph)
                      for ph in dev.phases for t in range(T)])
            prog.add(cp.vec(e["dis_ph"], order="C") >= 0.0,
                     [ConstraintTag("ess_dis_ph_lb", period=t, bus=bus, phase=ph)
                      for ph in dev.phases for t in range(T)])
            prog.add(cp.sum(e["ch_ph"], axis=0) == e["ch"],
                     [ConstraintTag("ess_sum_ch", period=t, bus=bus) for t in range(T)])
            prog.add(cp.sum(e["dis_ph"], axis=0) == e["dis"],
                     [ConstraintTag("ess_sum_dis", period=t, bus=bus) for t in range(T)])
            prog.add(cp.sum(e["q_ph"], axis=0) == e["q"],
                     [ConstraintTag("ess_sum_q", period=t, bus=bus) for t in range(T)])
            soc_prev = cp.hstack([dev.soc_init, e["soc"][:-1]]) if T > 1 else dev.soc_init
            prog.add(e["soc"] - soc_prev == (e["ch"] * dev.efficiency - e["dis"] / dev.efficiency) * dt,
                     [ConstraintTag("ess_soc", period=t, bus=bus) for t in range(T)])
            prog.add(e["soc"] >= 0.0, [ConstraintTag("ess_soc_lb", period=t, bus=bus) for t in range(T)])
            prog.add(e["soc"] <= dev.soc_max,
                     [ConstraintTag("ess_soc_ub", period=t, bus=bus) for t in range(T)])
            prog.add(e["ch"] + rdn[bus] <= dev.ch_max,
                     [ConstraintTag("ess_ch_cap", period=t, bus=bus) for t in range(T)])
            prog.add(e["dis"] + rup[bus] <= dev.dis_max,
                     [ConstraintTag("ess_dis_cap", period=t, bus=bus) for t in range(T)])
            for t in range(T):
                prog.add(cp.sum_squares(cp.hstack([e["dis"][t] - e["ch"][t], e["q"][t]]))
                         <= dev.dis_max ** 2,
                         ConstraintTag("ess_cone", period=t, bus=bus))
            prog.add(e["thr"] >= e["ch"] - e["dis"],
                     [ConstraintTag("ess_thr_pos", period=t, bus=bus) for t in range(T)])
            prog.add(e["thr"] >= e["dis"] - e["ch"],
                     [ConstraintTag("ess_thr_neg", period=t, bus=bus) for t in range(T)])
            prog.add_objective(dt * dev.cost_b1 * sb * cp.sum(e["thr"]) + T * dt * dev.cost_b0)

        prog.add(rup[bus] >= 0.0, [ConstraintTag("res_up_lb", period=t, bus=bus) for t in range(T)])
        prog.add(rdn[bus] >= 0.0, [ConstraintTag("res_dn_lb", period=t, bus=bus) for t in range(T)])
        prog.add_objective(dt * sb * (dev.reserve_up_price * cp.sum(rup[bus])
                                      + dev.reserve_dn_price * cp.sum(rdn[bus])))

    tou = np.asarray(scenario.tariff.tou)
    prog.add_objective(dt * sb * (tou @ P0 + qpf * (tou @ cp.abs(Q0))))
    return prog


@dataclass
class ClearingSolution:
    """Primal dispatch plus the complete dual bundle keyed by constraint identity."""

    status: str
    objective: float
    W: list[np.ndarray]
    P0: np.ndarray
    Q0: np.ndarray
    gen_p: dict[int, np.ndarray]
    gen_q: dict[int, np.ndarray]
    ess_ch: dict[int, np.ndarray]
    ess_dis: dict[int, np.ndarray]
    ess_q: dict[int, np.ndarray]
    ess_soc: dict[int, np.ndarray]
    reserve_up: dict[int, np.ndarray]
    reserve_dn: dict[int, np.ndarray]
    flows_p: dict[tuple[int, int, str], np.ndarray]
    flows_q: dict[tuple[int, int, str], np.ndarray]
    shat: dict[tuple[int, int], np.ndarray]
    beta: np.ndarray | None          # (T, F, M)
    t_caps: dict[tuple[int, int], dict[str, np.ndarray]]
    duals: dict[ConstraintTag, float]
    matrix_duals: dict
    solver_name: str
    meta: dict

    @property
    def horizon(self) -> int:
        return self.P0.size

    def total_reserve(self) -> float:
        return float(sum(arr.sum() for arr in self.reserve_up.values())
                     + sum(arr.sum() for arr in self.reserve_dn.values()))


def solve(prog: ConicProgram, solver: ConicSolverInterface | None = None,
          tol: float = 1e-9) -> ClearingSolution:
    """Solve the program and extract the clearing solution.

    Raises SolverFailure (Infeasible/Unbounded/NumericalLimit statuses are
    reported in the exception) only on solver errors; non-optimal statuses
    come back in ``status`` so callers can map them to exit codes.
    """
    result = solve_program(prog, solver=solver, tol=tol)
    return extract_solution(prog, result)


def extract_solution(prog: ConicProgram, result: SolveResult) -> ClearingSolution:
    T = prog.meta["scenario"].horizon
    model: FeederModel = prog.meta["model"]
    empty = ClearingSolution(
        status=result.status, objective=result.objective,
        W=[], P0=np.array([]), Q0=np.array([]),
        gen_p={}, gen_q={}, ess_ch={}, ess_dis={}, ess_q={}, ess_soc={},
        reserve_up={}, reserve_dn={}, flows_p={}, flows_q={}, shat={},
        beta=None, t_caps={}, duals=result.duals, matrix_duals=result.matrix_duals,
        solver_name=result.solver_name, meta=prog.meta)
    if not result.optimal:
        return empty

    v = prog.vars
    flows_p = {key: np.array([float(e.value) for e in exprs])
               for key, exprs in prog.meta["flow_p_expr"].items()}
    flows_q = {key: np.array([float(e.value) for e in exprs])
               for key, exprs in prog.meta["flow_q_expr"].items()}

    beta = None
    if "beta" in v:
        flex = prog.meta["flex"]
        if v["beta"] is None:
            n_src = len(prog.meta["unc"].sources) if "unc" in prog.meta else 0
            beta = np.zeros((T, flex.n_bus_phases, n_src))
        else:
            beta = np.stack([np.asarray(v["beta"][t].value) for t in range(T)])
            beta = np.clip(beta, 0.0, None)

    # per-phase device dispatch, needed by the validation power flow
    prog.meta["gen_p_ph"] = {b: np.asarray(g["p_ph"].value) for b, g in v["gen"].items()}
    prog.meta["gen_q_ph"] = {b: np.asarray(g["q_ph"].value) for b, g in v["gen"].items()}
    prog.meta["ess_ch_ph"] = {b: np.asarray(e["ch_ph"].value) for b, e in v["ess"].items()}
    prog.meta["ess_dis_ph"] = {b: np.asarray(e["dis_ph"].value) for b, e in v["ess"].items()}
    prog.meta["ess_q_ph"] = {b: np.asarray(e["q_ph"].value) for b, e in v["ess"].items()}

    t_caps = {}
    if "t_p" in v:
        t_caps = {key: {"p": np.asarray(v["t_p"][key].value).reshape(T),
                        "q": np.asarray(v["t_q"][key].value).reshape(T)}
                  for key in v["t_p"]}

    fr: FacialReduction = prog.meta["freduction"]
    return ClearingSolution(
        status=result.status,
        objective=result.objective,
        W=[fr.expand(np.asarray(w.value)) for w in v["W"]],
        P0=np.asarray(v["P0"].value).reshape(T),
        Q0=np.asarray(v["Q0"].value).reshape(T),
        gen_p={b: np.asarray(g["p"].value).reshape(T) for b, g in v["gen"].items()},
        gen_q={b: np.asarray(g["q"].value).reshape(T) for b, g in v["gen"].items()},
        ess_ch={b: np.asarray(e["ch"].value).reshape(T) for b, e in v["ess"].items()},
        ess_dis={b: np.asarray(e["dis"].value).reshape(T) for b, e in v["ess"].items()},
        ess_q={b: np.asarray(e["q"].value).reshape(T) for b, e in v["ess"].items()},
        ess_soc={b: np.asarray(e["soc"].value).reshape(T) for b, e in v["ess"].items()},
        reserve_up={b: np.asarray(r.value).reshape(T) for b, r in v["Rup"].items()},
        reserve_dn={b: np.asarray(r.value).reshape(T) for b, r in v["Rdn"].items()},
        flows_p=flows_p,
        flows_q=flows_q,
        shat={key: np.asarray(s.value).reshape(T) for key, s in v["shat"].items()},
        beta=beta,
        t_caps=t_caps,
        duals=result.duals,
        matrix_duals=result.matrix_duals,
        solver_name=result.solver_name,
        meta=prog.meta,
    )


def nominal_injections(sol: ClearingSolution, t: int):
    """Net (p, q) bus-phase injections implied by dispatch and forecasts at t.

    This is the right-hand side of the trace-form balance rows; it feeds the
    nonlinear validation power flow.
    """
    model: FeederModel = sol.meta["model"]
    scenario: Scenario = sol.meta["scenario"]
    flex: FlexInfo = sol.meta["flex"]
    p = np.zeros(model.nbp)
    q = np.zeros(model.nbp)
    for ld in model.loads:
        for ph in ld.phases:
            m = model.index(ld.bus, ph)
            d = scenario.load_p[(ld.bus, ph)][t]
            p[m] -= d
            q[m] -= d * ld.q_factor
    for rw in model.renewables:
        for ph in rw.phases:
            m = model.index(rw.bus, ph)
            p[m] += scenario.renewable_p[(rw.bus, ph)][t]
    for dev in flex.devices:
        key = "gen" if isinstance(dev, Generator) else "ess"
        for k, ph in enumerate(dev.phases):
            m = model.index(dev.bus, ph)
            if key == "gen":
                p[m] += sol.meta["gen_p_ph"][dev.bus][k, t]
                q[m] += sol.meta["gen_q_ph"][dev.bus][k, t]
            else:
                p[m] += sol.meta["ess_dis_ph"][dev.bus][k, t] - sol.meta["ess_ch_ph"][dev.bus][k, t]
                q[m] += sol.meta["ess_q_ph"][dev.bus][k, t]
    return p, q
