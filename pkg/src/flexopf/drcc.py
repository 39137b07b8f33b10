"""Affine-policy variables and chance-constraint reformulations.

Reserve adequacy uses the distribution-free one-sided Chebyshev factor
sqrt((1-eps)/eps); voltage and flow margins use Gaussian quantiles, exactly
the mixed philosophy of the clearing formulation. ``margin_mode =
"chebyshev_all"`` switches every margin to the Chebyshev factor for a fully
distribution-free run, which makes the conservatism gap measurable.
"""

from __future__ import annotations

import cvxpy as cp
import numpy as np
from scipy import stats

from .copula import UncertaintyModel
from .errors import InfeasibleFloor, InvalidEpsilon
from .opf import FlexInfo
from .program import ConicProgram, ConstraintTag
from .scenario import RiskConfig
from .sensitivity import ResponseKernels


def chebyshev_factor(eps: float) -> float:
    return float(np.sqrt((1.0 - eps) / eps))


def gaussian_factor(eps: float) -> float:
    return float(stats.norm.ppf(1.0 - eps))


def margin_factors(cfg: RiskConfig) -> tuple[float, float, float]:
    """(z_R, z_v, z_l) for the configured risk levels and margin mode."""
    for name, eps in (("eps_reserve", cfg.eps_reserve),
                      ("eps_voltage", cfg.eps_voltage),
                      ("eps_flow", cfg.eps_flow)):
        if not (0.0 < eps <= 0.5):
            raise InvalidEpsilon(name, eps)
    z_r = chebyshev_factor(cfg.eps_reserve)
    if cfg.margin_mode == "chebyshev_all":
        return z_r, chebyshev_factor(cfg.eps_voltage), chebyshev_factor(cfg.eps_flow)
    return z_r, gaussian_factor(cfg.eps_voltage), gaussian_factor(cfg.eps_flow)


def add_policy_block(prog: ConicProgram, unc: UncertaintyModel) -> None:
    """Create nonnegative participation factors for every flexible bus-phase."""
    scenario = prog.meta["scenario"]
    flex: FlexInfo = prog.meta["flex"]
    T = scenario.horizon
    M = unc.n_sources
    F = flex.n_bus_phases
    prog.meta["unc"] = unc
    if M == 0 or F == 0:
        prog.vars["beta"] = None
        return
    beta = {t: cp.Variable((F, M), name=f"beta_{t}") for t in range(T)}
    prog.vars["beta"] = beta
    for t in range(T):
        prog.add(cp.vec(beta[t], order="C") >= 0.0,
                 [ConstraintTag("beta_lb", period=t, bus=bp[0], phase=bp[1], source=unc.sources[k].id)
                  for bp in flex.bus_phases for k in range(M)])


def add_participation_floor(prog: ConicProgram, beta_floor: float) -> None:
    """Per source and period, participation must add up to at least the floor."""
    if beta_floor < 0.0:
        raise InvalidEpsilon("beta_floor", beta_floor)
    if beta_floor == 0.0:
        return
    flex: FlexInfo = prog.meta["flex"]
    unc: UncertaintyModel = prog.meta["unc"]
    T = prog.meta["scenario"].horizon
    if unc.n_sources == 0:
        return
    if flex.n_bus_phases == 0:
        raise InfeasibleFloor(f"beta_floor={beta_floor} with no flexible devices")
    beta = prog.vars["beta"]
    for t in range(T):
        for k, src in enumerate(unc.sources):
            prog.add(cp.sum(beta[t][:, k]) >= beta_floor,
                     ConstraintTag("part_floor", period=t, source=src.id))


def add_reserve_drcc(prog: ConicProgram, unc: UncertaintyModel, z_r: float,
                     pooled: bool = False) -> None:
    """Reserve adequacy: headroom covers the policy's mean plus z_R dispersion.

    The printed form sums one norm per phase; ``pooled`` replaces the sum by
    a single norm over the phase-aggregated policy (strictly less
    conservative, off by default).
    """
    flex: FlexInfo = prog.meta["flex"]
    T = prog.meta["scenario"].horizon
    if unc.n_sources == 0 or flex.n_bus_phases == 0:
        return
    beta = prog.vars["beta"]
    gh = unc.gamma_half
    mu = unc.mu
    rows_of = {bus: [f for f, bp in enumerate(flex.bus_phases) if bp[0] == bus]
               for bus in flex.buses}
    for t in range(T):
        for bus in flex.buses:
            rows = rows_of[bus]
            if not rows:
                continue
            mean_term = sum(beta[t][f, :] @ mu for f in rows)
            if pooled:
                agg = sum(beta[t][f, :] for f in rows)
                disp = z_r * cp.norm(gh @ agg, 2)
            else:
                disp = sum(z_r * cp.norm(gh @ beta[t][f, :], 2) for f in rows)
            prog.add(prog.vars["Rup"][bus][t] >= mean_term + disp,
                     ConstraintTag("reserve_up", period=t, bus=bus))
            prog.add(prog.vars["Rdn"][bus][t] >= disp - mean_term,
                     ConstraintTag("reserve_dn", period=t, bus=bus))


def add_voltage_drcc(prog: ConicProgram, kernels: list[ResponseKernels],
                     unc: UncertaintyModel, z_v: float) -> None:
    """Two-sided squared-voltage windows with mean shift and z_v dispersion."""
    model = prog.meta["model"]
    tm = prog.meta["tm"]
    tr = prog.meta["trace_expr"]
    T = prog.meta["scenario"].horizon
    if unc.n_sources == 0 or prog.vars.get("beta") is None:
        return
    beta = prog.vars["beta"]
    gh = unc.gamma_half
    mu = unc.mu
    for t in range(T):
        kern = kernels[t]
        for r, (bus, ph) in enumerate(kern.v_rows):
            m = model.index(bus, ph)
            xv_row = kern.const_v[r] + kern.gamma_v[r] @ beta[t]
            mean = tr(tm.M[m], t) + xv_row @ mu
            disp = z_v * cp.norm(gh @ xv_row, 2)
            b = model.bus_by_id[bus]
            prog.add(mean + disp <= b.v_max ** 2,
                     ConstraintTag("volt_up", period=t, bus=bus, phase=ph))
            prog.add(mean - disp >= b.v_min ** 2,
                     ConstraintTag("volt_lo", period=t, bus=bus, phase=ph))


def add_flow_drcc(prog: ConicProgram, kernels: list[ResponseKernels],
                  unc: UncertaintyModel, z_l: float) -> None:
    """Flow caps: auxiliary per-direction bounds plus the apparent circle."""
    model = prog.meta["model"]
    scenario = prog.meta["scenario"]
    T = scenario.horizon
    if unc.n_sources == 0 or prog.vars.get("beta") is None:
        prog.vars.setdefault("t_p", {})
        prog.vars.setdefault("t_q", {})
        return
    beta = prog.vars["beta"]
    gh = unc.gamma_half
    mu = unc.mu
    smax = {(ln.from_bus, ln.to_bus): ln.s_max for ln in model.lines if np.isfinite(ln.s_max)}
    if not smax:
        prog.vars.setdefault("t_p", {})
        prog.vars.setdefault("t_q", {})
        return
    t_p = {key: cp.Variable(T, name=f"tp_{key[0]}_{key[1]}") for key in smax}
    t_q = {key: cp.Variable(T, name=f"tq_{key[0]}_{key[1]}") for key in smax}
    prog.vars["t_p"] = t_p
    prog.vars["t_q"] = t_q
    flow_p = prog.meta["flow_p_expr"]
    flow_q = prog.meta["flow_q_expr"]
    for t in range(T):
        kern = kernels[t]
        for li, key in enumerate(kern.lines):
            if key not in smax:
                continue
            xp_row = kern.const_p[li] + kern.gamma_p[li] @ beta[t]
            xq_row = kern.const_q[li] + kern.gamma_q[li] @ beta[t]
            p_nom = sum(flow_p[(key[0], key[1], ph)][t]
                        for ph in _line_phases(model, key))
            q_nom = sum(flow_q[(key[0], key[1], ph)][t]
                        for ph in _line_phases(model, key))
            e_p = p_nom + xp_row @ mu
            e_q = q_nom + xq_row @ mu
            d_p = z_l * cp.norm(gh @ xp_row, 2)
            d_q = z_l * cp.norm(gh @ xq_row, 2)
            prog.add(t_p[key][t] + e_p >= d_p, ConstraintTag("flow_p_lo", period=t, line=key))
            prog.add(t_p[key][t] - e_p >= d_p, ConstraintTag("flow_p_up", period=t, line=key))
            prog.add(t_q[key][t] + e_q >= d_q, ConstraintTag("flow_q_lo", period=t, line=key))
            prog.add(t_q[key][t] - e_q >= d_q, ConstraintTag("flow_q_up", period=t, line=key))
            prog.add(cp.norm(cp.hstack([t_p[key][t], t_q[key][t]]), 2) <= smax[key],
                     ConstraintTag("line_cap", period=t, line=key))


def _line_phases(model, key):
    for ln in model.lines:
        if (ln.from_bus, ln.to_bus) == key:
            return ln.phases
    raise KeyError(key)


def attach_drcc(prog: ConicProgram, unc: UncertaintyModel,
                kernels: list[ResponseKernels], cfg: RiskConfig) -> tuple[float, float, float]:
    """Wire the full risk extension onto a deterministic program."""
    z_r, z_v, z_l = margin_factors(cfg)
    add_policy_block(prog, unc)
    add_participation_floor(prog, cfg.beta_floor)
    add_reserve_drcc(prog, unc, z_r, pooled=cfg.reserve_norm_pooling)
    add_voltage_drcc(prog, kernels, unc, z_v)
    add_flow_drcc(prog, kernels, unc, z_l)
    prog.meta["kernels"] = kernels
    prog.meta["risk"] = cfg
    prog.meta["z_factors"] = (z_r, z_v, z_l)
    return z_r, z_v, z_l
