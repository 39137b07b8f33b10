"""Monte Carlo after-the-fact validation of a risk-aware clearing.

Each sample draws correlated deviations, applies the cleared affine policy,
re-solves the nonlinear three-phase power flow, and checks every reformulated
chance constraint in its original probabilistic form. Non-converging samples
are counted separately, never folded into violation rates. Two-sided windows
count each side once per sample (per-side risk levels, as configured).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clearing import ClearingArtifacts
from .copula import sample as copula_sample
from .errors import DegenerateNorm
from .network import FeederModel
from .opf import nominal_injections
from .powerflow import run_powerflow_batch
from .tracemat import trace_value

PHYS_TOL = 1e-7


@dataclass
class ConstraintStat:
    kind: str
    period: int
    where: str
    epsilon: float
    violations: int
    samples: int
    binding: bool           # active multiplier AND a nonzero stochastic margin
    margin: float = 0.0     # z * dispersion term of the reformulated row

    @property
    def rate(self) -> float:
        return self.violations / self.samples if self.samples else 0.0

    @property
    def stderr(self) -> float:
        if self.samples == 0:
            return 0.0
        p = self.rate
        return float(np.sqrt(max(p * (1.0 - p), 1e-12) / self.samples))

    def ci95(self) -> tuple[float, float]:
        half = 1.96 * self.stderr
        return (max(self.rate - half, 0.0), min(self.rate + half, 1.0))


@dataclass
class ResponseErrorStats:
    mean_rel: float
    max_rel: float
    mean_abs: float
    max_abs: float


@dataclass
class WorstCase:
    max_line_loading_pct: float
    v_min: float
    v_max: float
    max_vdi: float


@dataclass
class ValidationReport:
    n_samples: int
    seed: int
    periods: int
    stats: list[ConstraintStat]
    response_voltage: ResponseErrorStats
    response_flow: ResponseErrorStats
    infeasible_samples: int
    worst_case: WorstCase | None = None
    notes: list[str] = field(default_factory=list)

    def by_kind(self, kind: str) -> list[ConstraintStat]:
        return [s for s in self.stats if s.kind == kind]


def _policy_deviations(art: ClearingArtifacts, t: int, xi: np.ndarray):
    """Per-sample bus-phase (dp, dq) from deviations and the affine policy."""
    model = art.model
    sol = art.solution
    flex = sol.meta["flex"]
    unc = art.uncertainty
    B = np.zeros((model.nbp, unc.n_sources))
    for f, (bus, ph) in enumerate(flex.bus_phases):
        B[model.index(bus, ph)] = sol.beta[t][f]
    coeff = -unc.a_xi + B
    dp = xi @ coeff.T
    dq = dp * model.psi[None, :]
    return dp, dq


def validate(art: ClearingArtifacts, n: int, seed: int = 0,
             worst_case: bool = True) -> ValidationReport:
    """Sample, re-solve, and measure empirical violation frequencies."""
    if not art.risk_aware:
        raise DegenerateNorm("validation needs a risk-aware clearing", 0.0)
    if n < 1:
        raise ValueError("need at least one sample")
    model = art.model
    sol = art.solution
    unc = art.uncertainty
    risk = art.scenario.risk
    T = sol.horizon

    from .drcc import margin_factors
    z_r, z_v, z_l = margin_factors(risk)
    gh = unc.gamma_half

    xi = copula_sample(unc, n, seed)
    stats: list[ConstraintStat] = []
    infeasible = 0
    v_abs_err: list[float] = []
    f_abs_err: list[float] = []
    v_dev_scale = 0.0              # largest true deviation per family, the
    f_dev_scale = 0.0              # denominator for relative accuracy
    MARGIN_FLOOR = 1e-8            # below this a row is deterministically bound

    for t in range(T):
        rec = art.recoveries[t]
        p_nom, q_nom = nominal_injections(sol, t)
        dp, dq = _policy_deviations(art, t, xi)
        Vb, iters, resid, ok = run_powerflow_batch(
            model, p_nom[None, :] + dp, q_nom[None, :] + dq,
            v0=rec.voltages, ybus=art.ybus)
        good = np.flatnonzero(ok)
        infeasible += int(n - good.size)
        Vg = Vb[good]
        xig = xi[good]

        # reserve adequacy in original form: r_i = sum_phi beta^T xi
        flex = sol.meta["flex"]
        for bus in flex.buses:
            rows = [f for f, bp in enumerate(flex.bus_phases) if bp[0] == bus]
            r = xig @ sol.beta[t][rows].sum(axis=0)
            up_viol = int(np.sum(r > sol.reserve_up[bus][t] + PHYS_TOL))
            dn_viol = int(np.sum(-r > sol.reserve_dn[bus][t] + PHYS_TOL))
            marg = z_r * sum(float(np.linalg.norm(gh @ sol.beta[t][f])) for f in rows)
            binding = _binding(sol, "reserve_up", period=t, bus=bus) and marg > MARGIN_FLOOR
            stats.append(ConstraintStat("reserve_up", t, f"bus{bus}", risk.eps_reserve,
                                        up_viol, good.size, binding, marg))
            binding = _binding(sol, "reserve_dn", period=t, bus=bus) and marg > MARGIN_FLOOR
            stats.append(ConstraintStat("reserve_dn", t, f"bus{bus}", risk.eps_reserve,
                                        dn_viol, good.size, binding, marg))

        # voltages (true nonlinear magnitudes) and response accuracy
        vmag2 = np.abs(Vg) ** 2
        kern = art.kernels[t]
        beta_t = sol.beta[t]
        xv = kern.const_v + kern.gamma_v @ beta_t
        for r_i, (bus, ph) in enumerate(kern.v_rows):
            m = model.index(bus, ph)
            b = model.bus_by_id[bus]
            base = trace_value(art.tm.M[m], _stack(rec.voltages))
            pred = base + xig @ xv[r_i]
            truth = vmag2[:, m]
            err = np.abs(pred - truth)
            v_dev_scale = max(v_dev_scale, float(np.max(np.abs(truth - base))))
            v_abs_err.extend(err.tolist())
            up = int(np.sum(truth > b.v_max ** 2 + PHYS_TOL))
            dn = int(np.sum(truth < b.v_min ** 2 - PHYS_TOL))
            marg = z_v * float(np.linalg.norm(gh @ xv[r_i]))
            stats.append(ConstraintStat(
                "volt_up", t, f"bus{bus}:{ph}", risk.eps_voltage, up, good.size,
                _binding(sol, "volt_up", period=t, bus=bus, phase=ph) and marg > MARGIN_FLOOR,
                marg))
            stats.append(ConstraintStat(
                "volt_lo", t, f"bus{bus}:{ph}", risk.eps_voltage, dn, good.size,
                _binding(sol, "volt_lo", period=t, bus=bus, phase=ph) and marg > MARGIN_FLOOR,
                marg))

        # phase-summed line flows against the cleared caps
        xps = kern.const_p + kern.gamma_p @ beta_t
        xqs = kern.const_q + kern.gamma_q @ beta_t
        for li, key in enumerate(kern.lines):
            if key not in sol.t_caps:
                continue
            ptrue, qtrue = _line_totals(model, art.ybus, Vg, key)
            p0 = sum(sol.flows_p[(key[0], key[1], ph)][t] for ph in _phases(model, key))
            q0 = sum(sol.flows_q[(key[0], key[1], ph)][t] for ph in _phases(model, key))
            pred_p = p0 + xig @ xps[li]
            pred_q = q0 + xig @ xqs[li]
            f_abs_err.extend(np.abs(pred_p - ptrue).tolist())
            f_dev_scale = max(f_dev_scale, float(np.max(np.abs(ptrue - p0))))
            f_abs_err.extend(np.abs(pred_q - qtrue).tolist())
            f_dev_scale = max(f_dev_scale, float(np.max(np.abs(qtrue - q0))))
            tp = sol.t_caps[key]["p"][t]
            tq = sol.t_caps[key]["q"][t]
            marg_p = z_l * float(np.linalg.norm(gh @ xps[li]))
            marg_q = z_l * float(np.linalg.norm(gh @ xqs[li]))
            for kind, truth_arr, cap, marg in (("flow_p", ptrue, tp, marg_p),
                                               ("flow_q", qtrue, tq, marg_q)):
                stats.append(ConstraintStat(
                    f"{kind}_up", t, f"line{key}", risk.eps_flow,
                    int(np.sum(truth_arr > cap + PHYS_TOL)), good.size,
                    _binding(sol, f"{kind}_up", period=t, line=key) and marg > MARGIN_FLOOR,
                    marg))
                stats.append(ConstraintStat(
                    f"{kind}_lo", t, f"line{key}", risk.eps_flow,
                    int(np.sum(truth_arr < -cap - PHYS_TOL)), good.size,
                    _binding(sol, f"{kind}_lo", period=t, line=key) and marg > MARGIN_FLOOR,
                    marg))

    wc = evaluate_worst_case(art) if worst_case else None
    return ValidationReport(
        n_samples=n, seed=seed, periods=T, stats=stats,
        response_voltage=_stats(v_abs_err, v_dev_scale),
        response_flow=_stats(f_abs_err, f_dev_scale),
        infeasible_samples=infeasible,
        worst_case=wc,
    )


def evaluate_worst_case(art: ClearingArtifacts, n_sigma: float = 3.0) -> WorstCase:
    """Single deterministic extreme: every source at its adverse quantile.

    Net-demand deviations are positive when load overshoots or renewables
    undershoot, so the adverse corner is mu + n_sigma sigma with the policy
    response applied.
    """
    model = art.model
    sol = art.solution
    unc = art.uncertainty
    xi = unc.mu + n_sigma * unc.sigma
    worst = WorstCase(max_line_loading_pct=0.0, v_min=np.inf, v_max=-np.inf, max_vdi=0.0)
    for t in range(sol.horizon):
        p_nom, q_nom = nominal_injections(sol, t)
        dp, dq = _policy_deviations(art, t, xi[None, :])
        Vb, _, _, ok = run_powerflow_batch(
            model, p_nom[None, :] + dp, q_nom[None, :] + dq,
            v0=art.recoveries[t].voltages, ybus=art.ybus)
        if not ok[0]:
            continue
        V = Vb[0]
        vm = np.abs(V)
        worst = WorstCase(
            max_line_loading_pct=max(worst.max_line_loading_pct, _max_loading(model, art.ybus, V)),
            v_min=min(worst.v_min, float(vm.min())),
            v_max=max(worst.v_max, float(vm.max())),
            max_vdi=max(worst.max_vdi, _max_vdi(model, V)),
        )
    return worst


def _stats(abs_err, dev_scale: float) -> ResponseErrorStats:
    if not abs_err:
        return ResponseErrorStats(0.0, 0.0, 0.0, 0.0)
    scale = max(dev_scale, 1e-12)
    return ResponseErrorStats(
        mean_rel=float(np.mean(abs_err)) / scale, max_rel=float(np.max(abs_err)) / scale,
        mean_abs=float(np.mean(abs_err)), max_abs=float(np.max(abs_err)))


def _binding(sol, kind: str, **coords) -> bool:
    from .program import ConstraintTag
    return sol.duals.get(ConstraintTag(kind=kind, **coords), 0.0) > 1e-6


def _phases(model: FeederModel, key):
    for ln in model.lines:
        if (ln.from_bus, ln.to_bus) == key:
            return ln.phases
    raise KeyError(key)


def _line_totals(model: FeederModel, ybus, V_batch: np.ndarray, key):
    """Phase-summed sending-end P and Q for each sample row."""
    ln = next(l for l in model.lines if (l.from_bus, l.to_bus) == key)
    p = np.zeros(V_batch.shape[0])
    q = np.zeros(V_batch.shape[0])
    from .network import _PHASE_POS
    for pa in ln.phases:
        m = model.index(ln.from_bus, pa)
        cur = np.zeros(V_batch.shape[0], dtype=complex)
        for pb in ln.phases:
            y = complex(ln.y_series[_PHASE_POS[pa], _PHASE_POS[pb]])
            cur += y * (V_batch[:, model.index(ln.from_bus, pb)]
                        - V_batch[:, model.index(ln.to_bus, pb)])
        s = V_batch[:, m] * np.conj(cur)
        p += s.real
        q += s.imag
    return p, q


def _max_loading(model: FeederModel, ybus, V: np.ndarray) -> float:
    out = 0.0
    for ln in model.lines:
        if not np.isfinite(ln.s_max):
            continue
        p, q = _line_totals(model, ybus, V[None, :], (ln.from_bus, ln.to_bus))
        out = max(out, float(np.hypot(p[0], q[0]) / ln.s_max) * 100.0)
    return out


def _max_vdi(model: FeederModel, V: np.ndarray) -> float:
    out = 0.0
    for b in model.buses:
        if len(b.phases) < 2:
            continue
        mags = [abs(V[model.index(b.id, p)]) ** 2 for p in b.phases]
        out = max(out, max(mags) - min(mags))
    return out


def _stack(v: np.ndarray) -> np.ndarray:
    return np.concatenate([v.real, v.imag])
