"""Dual-based flexibility prices, uncertainty charges, and settlement.

Reward prices are the multiplier pair on the reserve-adequacy rows; the
policy-stationarity identity splits their sum into energy, volt/var, and
active/reactive flow parts. Charge prices are the Lagrangian's partial
derivatives in each source's mean and dispersion, tagged with the same four
families. Settlement cross-checks the money flow: uncertainty payments must
reproduce flexibility revenue plus the nonnegative network margins.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .clearing import ClearingArtifacts
from .drcc import margin_factors
from .errors import DegenerateNorm, SufficiencyViolation
from .program import ConstraintTag

log = logging.getLogger(__name__)

NORM_FLOOR = 1e-9
# participation factors are O(0.1..1); anything below this is a solver zero
# whose complementarity pair is only centered to IPM accuracy
ACTIVE_BETA = 1e-4
DUAL_PROJECTION_LIMIT = 1e-6

PARTS = ("energy", "volt_var", "p_flow", "q_flow")


@dataclass
class RewardPrice:
    bus: int
    period: int
    alpha_up: float
    alpha_dn: float
    total: float                           # alpha_up + alpha_dn
    parts: dict[str, float] | None         # None when the price is undefined (beta = 0)
    reconstruction_error: float = np.nan
    prefactor_negative: bool = False


@dataclass
class ChargePrice:
    source: str
    period: int
    lam_mu: float
    lam_sigma: float
    mu_parts: dict[str, float] = field(default_factory=dict)
    sigma_parts: dict[str, float] = field(default_factory=dict)
    sigma_degenerate: bool = False


@dataclass
class Settlement:
    period: int
    flex_revenue: float                    # sum_i C^R
    uncertainty_payment: float             # sum_k E^xi
    margin_v: float
    margin_p: float
    margin_q: float

    @property
    def gap(self) -> float:
        return self.uncertainty_payment - self.flex_revenue

    @property
    def ledger_residual(self) -> float:
        return self.gap - (self.margin_v + self.margin_p + self.margin_q)


@dataclass
class PriceReport:
    rewards: list[RewardPrice]
    charges: list[ChargePrice]
    settlements: list[Settlement]
    stationarity: float                    # max scaled residual over active policies
    mu_mode: str                           # "zero" or "full"


class _Duals:
    """Tag-indexed dual fetch with tiny-negative projection."""

    def __init__(self, duals: dict[ConstraintTag, float]):
        self._d = duals
        self.max_projection = 0.0

    def pos(self, kind: str, **coords) -> float:
        v = self._d.get(ConstraintTag(kind=kind, **coords), 0.0)
        if v < 0.0:
            self.max_projection = max(self.max_projection, -v)
            v = 0.0
        return v

    def check_projection(self):
        if self.max_projection > DUAL_PROJECTION_LIMIT:
            raise SufficiencyViolation(self.max_projection)
        if self.max_projection > 0.0:
            log.debug("projected negative duals up to %.2e", self.max_projection)


@dataclass
class _PeriodView:
    """All numeric pieces pricing needs for one period."""

    t: int
    beta: np.ndarray                       # (F, M)
    xv: np.ndarray                         # (n_v, M) at beta*
    xps: np.ndarray                        # (L, M)
    xqs: np.ndarray                        # (L, M)
    v_rows: tuple
    lines: tuple
    flex_bps: tuple
    bus_rows: dict[int, list[int]]
    a_up: dict[int, float]
    a_dn: dict[int, float]
    lam_r: np.ndarray                      # per source
    av_up: np.ndarray
    av_lo: np.ndarray
    ap_up: np.ndarray
    ap_lo: np.ndarray
    aq_up: np.ndarray
    aq_lo: np.ndarray


def _period_view(art: ClearingArtifacts, dus: _Duals, t: int) -> _PeriodView:
    sol = art.solution
    kern = art.kernels[t]
    unc = art.uncertainty
    flex = sol.meta["flex"]
    beta = sol.beta[t]
    xv = kern.const_v + kern.gamma_v @ beta
    xps = kern.const_p + kern.gamma_p @ beta
    xqs = kern.const_q + kern.gamma_q @ beta
    bus_rows: dict[int, list[int]] = {}
    for f, (bus, _) in enumerate(flex.bus_phases):
        bus_rows.setdefault(bus, []).append(f)
    lam_r = np.array([dus.pos("part_floor", period=t, source=s.id) for s in unc.sources])
    return _PeriodView(
        t=t, beta=beta, xv=xv, xps=xps, xqs=xqs,
        v_rows=kern.v_rows, lines=kern.lines, flex_bps=flex.bus_phases, bus_rows=bus_rows,
        a_up={b: dus.pos("reserve_up", period=t, bus=b) for b in flex.buses},
        a_dn={b: dus.pos("reserve_dn", period=t, bus=b) for b in flex.buses},
        lam_r=lam_r,
        av_up=np.array([dus.pos("volt_up", period=t, bus=bp[0], phase=bp[1]) for bp in kern.v_rows]),
        av_lo=np.array([dus.pos("volt_lo", period=t, bus=bp[0], phase=bp[1]) for bp in kern.v_rows]),
        ap_up=np.array([dus.pos("flow_p_up", period=t, line=l) for l in kern.lines]),
        ap_lo=np.array([dus.pos("flow_p_lo", period=t, line=l) for l in kern.lines]),
        aq_up=np.array([dus.pos("flow_q_up", period=t, line=l) for l in kern.lines]),
        aq_lo=np.array([dus.pos("flow_q_lo", period=t, line=l) for l in kern.lines]),
    )


def _safe_norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(v))


def _mu_mode(unc) -> str:
    return "zero" if np.max(np.abs(unc.mu)) < 1e-12 else "full"


def _network_terms(pv: _PeriodView, unc, z_v: float, z_l: float, gh: np.ndarray,
                   gamma_v: np.ndarray, gamma_p: np.ndarray, gamma_q: np.ndarray,
                   f: int, k: int, mu: np.ndarray):
    """Voltage and flow contributions to d L / d beta[f, k], by family."""
    volt = 0.0
    for r in range(len(pv.v_rows)):
        s_up, s_lo = pv.av_up[r], pv.av_lo[r]
        if s_up + s_lo == 0.0:
            continue
        nrm = _safe_norm(gh @ pv.xv[r])
        zv_term = 0.0
        if nrm > NORM_FLOOR:
            zv_term = z_v * gamma_v[r, f] * float(unc.gamma[k] @ pv.xv[r]) / nrm
        volt += (s_up + s_lo) * zv_term + (s_up - s_lo) * mu[k] * gamma_v[r, f]
    pflow = 0.0
    qflow = 0.0
    for li in range(len(pv.lines)):
        s_up, s_lo = pv.ap_up[li], pv.ap_lo[li]
        if s_up + s_lo != 0.0:
            nrm = _safe_norm(gh @ pv.xps[li])
            zp_term = 0.0
            if nrm > NORM_FLOOR:
                zp_term = z_l * gamma_p[li, f] * float(unc.gamma[k] @ pv.xps[li]) / nrm
            pflow += (s_up + s_lo) * zp_term + (s_up - s_lo) * mu[k] * gamma_p[li, f]
        s_up, s_lo = pv.aq_up[li], pv.aq_lo[li]
        if s_up + s_lo != 0.0:
            nrm = _safe_norm(gh @ pv.xqs[li])
            zq_term = 0.0
            if nrm > NORM_FLOOR:
                zq_term = z_l * gamma_q[li, f] * float(unc.gamma[k] @ pv.xqs[li]) / nrm
            qflow += (s_up + s_lo) * zq_term + (s_up - s_lo) * mu[k] * gamma_q[li, f]
    return volt, pflow, qflow


def reward_prices(art: ClearingArtifacts) -> tuple[list[RewardPrice], _Duals]:
    """Four-part decomposition of the reserve price pair per flexible bus."""
    _require_risk(art)
    sol = art.solution
    unc = art.uncertainty
    z_r, z_v, z_l = margin_factors(art.scenario.risk)
    gh = unc.gamma_half
    mu = unc.mu
    dus = _Duals(sol.duals)
    flex = sol.meta["flex"]
    out: list[RewardPrice] = []
    for t in range(sol.horizon):
        pv = _period_view(art, dus, t)
        kern = art.kernels[t]
        for bus in flex.buses:
            a_up, a_dn = pv.a_up[bus], pv.a_dn[bus]
            total = a_up + a_dn
            # pick the phase row and source with the strongest active policy
            cands = [(pv.beta[f, k], f, k)
                     for f in pv.bus_rows[bus] for k in range(unc.n_sources)
                     if pv.beta[f, k] > ACTIVE_BETA]
            if not cands:
                out.append(RewardPrice(bus=bus, period=t, alpha_up=a_up, alpha_dn=a_dn,
                                       total=total, parts=None))
                continue
            _, f, k = max(cands)
            beta_f = pv.beta[f]
            nrm = _safe_norm(gh @ beta_f)
            denom = z_r * float(unc.gamma[k] @ beta_f)
            if nrm < NORM_FLOOR or abs(denom) < NORM_FLOOR ** 2:
                out.append(RewardPrice(bus=bus, period=t, alpha_up=a_up, alpha_dn=a_dn,
                                       total=total, parts=None))
                continue
            pf = nrm / denom
            volt, pflow, qflow = _network_terms(
                pv, unc, z_v, z_l, gh, kern.gamma_v, kern.gamma_p, kern.gamma_q, f, k, mu)
            parts = {
                "energy": pf * (pv.lam_r[k] - (a_up - a_dn) * mu[k]),
                "volt_var": -pf * volt,
                "p_flow": -pf * pflow,
                "q_flow": -pf * qflow,
            }
            rec = abs(sum(parts.values()) - total) / max(abs(total), NORM_FLOOR)
            out.append(RewardPrice(bus=bus, period=t, alpha_up=a_up, alpha_dn=a_dn,
                                   total=total, parts=parts, reconstruction_error=rec,
                                   prefactor_negative=pf < 0.0))
    dus.check_projection()
    return out, dus


def stationarity_residuals(art: ClearingArtifacts) -> np.ndarray:
    """Scaled policy-stationarity residual for every active policy entry.

    This is the literal optimality identity behind the price decomposition:
    at an exact optimum each entry evaluates to zero.
    """
    _require_risk(art)
    sol = art.solution
    unc = art.uncertainty
    z_r, z_v, z_l = margin_factors(art.scenario.risk)
    gh = unc.gamma_half
    mu = unc.mu
    dus = _Duals(sol.duals)
    flex = sol.meta["flex"]
    res = []
    for t in range(sol.horizon):
        pv = _period_view(art, dus, t)
        kern = art.kernels[t]
        for f, (bus, ph) in enumerate(flex.bus_phases):
            beta_f = pv.beta[f]
            nrm = _safe_norm(gh @ beta_f)
            for k in range(unc.n_sources):
                if pv.beta[f, k] <= ACTIVE_BETA or nrm < NORM_FLOOR:
                    continue
                a_up, a_dn = pv.a_up[bus], pv.a_dn[bus]
                reserve = ((a_up + a_dn) * z_r * float(unc.gamma[k] @ beta_f) / nrm
                           + (a_up - a_dn) * mu[k])
                volt, pflow, qflow = _network_terms(
                    pv, unc, z_v, z_l, gh, kern.gamma_v, kern.gamma_p, kern.gamma_q, f, k, mu)
                # entries resting on the nonnegativity bound carry its multiplier
                bound = dus.pos("beta_lb", period=t, bus=bus, phase=ph,
                                source=unc.sources[k].id)
                total = reserve - pv.lam_r[k] + volt + pflow + qflow - bound
                scale = max(abs(reserve), abs(pv.lam_r[k]), abs(volt),
                            abs(pflow), abs(qflow), 1e-6)
                res.append(total / scale)
    return np.asarray(res if res else [0.0])


def charge_prices(art: ClearingArtifacts) -> list[ChargePrice]:
    """Per-source prices on the expected error and its dispersion."""
    _require_risk(art)
    sol = art.solution
    unc = art.uncertainty
    z_r, z_v, z_l = margin_factors(art.scenario.risk)
    gh = unc.gamma_half
    sigma = unc.sigma
    dus = _Duals(sol.duals)
    out: list[ChargePrice] = []
    for t in range(sol.horizon):
        pv = _period_view(art, dus, t)
        for k, src in enumerate(unc.sources):
            mu_parts = dict.fromkeys(PARTS, 0.0)
            sig_parts = dict.fromkeys(PARTS, 0.0)
            degenerate = sigma[k] <= 0.0
            for bus, rows in pv.bus_rows.items():
                diff = pv.a_up[bus] - pv.a_dn[bus]
                tot = pv.a_up[bus] + pv.a_dn[bus]
                for f in rows:
                    beta_f = pv.beta[f]
                    mu_parts["energy"] += diff * beta_f[k]
                    if degenerate or tot == 0.0:
                        continue
                    nrm = _safe_norm(gh @ beta_f)
                    if nrm > NORM_FLOOR:
                        sig_parts["energy"] += (tot * z_r * beta_f[k]
                                                * float(unc.gamma[k] @ beta_f)
                                                / (sigma[k] * nrm))
            for r in range(len(pv.v_rows)):
                diff = pv.av_up[r] - pv.av_lo[r]
                tot = pv.av_up[r] + pv.av_lo[r]
                mu_parts["volt_var"] += diff * pv.xv[r, k]
                if degenerate or tot == 0.0:
                    continue
                nrm = _safe_norm(gh @ pv.xv[r])
                if nrm > NORM_FLOOR:
                    sig_parts["volt_var"] += (tot * z_v * pv.xv[r, k]
                                              * float(unc.gamma[k] @ pv.xv[r])
                                              / (sigma[k] * nrm))
            for li in range(len(pv.lines)):
                for rows_arr, up, lo, zf, name in (
                        (pv.xps, pv.ap_up, pv.ap_lo, z_l, "p_flow"),
                        (pv.xqs, pv.aq_up, pv.aq_lo, z_l, "q_flow")):
                    diff = up[li] - lo[li]
                    tot = up[li] + lo[li]
                    mu_parts[name] += diff * rows_arr[li, k]
                    if degenerate or tot == 0.0:
                        continue
                    nrm = _safe_norm(gh @ rows_arr[li])
                    if nrm > NORM_FLOOR:
                        sig_parts[name] += (tot * zf * rows_arr[li, k]
                                            * float(unc.gamma[k] @ rows_arr[li])
                                            / (sigma[k] * nrm))
            out.append(ChargePrice(
                source=src.id, period=t,
                lam_mu=sum(mu_parts.values()),
                lam_sigma=np.nan if degenerate else sum(sig_parts.values()),
                mu_parts=mu_parts, sigma_parts=sig_parts,
                sigma_degenerate=degenerate))
    return out


def settle(art: ClearingArtifacts, rewards: list[RewardPrice] | None = None,
           charges: list[ChargePrice] | None = None,
           tol: float = 1e-4) -> PriceReport:
    """Compute settlements and verify the money-flow identity.

    Raises SufficiencyViolation when uncertainty payments fail to reproduce
    flexibility revenue plus the network margins within tolerance.
    """
    _require_risk(art)
    if rewards is None:
        rewards, _ = reward_prices(art)
    if charges is None:
        charges = charge_prices(art)
    sol = art.solution
    unc = art.uncertainty
    z_r, z_v, z_l = margin_factors(art.scenario.risk)
    gh = unc.gamma_half
    dus = _Duals(sol.duals)

    settlements = []
    for t in range(sol.horizon):
        pv = _period_view(art, dus, t)
        flex_rev = sum(pv.a_up[b] * sol.reserve_up[b][t] + pv.a_dn[b] * sol.reserve_dn[b][t]
                       for b in pv.a_up)
        payment = 0.0
        for c in charges:
            if c.period != t:
                continue
            k = [s.id for s in unc.sources].index(c.source)
            payment += c.lam_mu * unc.mu[k]
            if not c.sigma_degenerate:
                payment += c.lam_sigma * unc.sigma[k]
        margin_v = 0.0
        for r in range(len(pv.v_rows)):
            tot, diff = pv.av_up[r] + pv.av_lo[r], pv.av_up[r] - pv.av_lo[r]
            margin_v += tot * z_v * _safe_norm(gh @ pv.xv[r]) + diff * float(pv.xv[r] @ unc.mu)
        margin_p = 0.0
        margin_q = 0.0
        for li in range(len(pv.lines)):
            tot, diff = pv.ap_up[li] + pv.ap_lo[li], pv.ap_up[li] - pv.ap_lo[li]
            margin_p += tot * z_l * _safe_norm(gh @ pv.xps[li]) + diff * float(pv.xps[li] @ unc.mu)
            tot, diff = pv.aq_up[li] + pv.aq_lo[li], pv.aq_up[li] - pv.aq_lo[li]
            margin_q += tot * z_l * _safe_norm(gh @ pv.xqs[li]) + diff * float(pv.xqs[li] @ unc.mu)
        st = Settlement(period=t, flex_revenue=flex_rev, uncertainty_payment=payment,
                        margin_v=margin_v, margin_p=margin_p, margin_q=margin_q)
        scale = max(abs(payment), abs(flex_rev), 1.0)
        if abs(st.ledger_residual) > tol * scale:
            raise SufficiencyViolation(st.ledger_residual)
        settlements.append(st)

    stat = float(np.max(np.abs(stationarity_residuals(art))))
    return PriceReport(rewards=rewards, charges=charges, settlements=settlements,
                       stationarity=stat, mu_mode=_mu_mode(unc))


def _require_risk(art: ClearingArtifacts) -> None:
    if not art.risk_aware or art.solution.beta is None:
        raise DegenerateNorm("deterministic solution has no policy block", 0.0)
