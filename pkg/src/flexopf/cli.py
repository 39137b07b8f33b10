"""Operator-facing command line: solve, prices, validate, rank.

Every run resolves a manifest (inputs, risk knobs, solver settings, seed);
its hash is embedded in each artifact so outputs are traceable and two runs
with equal manifests produce byte-identical files. Commands never write
outside the output directory.

Exit codes: 0 success, 2 input error, 3 infeasible, 4 solver failure,
5 internal error.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, pricing, svgplot
from .clearing import ClearingArtifacts, clear_market
from .errors import FlexOpfError, InvalidEpsilon, ParseError, SchemaViolation, SolverFailure
from .network import load_feeder
from .recovery import recover_voltages
from .scenario import RiskConfig, load_scenario
from .validate import validate as run_validation

EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4
EXIT_INTERNAL = 5

_INPUT_ERRORS = (ParseError, SchemaViolation, InvalidEpsilon, FileNotFoundError, ValueError)


def _manifest(command: str, **fields) -> dict:
    man = {"command": command, "version": __version__}
    man.update({k: v for k, v in sorted(fields.items())})
    body = json.dumps(man, sort_keys=True, default=str)
    man["hash"] = hashlib.sha256(body.encode()).hexdigest()[:16]
    return man


def _write_manifest(outdir: Path, man: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, man: dict, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest {man['hash']}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def _risk_from_flags(scenario, eps_reserve, eps_voltage, eps_flow, beta_floor, margin_mode):
    base = scenario.risk
    return RiskConfig(
        eps_reserve=eps_reserve if eps_reserve is not None else base.eps_reserve,
        eps_voltage=eps_voltage if eps_voltage is not None else base.eps_voltage,
        eps_flow=eps_flow if eps_flow is not None else base.eps_flow,
        beta_floor=beta_floor if beta_floor is not None else base.beta_floor,
        margin_mode=margin_mode if margin_mode is not None else base.margin_mode,
        reserve_norm_pooling=base.reserve_norm_pooling,
    )


def _run(fn) -> int:
    try:
        fn()
        return 0
    except SolverFailure as exc:
        if exc.status == "Infeasible":
            click.echo(f"error: problem infeasible: {exc}", err=True)
            return EXIT_INFEASIBLE
        click.echo(f"error: solver failure: {exc}", err=True)
        return EXIT_SOLVER
    except _INPUT_ERRORS as exc:
        click.echo(f"error: invalid input: {exc}", err=True)
        return EXIT_INPUT
    except FlexOpfError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        click.echo(f"internal error: {exc}", err=True)
        return EXIT_INTERNAL


def _common_options(fn):
    fn = click.option("--feeder", required=True, type=str, help="Feeder file path.")(fn)
    fn = click.option("--scenario", "scenario_path", required=True, type=str,
                      help="Scenario file path.")(fn)
    fn = click.option("--out", "outdir", required=True, type=str, help="Output directory.")(fn)
    fn = click.option("--eps-reserve", type=float, default=None)(fn)
    fn = click.option("--eps-voltage", type=float, default=None)(fn)
    fn = click.option("--eps-flow", type=float, default=None)(fn)
    fn = click.option("--beta-floor", type=float, default=None)(fn)
    fn = click.option("--margin-mode", type=click.Choice(["paper", "chebyshev_all"]),
                      default=None)(fn)
    fn = click.option("--solver-tol", type=float, default=1e-9, show_default=True)(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    return fn


def _load(feeder, scenario_path, eps_reserve, eps_voltage, eps_flow, beta_floor, margin_mode):
    for path in (feeder, scenario_path):
        if not Path(path).exists():
            raise FileNotFoundError(f"no such file: {path}")
    model = load_feeder(feeder)
    scenario = load_scenario(scenario_path)
    risk = _risk_from_flags(scenario, eps_reserve, eps_voltage, eps_flow, beta_floor, margin_mode)
    scenario = dataclasses.replace(scenario, risk=risk)
    return model, scenario


@click.group()
@click.version_option(__version__)
def main():
    """Risk-aware three-phase energy and flexibility market clearing."""


@main.command("solve")
@_common_options
@click.option("--det", is_flag=True, help="Deterministic clearing, no policy block.")
def cmd_solve(feeder, scenario_path, outdir, eps_reserve, eps_voltage, eps_flow,
              beta_floor, margin_mode, solver_tol, seed, det):
    """Clear the market and export dispatch, reserves, and a summary."""

    def body():
        model, scenario = _load(feeder, scenario_path, eps_reserve, eps_voltage,
                                eps_flow, beta_floor, margin_mode)
        man = _manifest("solve", feeder=feeder, scenario=scenario_path, det=det,
                        risk=dataclasses.asdict(scenario.risk), solver_tol=solver_tol, seed=seed)
        art = clear_market(model, scenario, det=det, tol=solver_tol)
        out = Path(outdir)
        _write_manifest(out, man)
        _export_solution(out, man, art)
        click.echo(f"status {art.solution.status}  objective {art.solution.objective!r}")

    sys.exit(_run(body))


def _export_solution(out: Path, man: dict, art: ClearingArtifacts) -> None:
    sol = art.solution
    sb = art.model.s_base_mva
    rows = []
    for t in range(sol.horizon):
        for bus, p in sorted(sol.gen_p.items()):
            rows.append((t, bus, "generator", p[t] * sb, sol.gen_q[bus][t] * sb, 0.0, 0.0, 0.0))
        for bus, ch in sorted(sol.ess_ch.items()):
            rows.append((t, bus, "storage", (sol.ess_dis[bus][t] - ch[t]) * sb,
                         sol.ess_q[bus][t] * sb, ch[t] * sb, sol.ess_dis[bus][t] * sb,
                         sol.ess_soc[bus][t] * sb))
        rows.append((t, art.model.slack, "substation", sol.P0[t] * sb, sol.Q0[t] * sb,
                     0.0, 0.0, 0.0))
    _write_csv(out / "dispatch.csv", man,
               ["period", "bus", "kind", "p_mw", "q_mvar", "ch_mw", "dis_mw", "soc_mwh"], rows)

    rows = [(t, bus, sol.reserve_up[bus][t] * sb, sol.reserve_dn[bus][t] * sb)
            for t in range(sol.horizon) for bus in sorted(sol.reserve_up)]
    _write_csv(out / "reserves.csv", man, ["period", "bus", "up_mw", "dn_mw"], rows)

    rows = [(t, key[0], key[1], ph, sol.flows_p[(key[0], key[1], ph)][t] * sb,
             sol.flows_q[(key[0], key[1], ph)][t] * sb)
            for t in range(sol.horizon)
            for key in sorted({(i, j) for (i, j, _) in sol.flows_p})
            for ph in "abc" if (key[0], key[1], ph) in sol.flows_p]
    _write_csv(out / "flows.csv", man,
               ["period", "from", "to", "phase", "p_mw", "q_mvar"], rows)

    lines = [f"# manifest {man['hash']}",
             f"status {sol.status}",
             f"solver {sol.solver_name}",
             f"objective_usd {sol.objective!r}"]
    for t, rec in enumerate(art.recoveries):
        lines.append(f"rank_ratio[{t}] {rec.ratio!r}")
        lines.append(f"pf_mismatch_pu[{t}] {rec.pf_mismatch!r}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


@main.command("prices")
@_common_options
def cmd_prices(feeder, scenario_path, outdir, eps_reserve, eps_voltage, eps_flow,
               beta_floor, margin_mode, solver_tol, seed):
    """Clear, decompose prices, settle, and plot the component split."""

    def body():
        model, scenario = _load(feeder, scenario_path, eps_reserve, eps_voltage,
                                eps_flow, beta_floor, margin_mode)
        man = _manifest("prices", feeder=feeder, scenario=scenario_path,
                        risk=dataclasses.asdict(scenario.risk), solver_tol=solver_tol, seed=seed)
        art = clear_market(model, scenario, tol=solver_tol)
        report = pricing.settle(art)
        out = Path(outdir)
        _write_manifest(out, man)

        rows = []
        for r in report.rewards:
            parts = r.parts or dict.fromkeys(pricing.PARTS, float("nan"))
            rows.append((r.period, r.bus, r.alpha_up, r.alpha_dn, r.total,
                         parts["energy"], parts["volt_var"], parts["p_flow"], parts["q_flow"],
                         "" if r.parts else "no_marginal_price"))
        _write_csv(out / "prices_reward.csv", man,
                   ["period", "bus", "alpha_up", "alpha_dn", "price_total", "part_energy",
                    "part_voltvar", "part_pflow", "part_qflow", "note"], rows)

        rows = []
        for c in report.charges:
            rows.append((c.period, c.source, c.lam_mu, c.lam_sigma,
                         c.mu_parts["energy"], c.mu_parts["volt_var"],
                         c.mu_parts["p_flow"], c.mu_parts["q_flow"],
                         c.sigma_parts["energy"], c.sigma_parts["volt_var"],
                         c.sigma_parts["p_flow"], c.sigma_parts["q_flow"]))
        _write_csv(out / "prices_charge.csv", man,
                   ["period", "source", "lam_mu", "lam_sigma",
                    "mu_energy", "mu_voltvar", "mu_pflow", "mu_qflow",
                    "sigma_energy", "sigma_voltvar", "sigma_pflow", "sigma_qflow"], rows)

        rows = [(s.period, s.flex_revenue, s.uncertainty_payment, s.margin_v,
                 s.margin_p, s.margin_q, s.gap, s.ledger_residual)
                for s in report.settlements]
        _write_csv(out / "settlement.csv", man,
                   ["period", "flex_revenue", "uncertainty_payment", "margin_v",
                    "margin_p", "margin_q", "gap", "ledger_residual"], rows)

        _price_plots(out, report)
        ok = all(s.gap >= -1e-6 for s in report.settlements)
        click.echo(f"sufficiency {'PASS' if ok else 'FAIL'}  "
                   f"stationarity {report.stationarity!r}")
        if not ok:
            raise SolverFailure("error", "profit sufficiency violated")

    sys.exit(_run(body))


def _price_plots(out: Path, report: pricing.PriceReport) -> None:
    priced = [r for r in report.rewards if r.parts]
    if priced:
        labels = [f"b{r.bus}/t{r.period}" for r in priced]
        series = {p: [r.parts[p] for r in priced] for p in pricing.PARTS}
        (out / "reward_components.svg").write_text(
            svgplot.stacked_bars(labels, series, "Flexibility reward price components"))
    if report.charges:
        labels = [f"{c.source}/t{c.period}" for c in report.charges]
        series = {p: [c.mu_parts[p] for c in report.charges] for p in pricing.PARTS}
        (out / "charge_mu_components.svg").write_text(
            svgplot.stacked_bars(labels, series, "Uncertainty charge components (mean)"))
        series = {p: [c.sigma_parts[p] for c in report.charges] for p in pricing.PARTS}
        (out / "charge_sigma_components.svg").write_text(
            svgplot.stacked_bars(labels, series, "Uncertainty charge components (dispersion)"))


@main.command("validate")
@_common_options
@click.option("--n", "n_samples", type=int, required=True, help="Monte Carlo sample count.")
def cmd_validate(feeder, scenario_path, outdir, eps_reserve, eps_voltage, eps_flow,
                 beta_floor, margin_mode, solver_tol, seed, n_samples):
    """Monte Carlo validation of the cleared chance guarantees."""

    def body():
        if n_samples < 1:
            raise ValueError("--n must be at least 1")
        model, scenario = _load(feeder, scenario_path, eps_reserve, eps_voltage,
                                eps_flow, beta_floor, margin_mode)
        man = _manifest("validate", feeder=feeder, scenario=scenario_path, n=n_samples,
                        risk=dataclasses.asdict(scenario.risk), solver_tol=solver_tol, seed=seed)
        art = clear_market(model, scenario, tol=solver_tol)
        report = run_validation(art, n_samples, seed=seed)
        out = Path(outdir)
        _write_manifest(out, man)

        rows = [(s.kind, s.period, s.where, s.epsilon, s.violations, s.samples,
                 s.rate, s.ci95()[0], s.ci95()[1], int(s.binding))
                for s in report.stats]
        _write_csv(out / "violation_rates.csv", man,
                   ["kind", "period", "where", "epsilon", "violations", "samples",
                    "rate", "ci_lo", "ci_hi", "binding"], rows)

        lines = [f"# manifest {man['hash']}",
                 f"samples {report.n_samples} seed {report.seed} periods {report.periods}",
                 "violation counting: two-sided windows count each side once per sample",
                 f"infeasible_samples {report.infeasible_samples}",
                 f"response_voltage mean_rel {report.response_voltage.mean_rel!r} "
                 f"max_rel {report.response_voltage.max_rel!r}",
                 f"response_flow mean_rel {report.response_flow.mean_rel!r} "
                 f"max_rel {report.response_flow.max_rel!r}"]
        if report.worst_case:
            wc = report.worst_case
            lines += [f"worst_case max_loading_pct {wc.max_line_loading_pct!r}",
                      f"worst_case v_range {wc.v_min!r} {wc.v_max!r}",
                      f"worst_case max_vdi {wc.max_vdi!r}"]
        binding = [s for s in report.stats if s.binding]
        for s in binding:
            lines.append(f"binding {s.kind} t={s.period} {s.where} rate {s.rate!r} eps {s.epsilon}")
        (out / "validation.txt").write_text("\n".join(lines) + "\n")
        click.echo(f"validated n={report.n_samples}; binding rows: {len(binding)}; "
                   f"infeasible samples: {report.infeasible_samples}")

    sys.exit(_run(body))


@main.command("rank")
@_common_options
@click.option("--vdi-grid", default="0.02,0.05,0.10", show_default=True,
              help="Comma-separated phase-spread limits to sweep.")
def cmd_rank(feeder, scenario_path, outdir, eps_reserve, eps_voltage, eps_flow,
             beta_floor, margin_mode, solver_tol, seed, vdi_grid):
    """Sweep the phase-spread limit and tabulate PSD-block spectra."""

    def body():
        try:
            grid = [float(v) for v in vdi_grid.split(",") if v.strip()]
        except ValueError:
            raise ValueError(f"bad --vdi-grid {vdi_grid!r}") from None
        if not grid:
            raise ValueError("--vdi-grid is empty")
        model, scenario = _load(feeder, scenario_path, eps_reserve, eps_voltage,
                                eps_flow, beta_floor, margin_mode)
        man = _manifest("rank", feeder=feeder, scenario=scenario_path, vdi_grid=grid,
                        risk=dataclasses.asdict(scenario.risk), solver_tol=solver_tol, seed=seed)
        out = Path(outdir)
        _write_manifest(out, man)

        rows = []
        groups, spectra = [], []
        for limit in grid:
            m = dataclasses.replace(
                model, buses=tuple(dataclasses.replace(b, vdi_limit=limit) for b in model.buses))
            art = clear_market(m, scenario, det=True, tol=solver_tol)
            for t, W in enumerate(art.solution.W):
                rec = recover_voltages(m, W, art.ybus)
                top = [float(v) for v in rec.eigenvalues[:6]]
                top += [0.0] * (6 - len(top))
                rows.append((limit, t, rec.ratio, *top))
                groups.append(f"vdi={limit:g}/t{t}")
                spectra.append(top)
        _write_csv(out / "rank_table.csv", man,
                   ["vdi_limit", "period", "ratio_top2", "eig1", "eig2", "eig3",
                    "eig4", "eig5", "eig6"], rows)
        (out / "rank_spectra.svg").write_text(
            svgplot.log_spectrum(groups, spectra, "PSD block eigenvalues per phase-spread limit"))
        click.echo(f"rank sweep over {len(grid)} limits written")

    sys.exit(_run(body))


if __name__ == "__main__":
    main()
