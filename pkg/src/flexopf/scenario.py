"""Scenario file: forecasts, tariffs, risk configuration, uncertainty spec."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .copula import UncertaintyModel, UncertaintySource
from .errors import ParseError, SchemaViolation
from .marginals import Marginal, marginal_from_dict
from .network import FeederModel


@dataclass(frozen=True)
class Tariff:
    tou: tuple[float, ...]            # $/MWh per period
    q_price_factor: float = 0.2       # reactive price as a fraction of the TOU price


@dataclass(frozen=True)
class RiskConfig:
    eps_reserve: float = 0.05
    eps_voltage: float = 0.05
    eps_flow: float = 0.05
    beta_floor: float = 1.0
    margin_mode: str = "paper"        # "paper" (mixed) or "chebyshev_all"
    reserve_norm_pooling: bool = False


@dataclass(frozen=True)
class SourceSpec:
    id: str
    bus: int
    phase: str
    marginal: Marginal


@dataclass(frozen=True)
class Scenario:
    horizon: int
    dt_hours: float
    tariff: Tariff
    load_p: dict[tuple[int, str], np.ndarray]
    renewable_p: dict[tuple[int, str], np.ndarray]
    risk: RiskConfig = field(default_factory=RiskConfig)
    sources: tuple[SourceSpec, ...] = ()
    spearman: np.ndarray | None = None

    def uncertainty_model(self, model: FeederModel) -> UncertaintyModel:
        srcs = [UncertaintySource(s.id, s.bus, s.phase, s.marginal) for s in self.sources]
        return UncertaintyModel.build(model, srcs, self.spearman)


def _bp_key(raw: str) -> tuple[int, str]:
    try:
        bus, phase = raw.split(":")
        return int(bus), phase
    except ValueError:
        raise SchemaViolation("forecasts", f"bad bus-phase key {raw!r}, expected 'bus:phase'") from None


def _series_map(doc: dict, horizon: int, section: str) -> dict[tuple[int, str], np.ndarray]:
    out = {}
    for key, values in doc.items():
        arr = np.asarray(values, dtype=float)
        if arr.shape != (horizon,):
            raise SchemaViolation(f"{section}.{key}", f"expected {horizon} periods, got {arr.shape}")
        out[_bp_key(key)] = arr
    return out


def scenario_from_dict(doc: dict) -> Scenario:
    if "horizon" not in doc:
        raise SchemaViolation("horizon")
    horizon = int(doc["horizon"])
    dt = float(doc.get("dt_hours", 1.0))

    tariff_doc = doc.get("tariff", {})
    tou = tuple(float(v) for v in tariff_doc.get("tou", [0.0] * horizon))
    if len(tou) != horizon:
        raise SchemaViolation("tariff.tou", f"expected {horizon} entries, got {len(tou)}")
    tariff = Tariff(tou=tou, q_price_factor=float(tariff_doc.get("q_price_factor", 0.2)))

    fc = doc.get("forecasts", {})
    load_p = _series_map(fc.get("load_pu", {}), horizon, "forecasts.load_pu")
    renew_p = _series_map(fc.get("renewable_pu", {}), horizon, "forecasts.renewable_pu")

    r = doc.get("risk", {})
    risk = RiskConfig(
        eps_reserve=float(r.get("eps_reserve", 0.05)),
        eps_voltage=float(r.get("eps_voltage", 0.05)),
        eps_flow=float(r.get("eps_flow", 0.05)),
        beta_floor=float(r.get("beta_floor", 1.0)),
        margin_mode=str(r.get("margin_mode", "paper")),
        reserve_norm_pooling=bool(r.get("reserve_norm_pooling", False)),
    )
    if risk.margin_mode not in ("paper", "chebyshev_all"):
        raise SchemaViolation("risk.margin_mode", f"unknown mode {risk.margin_mode!r}")

    unc = doc.get("uncertainty", {})
    sources = []
    for k, rec in enumerate(unc.get("sources", [])):
        sec = f"uncertainty.sources[{k}]"
        for need in ("id", "bus", "phase", "marginal"):
            if need not in rec:
                raise SchemaViolation(f"{sec}.{need}")
        sources.append(SourceSpec(
            id=str(rec["id"]), bus=int(rec["bus"]), phase=str(rec["phase"]),
            marginal=marginal_from_dict(rec["marginal"]),
        ))
    spearman = None
    if "spearman" in unc:
        spearman = np.asarray(unc["spearman"], dtype=float)
        if spearman.shape != (len(sources), len(sources)):
            raise SchemaViolation("uncertainty.spearman", "shape must match source count")

    return Scenario(horizon=horizon, dt_hours=dt, tariff=tariff,
                    load_p=load_p, renewable_p=renew_p, risk=risk,
                    sources=tuple(sources), spearman=spearman)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc.msg}", exc.lineno, exc.colno) from exc
    return scenario_from_dict(doc)


def scenario_to_dict(sc: Scenario) -> dict:
    doc = {
        "horizon": sc.horizon,
        "dt_hours": sc.dt_hours,
        "tariff": {"tou": list(sc.tariff.tou), "q_price_factor": sc.tariff.q_price_factor},
        "forecasts": {
            "load_pu": {f"{b}:{p}": arr.tolist() for (b, p), arr in sorted(sc.load_p.items())},
            "renewable_pu": {f"{b}:{p}": arr.tolist() for (b, p), arr in sorted(sc.renewable_p.items())},
        },
        "risk": {
            "eps_reserve": sc.risk.eps_reserve,
            "eps_voltage": sc.risk.eps_voltage,
            "eps_flow": sc.risk.eps_flow,
            "beta_floor": sc.risk.beta_floor,
            "margin_mode": sc.risk.margin_mode,
            "reserve_norm_pooling": sc.risk.reserve_norm_pooling,
        },
        "uncertainty": {
            "sources": [
                {"id": s.id, "bus": s.bus, "phase": s.phase, "marginal": s.marginal.to_dict()}
                for s in sc.sources
            ],
        },
    }
    if sc.spearman is not None:
        doc["uncertainty"]["spearman"] = np.asarray(sc.spearman).tolist()
    return doc


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2, sort_keys=True) + "\n")
