"""Feeder data model, bus-phase indexing, and admittance assembly.

All electrical quantities are per-unit on the feeder's (S_base, V_base);
conversions to physical units happen only at file I/O. Bus-phase ordering is
canonical throughout the package: bus id ascending, phase a < b < c, with
missing phases omitted from the active index set. Real/imaginary stacking
puts all real parts before all imaginary parts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DanglingBus,
    DuplicateLine,
    InvariantViolation,
    ParseError,
    SchemaViolation,
)

PHASES = ("a", "b", "c")
_PHASE_POS = {"a": 0, "b": 1, "c": 2}

# balanced reference angles used for the slack bus and flat starts
PHASE_ROTATION = np.exp(-2j * np.pi / 3 * np.arange(3))


def _phase_tuple(spec) -> tuple[str, ...]:
    phases = tuple(spec)
    if not phases or any(p not in PHASES for p in phases) or len(set(phases)) != len(phases):
        raise SchemaViolation("phases", f"invalid phase set {spec!r}")
    return tuple(p for p in PHASES if p in phases)


@dataclass(frozen=True)
class Bus:
    id: int
    phases: tuple[str, ...]
    v_min: float = 0.9
    v_max: float = 1.1
    vdi_limit: float = 0.1


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    phases: tuple[str, ...]
    y_series: np.ndarray          # 3x3 complex, per-unit, rows/cols follow (a, b, c)
    s_max: float = np.inf         # per-unit apparent limit on summed three-phase flow


@dataclass(frozen=True)
class Generator:
    """Dispatchable unit (gas turbine in the reference fleet)."""

    id: str
    bus: int
    phases: tuple[str, ...]
    g_min: float = 0.0            # pu
    g_max: float = 1.0
    ramp_up: float = 1.0          # pu per hour
    ramp_down: float = 1.0
    pf_min: float = 0.0           # reactive coupling multipliers in B-block form
    pf_max: float = 1.0
    cost_a1: float = 0.0          # $/MWh
    cost_a2: float = 0.0          # $/MW^2 h
    reserve_up_price: float = 0.0  # $/MW h
    reserve_dn_price: float = 0.0


@dataclass(frozen=True)
class Storage:
    id: str
    bus: int
    phases: tuple[str, ...]
    soc_max: float = 1.0          # pu h
    soc_init: float = 0.5
    ch_max: float = 1.0           # pu
    dis_max: float = 1.0
    efficiency: float = 0.9
    cost_b1: float = 0.0          # $/MWh on |ch - dis|
    cost_b0: float = 0.0
    reserve_up_price: float = 0.0
    reserve_dn_price: float = 0.0


@dataclass(frozen=True)
class Renewable:
    id: str
    bus: int
    phases: tuple[str, ...]
    capacity: float = 0.0         # pu, informational


@dataclass(frozen=True)
class Load:
    id: str
    bus: int
    phases: tuple[str, ...]
    q_factor: float = 0.0         # reactive demand per unit active demand


Device = Generator | Storage | Renewable | Load


@dataclass(frozen=True)
class FeederModel:
    """Immutable three-phase feeder: topology, admittances, device fleet.

    Construction validates the model invariants (single known slack, line
    endpoints exist, line phases within endpoint phases, sane voltage bounds,
    finite and reciprocal admittance blocks) and raises
    :class:`~flexopf.errors.InvariantViolation` subclasses on failure.
    """

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    devices: tuple[Device, ...]
    slack: int
    s_base_mva: float = 1.0
    v_base_kv: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(sorted(self.buses, key=lambda b: b.id)))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "devices", tuple(self.devices))
        _validate_model(self)

    # --- indexing ------------------------------------------------------

    @cached_property
    def bus_by_id(self) -> dict[int, Bus]:
        return {b.id: b for b in self.buses}

    @cached_property
    def bus_phases(self) -> tuple[tuple[int, str], ...]:
        """Active bus-phase list in canonical order."""
        return tuple((b.id, p) for b in self.buses for p in b.phases)

    @cached_property
    def _bp_index(self) -> dict[tuple[int, str], int]:
        return {bp: i for i, bp in enumerate(self.bus_phases)}

    @property
    def nbp(self) -> int:
        return len(self.bus_phases)

    def index(self, bus: int, phase: str) -> int:
        try:
            return self._bp_index[(bus, phase)]
        except KeyError:
            raise KeyError(f"bus {bus} phase {phase} not in active index set") from None

    @cached_property
    def slack_indices(self) -> tuple[int, ...]:
        return tuple(self.index(self.slack, p) for p in self.bus_by_id[self.slack].phases)

    @cached_property
    def nonslack_indices(self) -> tuple[int, ...]:
        s = set(self.slack_indices)
        return tuple(i for i in range(self.nbp) if i not in s)

    @cached_property
    def slack_voltage(self) -> np.ndarray:
        """Nominal balanced voltages at the slack bus phases."""
        phs = self.bus_by_id[self.slack].phases
        return np.array([PHASE_ROTATION[_PHASE_POS[p]] for p in phs])

    def flat_voltage(self) -> np.ndarray:
        """Balanced 1 pu profile over the active bus-phase set."""
        return np.array([PHASE_ROTATION[_PHASE_POS[p]] for _, p in self.bus_phases])

    # --- device views ----------------------------------------------------

    @property
    def generators(self) -> tuple[Generator, ...]:
        return tuple(d for d in self.devices if isinstance(d, Generator))

    @property
    def storages(self) -> tuple[Storage, ...]:
        return tuple(d for d in self.devices if isinstance(d, Storage))

    @property
    def renewables(self) -> tuple[Renewable, ...]:
        return tuple(d for d in self.devices if isinstance(d, Renewable))

    @property
    def loads(self) -> tuple[Load, ...]:
        return tuple(d for d in self.devices if isinstance(d, Load))

    @cached_property
    def psi(self) -> np.ndarray:
        """Per bus-phase reactive/active coupling of load deviations.

        Bus-phases carrying a load inherit its q_factor; all others are 0,
        so recourse injections at generation-only nodes stay active-only.
        """
        psi = np.zeros(self.nbp)
        for ld in self.loads:
            for p in ld.phases:
                psi[self.index(ld.bus, p)] = ld.q_factor
        return psi


def _validate_model(model: FeederModel) -> None:
    ids = [b.id for b in model.buses]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise InvariantViolation(f"duplicate bus ids {dup}")
    id_set = set(ids)
    if model.slack not in id_set:
        raise InvariantViolation(f"slack bus {model.slack} is not a modeled bus")
    by_id = {b.id: b for b in model.buses}

    for b in model.buses:
        if not b.phases:
            raise InvariantViolation(f"bus {b.id} has no phases")
        if not (0.0 < b.v_min < b.v_max):
            raise InvariantViolation(f"bus {b.id}: need 0 < v_min < v_max, got [{b.v_min}, {b.v_max}]")

    seen_pairs: set[frozenset] = set()
    for ln in model.lines:
        for end in (ln.from_bus, ln.to_bus):
            if end not in id_set:
                raise DanglingBus(end)
        if ln.from_bus == ln.to_bus:
            raise InvariantViolation(f"line {ln.from_bus}-{ln.to_bus} is a self-loop")
        pair = frozenset((ln.from_bus, ln.to_bus))
        if pair in seen_pairs:
            raise DuplicateLine(ln.from_bus, ln.to_bus)
        seen_pairs.add(pair)
        for end in (ln.from_bus, ln.to_bus):
            missing = set(ln.phases) - set(by_id[end].phases)
            if missing:
                raise InvariantViolation(
                    f"line {ln.from_bus}-{ln.to_bus} uses phases {sorted(missing)} absent at bus {end}")
        y = np.asarray(ln.y_series, dtype=complex)
        if y.shape != (3, 3):
            raise InvariantViolation(f"line {ln.from_bus}-{ln.to_bus}: y_series must be 3x3")
        if not np.all(np.isfinite(y)):
            raise InvariantViolation(f"line {ln.from_bus}-{ln.to_bus}: non-finite admittance")
        if not np.allclose(y, y.T, atol=1e-12):
            raise InvariantViolation(f"line {ln.from_bus}-{ln.to_bus}: admittance block not reciprocal")

    for d in model.devices:
        if d.bus not in id_set:
            raise DanglingBus(d.bus)
        missing = set(d.phases) - set(by_id[d.bus].phases)
        if missing:
            raise InvariantViolation(f"device {d.id}: phases {sorted(missing)} absent at bus {d.bus}")

    flex_buses = [d.bus for d in model.devices if isinstance(d, (Generator, Storage))]
    if len(set(flex_buses)) != len(flex_buses):
        dup = sorted({b for b in flex_buses if flex_buses.count(b) > 1})
        raise InvariantViolation(f"more than one flexible device at bus(es) {dup}; "
                                 "per-bus reserves require at most one")


def build_admittance(model: FeederModel) -> np.ndarray:
    """Assemble the complex bus-phase admittance matrix.

    Returns an ``nbp x nbp`` complex matrix over the active bus-phase set.
    Lines are series-only (no shunts), stamped per coupled phase pair.
    """
    n = model.nbp
    Y = np.zeros((n, n), dtype=complex)
    for ln in model.lines:
        for pa in ln.phases:
            ia = model.index(ln.from_bus, pa)
            ja = model.index(ln.to_bus, pa)
            for pb in ln.phases:
                y = complex(ln.y_series[_PHASE_POS[pa], _PHASE_POS[pb]])
                if y == 0:
                    continue
                ib = model.index(ln.from_bus, pb)
                jb = model.index(ln.to_bus, pb)
                Y[ia, ib] += y
                Y[ja, jb] += y
                Y[ia, jb] -= y
                Y[ja, ib] -= y
    return Y


def line_flows(model: FeederModel, voltages: np.ndarray) -> dict[tuple[int, int, str], complex]:
    """Sending-end complex flow per (from, to, phase) by direct complex arithmetic.

    Serves as the independent oracle for the trace-form flow matrices; the
    reverse direction is obtained by swapping the endpoint order.
    """
    flows: dict[tuple[int, int, str], complex] = {}
    for ln in model.lines:
        for i, j in ((ln.from_bus, ln.to_bus), (ln.to_bus, ln.from_bus)):
            for pa in ln.phases:
                cur = 0j
                for pb in ln.phases:
                    y = complex(ln.y_series[_PHASE_POS[pa], _PHASE_POS[pb]])
                    cur += y * (voltages[model.index(i, pb)] - voltages[model.index(j, pb)])
                flows[(i, j, pa)] = voltages[model.index(i, pa)] * np.conj(cur)
    return flows


# --- feeder file I/O ---------------------------------------------------------

_DEVICE_KINDS = {"generator", "storage", "renewable", "load"}


def _require(mapping: dict, key: str, section: str):
    if key not in mapping:
        raise SchemaViolation(f"{section}.{key}" if section else key)
    return mapping[key]


def load_feeder(path: str | Path) -> FeederModel:
    """Load and validate a feeder file (JSON, explicit unit keys).

    Raises ParseError for malformed JSON, SchemaViolation for missing or
    ill-typed fields, and InvariantViolation subclasses for model defects.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read feeder file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc.msg}", exc.lineno, exc.colno) from exc
    return feeder_from_dict(doc)


def feeder_from_dict(doc: dict) -> FeederModel:
    if not isinstance(doc, dict):
        raise SchemaViolation("", "feeder document must be an object")
    base = _require(doc, "base", "")
    s_base = float(_require(base, "mva", "base"))
    v_base = float(_require(base, "kv", "base"))
    if "slack" not in doc:
        raise SchemaViolation("slack")
    slack = int(doc["slack"])

    buses = []
    for k, rec in enumerate(_require(doc, "buses", "")):
        sec = f"buses[{k}]"
        buses.append(Bus(
            id=int(_require(rec, "id", sec)),
            phases=_phase_tuple(_require(rec, "phases", sec)),
            v_min=float(rec.get("v_min_pu", 0.9)),
            v_max=float(rec.get("v_max_pu", 1.1)),
            vdi_limit=float(rec.get("vdi_limit", 0.1)),
        ))

    lines = []
    for k, rec in enumerate(_require(doc, "lines", "")):
        sec = f"lines[{k}]"
        yre = np.array(_require(rec, "y_series_re_pu", sec), dtype=float)
        yim = np.array(_require(rec, "y_series_im_pu", sec), dtype=float)
        if yre.shape != (3, 3) or yim.shape != (3, 3):
            raise SchemaViolation(f"{sec}.y_series_re_pu", "expected 3x3 matrices")
        lines.append(Line(
            from_bus=int(_require(rec, "from", sec)),
            to_bus=int(_require(rec, "to", sec)),
            phases=_phase_tuple(_require(rec, "phases", sec)),
            y_series=yre + 1j * yim,
            s_max=float(rec.get("s_max_pu", np.inf)),
        ))

    devices: list[Device] = []
    for k, rec in enumerate(doc.get("devices", [])):
        sec = f"devices[{k}]"
        kind = _require(rec, "kind", sec)
        if kind not in _DEVICE_KINDS:
            raise SchemaViolation(f"{sec}.kind", f"unknown device kind {kind!r}")
        common = dict(
            id=str(rec.get("id", f"{kind}{k}")),
            bus=int(_require(rec, "bus", sec)),
            phases=_phase_tuple(_require(rec, "phases", sec)),
        )
        s_base_f = s_base
        if kind == "generator":
            devices.append(Generator(
                **common,
                g_min=float(rec.get("g_min_mw", 0.0)) / s_base_f,
                g_max=float(_require(rec, "g_max_mw", sec)) / s_base_f,
                ramp_up=float(rec.get("ramp_up_mw", 1e9)) / s_base_f,
                ramp_down=float(rec.get("ramp_down_mw", 1e9)) / s_base_f,
                pf_min=float(rec.get("pf_min", 0.0)),
                pf_max=float(rec.get("pf_max", 1.0)),
                cost_a1=float(rec.get("cost_a1", 0.0)),
                cost_a2=float(rec.get("cost_a2", 0.0)),
                reserve_up_price=float(rec.get("reserve_up_price", 0.0)),
                reserve_dn_price=float(rec.get("reserve_dn_price", 0.0)),
            ))
        elif kind == "storage":
            devices.append(Storage(
                **common,
                soc_max=float(_require(rec, "soc_max_mwh", sec)) / s_base_f,
                soc_init=float(rec.get("soc_init_mwh", 0.0)) / s_base_f,
                ch_max=float(_require(rec, "ch_max_mw", sec)) / s_base_f,
                dis_max=float(_require(rec, "dis_max_mw", sec)) / s_base_f,
                efficiency=float(rec.get("efficiency", 0.9)),
                cost_b1=float(rec.get("cost_b1", 0.0)),
                cost_b0=float(rec.get("cost_b0", 0.0)),
                reserve_up_price=float(rec.get("reserve_up_price", 0.0)),
                reserve_dn_price=float(rec.get("reserve_dn_price", 0.0)),
            ))
        elif kind == "renewable":
            devices.append(Renewable(**common, capacity=float(rec.get("capacity_mw", 0.0)) / s_base_f))
        else:
            devices.append(Load(**common, q_factor=float(rec.get("q_factor", 0.0))))

    return FeederModel(
        buses=tuple(buses), lines=tuple(lines), devices=tuple(devices),
        slack=slack, s_base_mva=s_base, v_base_kv=v_base,
    )


def feeder_to_dict(model: FeederModel) -> dict:
    sb = model.s_base_mva
    doc: dict = {
        "schema": "flexopf-feeder/1",
        "base": {"mva": model.s_base_mva, "kv": model.v_base_kv},
        "slack": model.slack,
        "buses": [
            {"id": b.id, "phases": "".join(b.phases), "v_min_pu": b.v_min,
             "v_max_pu": b.v_max, "vdi_limit": b.vdi_limit}
            for b in model.buses
        ],
        "lines": [
            {"from": ln.from_bus, "to": ln.to_bus, "phases": "".join(ln.phases),
             "y_series_re_pu": np.asarray(ln.y_series).real.tolist(),
             "y_series_im_pu": np.asarray(ln.y_series).imag.tolist(),
             "s_max_pu": ln.s_max}
            for ln in model.lines
        ],
        "devices": [],
    }
    for d in model.devices:
        if isinstance(d, Generator):
            doc["devices"].append({
                "kind": "generator", "id": d.id, "bus": d.bus, "phases": "".join(d.phases),
                "g_min_mw": d.g_min * sb, "g_max_mw": d.g_max * sb,
                "ramp_up_mw": d.ramp_up * sb, "ramp_down_mw": d.ramp_down * sb,
                "pf_min": d.pf_min, "pf_max": d.pf_max,
                "cost_a1": d.cost_a1, "cost_a2": d.cost_a2,
                "reserve_up_price": d.reserve_up_price, "reserve_dn_price": d.reserve_dn_price,
            })
        elif isinstance(d, Storage):
            doc["devices"].append({
                "kind": "storage", "id": d.id, "bus": d.bus, "phases": "".join(d.phases),
                "soc_max_mwh": d.soc_max * sb, "soc_init_mwh": d.soc_init * sb,
                "ch_max_mw": d.ch_max * sb, "dis_max_mw": d.dis_max * sb,
                "efficiency": d.efficiency, "cost_b1": d.cost_b1, "cost_b0": d.cost_b0,
                "reserve_up_price": d.reserve_up_price, "reserve_dn_price": d.reserve_dn_price,
            })
        elif isinstance(d, Renewable):
            doc["devices"].append({
                "kind": "renewable", "id": d.id, "bus": d.bus, "phases": "".join(d.phases),
                "capacity_mw": d.capacity * sb,
            })
        else:
            doc["devices"].append({
                "kind": "load", "id": d.id, "bus": d.bus, "phases": "".join(d.phases),
                "q_factor": d.q_factor,
            })
    return doc


def save_feeder(model: FeederModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(feeder_to_dict(model), indent=2, sort_keys=True) + "\n")
