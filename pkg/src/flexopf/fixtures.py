"""Built-in fixture feeders and scenarios.

Small radial systems exercising mixed phase counts, device fleets sized like
the reference case study's tables, and scenario builders with configurable
uncertainty. These back the test suite, the acceptance criteria, and the CLI
examples; JSON copies ship as package data.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .network import Bus, FeederModel, Generator, Line, Load, Renewable, Storage
from .scenario import RiskConfig, Scenario, SourceSpec, Tariff
from .marginals import NormalMarginal


def data_path(name: str) -> Path:
    """Path of a packaged fixture file (e.g. 'four_bus.feeder.json')."""
    return Path(str(resources.files("flexopf").joinpath("data", name)))


def line_admittance(r: float, x: float, phases: str = "abc",
                    coupling: float = 0.35) -> np.ndarray:
    """3x3 series admittance block from self impedance and mutual coupling."""
    idx = ["abc".index(p) for p in phases]
    k = len(idx)
    z = np.full((k, k), coupling * complex(r, x), dtype=complex)
    np.fill_diagonal(z, complex(r, x))
    y = np.linalg.inv(z)
    y = 0.5 * (y + y.T)     # the inverse of a symmetric block is symmetric; enforce exactly
    out = np.zeros((3, 3), dtype=complex)
    for a in range(k):
        for b in range(k):
            out[idx[a], idx[b]] = y[a, b]
    return out


def two_bus(s_max: float = 3.0) -> FeederModel:
    """Slack plus one three-phase load bus."""
    return FeederModel(
        buses=(Bus(1, ("a", "b", "c")), Bus(2, ("a", "b", "c"))),
        lines=(Line(1, 2, ("a", "b", "c"), line_admittance(0.02, 0.06), s_max),),
        devices=(Load("ld2", 2, ("a", "b", "c"), q_factor=0.4),),
        slack=1,
    )


def two_bus_single_phase() -> FeederModel:
    """Minimal single-phase feeder: slack 'a' phase feeding one load."""
    return FeederModel(
        buses=(Bus(1, ("a",)), Bus(2, ("a",))),
        lines=(Line(1, 2, ("a",), line_admittance(0.03, 0.08, "a"), 2.0),),
        devices=(Load("ld2", 2, ("a",), q_factor=0.3),),
        slack=1,
    )


def four_bus(v_min: float = 0.9, v_max: float = 1.1, vdi_limit: float = 0.1,
             s_max_12: float = 3.0, gt_cost_a1: float = 30.0) -> FeederModel:
    """Radial 4-bus feeder: turbine at 3, storage at 4, wind at 2a and 4b."""
    abc = ("a", "b", "c")
    return FeederModel(
        buses=(
            Bus(1, abc, v_min, v_max, vdi_limit),
            Bus(2, abc, v_min, v_max, vdi_limit),
            Bus(3, abc, v_min, v_max, vdi_limit),
            Bus(4, abc, v_min, v_max, vdi_limit),
        ),
        lines=(
            Line(1, 2, abc, line_admittance(0.02, 0.05), s_max_12),
            Line(2, 3, abc, line_admittance(0.03, 0.07), 2.0),
            Line(3, 4, abc, line_admittance(0.03, 0.08), 2.0),
        ),
        devices=(
            Load("ld2", 2, abc, q_factor=0.35),
            Load("ld3", 3, abc, q_factor=0.40),
            Load("ld4", 4, abc, q_factor=0.30),
            Generator("gt3", 3, abc, g_min=0.0, g_max=0.84, ramp_up=0.6, ramp_down=0.6,
                      pf_min=0.1, pf_max=0.9, cost_a1=gt_cost_a1, cost_a2=8e-3,
                      reserve_up_price=4.0, reserve_dn_price=3.0),
            Storage("es4", 4, abc, soc_max=0.52, soc_init=0.26, ch_max=0.42, dis_max=0.42,
                    efficiency=0.9, cost_b1=0.10,
                    reserve_up_price=2.5, reserve_dn_price=2.0),
            Renewable("wt2", 2, ("a",), capacity=0.15),
            Renewable("wt4", 4, ("b",), capacity=0.15),
        ),
        slack=1,
    )


_FOUR_BUS_LOADS = {
    (2, "a"): 0.10, (2, "b"): 0.12, (2, "c"): 0.08,
    (3, "a"): 0.15, (3, "b"): 0.10, (3, "c"): 0.12,
    (4, "a"): 0.12, (4, "b"): 0.14, (4, "c"): 0.10,
}


def four_bus_scenario(horizon: int = 2, sigma: tuple[float, float] = (0.02, 0.02),
                      spearman: float = 0.0, risk: RiskConfig | None = None,
                      load_scale: float = 1.0, wind: float = 0.10,
                      mu: tuple[float, float] = (0.0, 0.0)) -> Scenario:
    profile = np.linspace(1.0, 1.05, horizon)
    load_p = {bp: base * load_scale * profile for bp, base in _FOUR_BUS_LOADS.items()}
    renewable_p = {
        (2, "a"): np.full(horizon, wind),
        (4, "b"): np.full(horizon, wind),
    }
    rho = np.array([[1.0, spearman], [spearman, 1.0]])
    return Scenario(
        horizon=horizon, dt_hours=1.0,
        tariff=Tariff(tou=tuple(35.0 + 5.0 * np.arange(horizon) % 10), q_price_factor=0.2),
        load_p=load_p, renewable_p=renewable_p,
        risk=risk or RiskConfig(),
        sources=(
            SourceSpec("w2a", 2, "a", NormalMarginal(mu[0], sigma[0])),
            SourceSpec("w4b", 4, "b", NormalMarginal(mu[1], sigma[1])),
        ),
        spearman=rho,
    )


def pinned_feeder(gt_cost_a1: float = 55.0) -> FeederModel:
    """Feeder with a single single-phase flexible unit.

    One flexible bus-phase plus a participation floor of one pins the policy
    exactly, which is what the closed-form price-reduction checks need.
    """
    abc = ("a", "b", "c")
    return FeederModel(
        buses=(
            Bus(1, abc, 0.85, 1.1, 0.1),
            Bus(2, abc, 0.9, 1.1, 0.1),
            Bus(3, abc, 0.9, 1.1, 0.1),
            Bus(4, abc, 0.9, 1.1, 0.1),
        ),
        lines=(
            Line(1, 2, abc, line_admittance(0.02, 0.05), 3.0),
            Line(2, 3, abc, line_admittance(0.03, 0.07), 2.0),
            Line(3, 4, abc, line_admittance(0.03, 0.08), 2.0),
        ),
        devices=(
            Load("ld2", 2, abc, q_factor=0.35),
            Load("ld4", 4, abc, q_factor=0.30),
            Generator("gt3", 3, ("a",), g_min=0.0, g_max=0.9, ramp_up=0.9, ramp_down=0.9,
                      pf_min=0.0, pf_max=0.6, cost_a1=gt_cost_a1, cost_a2=8e-3,
                      reserve_up_price=4.0, reserve_dn_price=3.0),
            Renewable("wt2", 2, ("a",), capacity=0.15),
        ),
        slack=1,
    )


_PINNED_LOADS = {
    (2, "a"): 0.20, (2, "b"): 0.24, (2, "c"): 0.18,
    (4, "a"): 0.24, (4, "b"): 0.26, (4, "c"): 0.22,
}


def pinned_scenario(sigma: float = 0.01, risk: RiskConfig | None = None) -> Scenario:
    load_p = {bp: np.array([base]) for bp, base in _PINNED_LOADS.items()}
    renewable_p = {(2, "a"): np.array([0.05])}
    return Scenario(
        horizon=1, dt_hours=1.0,
        tariff=Tariff(tou=(40.0,), q_price_factor=0.2),
        load_p=load_p, renewable_p=renewable_p,
        risk=risk or RiskConfig(beta_floor=1.0),
        sources=(SourceSpec("w2a", 2, "a", NormalMarginal(0.0, sigma)),),
        spearman=np.array([[1.0]]),
    )


def chance_feeder(v_min: float = 0.9, s_max_12: float = 3.0,
                  gt_cost_a1: float = 55.0) -> FeederModel:
    """Chance-validation feeder with an uncancellable reactive channel.

    The heavy reactive coupling sits at the uncertainty bus while the
    flexible buses are nearly unity-power-factor, so the policy cannot drive
    the reactive response (and hence the stochastic margins) to zero.
    Calibrated variants: v_min=0.988 binds the lower-voltage rows,
    s_max_12=1.75 binds the flow rows; both stay rank-tight.
    """
    abc = ("a", "b", "c")
    return FeederModel(
        buses=(
            Bus(1, abc, 0.85, 1.15, 0.1),
            Bus(2, abc, v_min, 1.1, 0.1),
            Bus(3, abc, v_min, 1.1, 0.1),
            Bus(4, abc, v_min, 1.1, 0.1),
        ),
        lines=(
            Line(1, 2, abc, line_admittance(0.02, 0.05), s_max_12),
            Line(2, 3, abc, line_admittance(0.03, 0.07), 2.0),
            Line(3, 4, abc, line_admittance(0.03, 0.08), 2.0),
        ),
        devices=(
            Load("ld2", 2, abc, q_factor=0.60),
            Load("ld3", 3, abc, q_factor=0.05),
            Load("ld4", 4, abc, q_factor=0.05),
            Generator("gt3", 3, abc, g_min=0.0, g_max=0.84, ramp_up=0.6, ramp_down=0.6,
                      pf_min=0.1, pf_max=0.9, cost_a1=gt_cost_a1, cost_a2=8e-3,
                      reserve_up_price=4.0, reserve_dn_price=3.0),
            Storage("es4", 4, abc, soc_max=0.52, soc_init=0.26, ch_max=0.42, dis_max=0.42,
                    efficiency=0.9, cost_b1=0.10, reserve_up_price=2.5, reserve_dn_price=2.0),
            Renewable("wt2", 2, ("a",), capacity=0.15),
            Renewable("wt4", 4, ("b",), capacity=0.15),
        ),
        slack=1,
    )


def chance_scenario(sigma: float = 0.003, spearman: float = 0.0) -> Scenario:
    return four_bus_scenario(horizon=1, load_scale=2.0, wind=0.05,
                             sigma=(sigma, sigma), spearman=spearman,
                             risk=RiskConfig(beta_floor=0.5))


def ieee34_reduced(v_min: float = 0.9, v_max: float = 1.1,
                   vdi_limit: float = 0.1) -> FeederModel:
    """Thirteen-bus reduction of the modified 34-bus study system.

    Keeps the trunk, two reduced laterals with missing phases, and a fleet
    with the reference parameter blocks (two turbines, two storages, two
    wind sites).
    """
    abc = ("a", "b", "c")
    ab = ("a", "b")
    c_ = ("c",)

    def bus(i, ph=abc):
        return Bus(i, ph, v_min, v_max, vdi_limit)

    buses = (
        bus(1), bus(2), bus(3), bus(4), bus(5), bus(6), bus(7), bus(8),
        bus(9, ab), bus(10, ab), bus(11, c_), bus(12), bus(13),
    )
    lines = (
        Line(1, 2, abc, line_admittance(0.015, 0.04), 3.0),
        Line(2, 3, abc, line_admittance(0.020, 0.05), 2.5),
        Line(3, 4, abc, line_admittance(0.025, 0.06), 2.0),
        Line(4, 5, abc, line_admittance(0.025, 0.06), 2.0),
        Line(5, 6, abc, line_admittance(0.030, 0.07), 1.5),
        Line(6, 7, abc, line_admittance(0.030, 0.07), 1.5),
        Line(7, 8, abc, line_admittance(0.035, 0.08), 1.0),
        Line(3, 9, ab, line_admittance(0.040, 0.08, "ab"), 0.8),
        Line(9, 10, ab, line_admittance(0.040, 0.08, "ab"), 0.8),
        Line(5, 11, c_, line_admittance(0.050, 0.10, "c"), 0.5),
        Line(6, 12, abc, line_admittance(0.030, 0.07), 1.2),
        Line(12, 13, abc, line_admittance(0.030, 0.07), 1.2),
    )
    devices = (
        Load("ld2", 2, abc, 0.35), Load("ld4", 4, abc, 0.40),
        Load("ld5", 5, abc, 0.35), Load("ld7", 7, abc, 0.40),
        Load("ld8", 8, abc, 0.30), Load("ld10", 10, ab, 0.35),
        Load("ld11", 11, c_, 0.30), Load("ld13", 13, abc, 0.35),
        Generator("gt6", 6, abc, g_min=0.0, g_max=0.84, ramp_up=0.6, ramp_down=0.6,
                  pf_min=0.1, pf_max=0.9, cost_a1=30.0, cost_a2=8e-3,
                  reserve_up_price=4.5, reserve_dn_price=3.5),
        Generator("gt12", 12, abc, g_min=0.0, g_max=0.72, ramp_up=0.4, ramp_down=0.4,
                  pf_min=0.1, pf_max=0.9, cost_a1=35.0, cost_a2=1.1e-2,
                  reserve_up_price=5.0, reserve_dn_price=4.0),
        Storage("es8", 8, abc, soc_max=0.20, soc_init=0.10, ch_max=0.15, dis_max=0.15,
                efficiency=0.9, cost_b1=0.11, reserve_up_price=2.5, reserve_dn_price=2.0),
        Storage("es13", 13, abc, soc_max=0.52, soc_init=0.26, ch_max=0.42, dis_max=0.42,
                efficiency=0.9, cost_b1=0.10, reserve_up_price=2.2, reserve_dn_price=1.8),
        Renewable("wt4", 4, ("a",), capacity=0.15),
        Renewable("wt10", 10, ("b",), capacity=0.15),
    )
    return FeederModel(buses=buses, lines=lines, devices=devices, slack=1)


_R34_LOADS = {
    2: (0.030, 0.035, 0.030), 4: (0.040, 0.030, 0.035), 5: (0.035, 0.040, 0.030),
    7: (0.040, 0.035, 0.040), 8: (0.030, 0.030, 0.035), 13: (0.040, 0.040, 0.035),
}


def ieee34_reduced_scenario(horizon: int = 2, sigma: float = 0.01,
                            spearman: np.ndarray | None = None,
                            risk: RiskConfig | None = None,
                            load_scale: float = 1.0) -> Scenario:
    profile = np.linspace(1.0, 1.08, horizon)
    load_p: dict[tuple[int, str], np.ndarray] = {}
    for bus, (pa, pb, pc) in _R34_LOADS.items():
        for ph, val in zip("abc", (pa, pb, pc)):
            load_p[(bus, ph)] = val * load_scale * profile
    load_p[(10, "a")] = 0.030 * load_scale * profile
    load_p[(10, "b")] = 0.035 * load_scale * profile
    load_p[(11, "c")] = 0.040 * load_scale * profile
    renewable_p = {(4, "a"): np.full(horizon, 0.08), (10, "b"): np.full(horizon, 0.08)}
    if spearman is None:
        spearman = np.array([[1.0, 0.4], [0.4, 1.0]])
    return Scenario(
        horizon=horizon, dt_hours=1.0,
        tariff=Tariff(tou=tuple(38.0 + 4.0 * (np.arange(horizon) % 2)), q_price_factor=0.2),
        load_p=load_p, renewable_p=renewable_p,
        risk=risk or RiskConfig(),
        sources=(
            SourceSpec("w4a", 4, "a", NormalMarginal(0.0, sigma)),
            SourceSpec("w10b", 10, "b", NormalMarginal(0.0, sigma)),
        ),
        spearman=spearman,
    )


_IEEE34_TRUNK = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17]
_IEEE34_LATERALS = {
    # branch point -> chain of new buses (phase set)
    3: ([18, 19, 20], "abc"),
    6: ([21, 22], "abc"),
    9: ([23, 24, 25], "ab"),
    11: ([26, 27], "abc"),
    13: ([28, 29, 30], "abc"),
    15: ([31, 32], "abc"),
    16: ([33, 34], "c"),
}


def ieee34_mod(v_min: float = 0.9, v_max: float = 1.1, vdi_limit: float = 0.1) -> FeederModel:
    """Modified 34-bus system with the reference device fleet.

    Storage at nodes 8, 11, 26; turbines at 6, 9, 19; four wind sites at
    8, 21, 26, 32 (0.15 MW each). Topology is a radial trunk with seven
    laterals, two of them on reduced phase sets.
    """
    abc = ("a", "b", "c")
    phase_of: dict[int, tuple[str, ...]] = {i: abc for i in _IEEE34_TRUNK}
    lines: list[Line] = []
    for a, b in zip(_IEEE34_TRUNK[:-1], _IEEE34_TRUNK[1:]):
        lines.append(Line(a, b, abc, line_admittance(0.02, 0.05), 3.0))
    for root, (chain, phs) in _IEEE34_LATERALS.items():
        prev = root
        pt = tuple(phs)
        for nb in chain:
            phase_of[nb] = pt
            lines.append(Line(prev, nb, pt, line_admittance(0.035, 0.08, phs), 1.0))
            prev = nb
    buses = tuple(Bus(i, phase_of[i], v_min, v_max, vdi_limit) for i in sorted(phase_of))

    devices: list = []
    for bus in sorted(phase_of):
        if bus in (1, 6, 9, 19):
            continue
        devices.append(Load(f"ld{bus}", bus, phase_of[bus], q_factor=0.35))
    devices += [
        Storage("es8", 8, abc, soc_max=0.20, soc_init=0.10, ch_max=0.15, dis_max=0.15,
                efficiency=0.9, cost_b1=0.11, reserve_up_price=2.5, reserve_dn_price=2.0),
        Storage("es11", 11, abc, soc_max=0.52, soc_init=0.26, ch_max=0.42, dis_max=0.42,
                efficiency=0.9, cost_b1=0.10, reserve_up_price=2.2, reserve_dn_price=1.8),
        Storage("es26", 26, abc, soc_max=0.20, soc_init=0.10, ch_max=0.15, dis_max=0.15,
                efficiency=0.9, cost_b1=0.19, reserve_up_price=2.8, reserve_dn_price=2.4),
        Generator("gt6", 6, abc, g_min=0.0, g_max=0.84, ramp_up=0.6, ramp_down=0.6,
                  pf_min=0.1, pf_max=0.9, cost_a1=30.0, cost_a2=8e-3,
                  reserve_up_price=4.5, reserve_dn_price=3.5),
        Generator("gt9", 9, abc, g_min=0.0, g_max=0.72, ramp_up=0.4, ramp_down=0.4,
                  pf_min=0.1, pf_max=0.9, cost_a1=35.0, cost_a2=1.1e-2,
                  reserve_up_price=5.0, reserve_dn_price=4.0),
        Generator("gt19", 19, abc, g_min=0.0, g_max=0.96, ramp_up=0.8, ramp_down=0.8,
                  pf_min=0.1, pf_max=0.9, cost_a1=40.0, cost_a2=1.2e-2,
                  reserve_up_price=5.5, reserve_dn_price=4.5),
        Renewable("wt8", 8, ("a",), capacity=0.15),
        Renewable("wt21", 21, ("b",), capacity=0.15),
        Renewable("wt26", 26, ("c",), capacity=0.15),
        Renewable("wt32", 32, ("a",), capacity=0.15),
    ]
    return FeederModel(buses=buses, lines=tuple(lines), devices=tuple(devices),
                       slack=1, s_base_mva=1.0, v_base_kv=24.9)
