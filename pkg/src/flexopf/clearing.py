"""End-to-end market clearing pipeline.

A deterministic clearing fixes the operating point; voltages recovered from
its PSD blocks seed the sensitivity analysis; the risk-aware program is then
assembled with the policy-affine response kernels frozen at that point and
solved for dispatch, reserves, participation factors, and duals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .copula import UncertaintyModel
from .drcc import attach_drcc
from .errors import SolverFailure
from .network import FeederModel, build_admittance
from .opf import ClearingSolution, FlexInfo, assemble_deterministic, solve
from .program import ConicSolverInterface
from .recovery import VoltageRecovery, recover_voltages
from .scenario import Scenario
from .sensitivity import (
    ResponseKernels,
    build_jacobians,
    build_response_kernels,
    invert_js,
)
from .tracemat import TraceMatrixSet, build_trace_matrices, stack_voltage


@dataclass
class ClearingArtifacts:
    """Everything downstream consumers (pricing, validation, CLI) need.

    ``recoveries`` belong to the returned solution; the sensitivity kernels
    are frozen at the deterministic stage's operating point (whose
    recoveries are kept separately for audit).
    """

    model: FeederModel
    scenario: Scenario
    tm: TraceMatrixSet
    ybus: np.ndarray
    deterministic: ClearingSolution
    det_recoveries: list[VoltageRecovery]
    recoveries: list[VoltageRecovery]
    kernels: list[ResponseKernels] | None
    uncertainty: UncertaintyModel | None
    solution: ClearingSolution

    @property
    def risk_aware(self) -> bool:
        return self.kernels is not None


def clear_market(model: FeederModel, scenario: Scenario, det: bool = False,
                 solver: ConicSolverInterface | None = None,
                 tol: float = 1e-9) -> ClearingArtifacts:
    """Run the clearing pipeline; ``det`` stops after the deterministic stage."""
    ybus = build_admittance(model)
    tm = build_trace_matrices(model, ybus)

    prog_det = assemble_deterministic(model, tm, scenario)
    sol_det = solve(prog_det, solver=solver, tol=tol)
    if not sol_det.status == "Optimal":
        raise SolverFailure(sol_det.status, "deterministic stage did not solve to optimality")

    det_recoveries = [recover_voltages(model, W, ybus) for W in sol_det.W]
    if det:
        return ClearingArtifacts(
            model=model, scenario=scenario, tm=tm, ybus=ybus,
            deterministic=sol_det, det_recoveries=det_recoveries,
            recoveries=det_recoveries,
            kernels=None, uncertainty=None, solution=sol_det)

    unc = scenario.uncertainty_model(model)
    flex = FlexInfo.from_model(model)
    kernels = []
    for rec in det_recoveries:
        bundle = invert_js(model, build_jacobians(model, tm, stack_voltage(rec.voltages)))
        kernels.append(build_response_kernels(
            model, bundle, unc.a_xi, model.psi, flex.bus_phases,
            [(ln.from_bus, ln.to_bus) for ln in model.lines]))

    prog = assemble_deterministic(model, tm, scenario)
    attach_drcc(prog, unc, kernels, scenario.risk)
    sol = solve(prog, solver=solver, tol=tol)
    if not sol.status == "Optimal":
        raise SolverFailure(sol.status, "risk-aware stage did not solve to optimality")
    recoveries = [recover_voltages(model, W, ybus) for W in sol.W]
    sol.meta["recoveries"] = recoveries

    return ClearingArtifacts(
        model=model, scenario=scenario, tm=tm, ybus=ybus,
        deterministic=sol_det, det_recoveries=det_recoveries,
        recoveries=recoveries,
        kernels=kernels, uncertainty=unc, solution=sol)
