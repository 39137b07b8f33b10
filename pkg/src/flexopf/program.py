"""Tagged conic program wrapper and the pluggable solver interface.

Every emitted constraint row carries a ConstraintTag identifying its kind and
its (period, bus/line/device/phase/source) coordinates, so dual multipliers
can be fetched by constraint identity after the solve. The modeling layer is
cvxpy; any installed PSD+SOC-capable conic backend can run the program.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any

import cvxpy as cp
import numpy as np

from .errors import SolverFailure

DEFAULT_SOLVER = "CLARABEL"


@dataclass(frozen=True)
class ConstraintTag:
    """Identity of one scalar constraint row (or one PSD block)."""

    kind: str
    period: int = -1
    bus: int | None = None
    line: tuple[int, int] | None = None
    phase: str | None = None
    pair: tuple[str, str] | None = None
    device: str | None = None
    source: str | None = None

    def __str__(self) -> str:
        parts = [self.kind]
        if self.period >= 0:
            parts.append(f"t={self.period}")
        for name in ("bus", "line", "phase", "pair", "device", "source"):
            v = getattr(self, name)
            if v is not None:
                parts.append(f"{name}={v}")
        return "[" + " ".join(parts) + "]"


class ConicProgram:
    """Constraint container with a per-row tag registry.

    ``vars`` and ``meta`` are scratch registries the assembly passes between
    stages (deterministic core, policy block, DRCC emitters, extraction).
    """

    def __init__(self):
        self.constraints: list[Any] = []
        self.row_tags: list[list[ConstraintTag]] = []
        self.objective_terms: list[Any] = []
        self.vars: dict[str, Any] = {}
        self.meta: dict[str, Any] = {}

    def add(self, constraint, tags) -> None:
        """Register a constraint whose rows map one-to-one onto ``tags``."""
        if isinstance(tags, ConstraintTag):
            tags = [tags]
        self.constraints.append(constraint)
        self.row_tags.append(list(tags))

    def add_objective(self, expr) -> None:
        self.objective_terms.append(expr)

    def problem(self) -> cp.Problem:
        return cp.Problem(cp.Minimize(cp.sum(self.objective_terms)), self.constraints)

    def n_rows(self) -> int:
        return sum(len(t) for t in self.row_tags)


@dataclass
class SolveResult:
    status: str                                   # Optimal | Infeasible | Unbounded | NumericalLimit
    objective: float
    duals: dict[ConstraintTag, float]
    matrix_duals: dict[ConstraintTag, np.ndarray] = field(default_factory=dict)
    solver_name: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "Optimal"


class ConicSolverInterface:
    """Minimal contract: run a cvxpy problem, report a normalized status."""

    name: str = "abstract"

    def run(self, problem: cp.Problem, tol: float) -> str:
        raise NotImplementedError


class CvxpySolver(ConicSolverInterface):
    """Conic backend selected by argument or the FLEXOPF_SOLVER env var.

    Interior-point SDPs on degenerate instances routinely stall a hair short
    of the requested gap; Clarabel then certifies the iterate against its
    reduced tolerances, which we pin at 100x the request so an "almost
    solved" exit still guarantees usable dual accuracy.
    """

    def __init__(self, backend: str | None = None):
        self.name = (backend or os.environ.get("FLEXOPF_SOLVER") or DEFAULT_SOLVER).upper()

    def run(self, problem: cp.Problem, tol: float) -> str:
        kwargs: dict[str, Any] = {}
        accept_inaccurate = False
        if self.name == "CLARABEL":
            reduced = max(100.0 * tol, 1e-6)
            kwargs = {
                "tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol,
                "reduced_tol_gap_abs": reduced, "reduced_tol_gap_rel": reduced,
                "reduced_tol_feas": reduced, "max_iter": 200,
            }
            accept_inaccurate = True
        elif self.name == "SCS":
            kwargs = {"eps": tol, "max_iters": 200_000}
        try:
            problem.solve(solver=self.name, **kwargs)
        except cp.error.SolverError as exc:
            raise SolverFailure("error", str(exc)) from exc
        if accept_inaccurate and problem.status == cp.OPTIMAL_INACCURATE:
            return "Optimal"
        return _normalize_status(problem.status)


def _normalize_status(status: str | None) -> str:
    if status in (cp.OPTIMAL,):
        return "Optimal"
    if status in (cp.INFEASIBLE,):
        return "Infeasible"
    if status in (cp.UNBOUNDED,):
        return "Unbounded"
    return "NumericalLimit"


def solve_program(prog: ConicProgram, solver: ConicSolverInterface | None = None,
                  tol: float = 1e-9) -> SolveResult:
    """Solve and collect per-tag duals.

    Scalar and vector constraints flatten row-by-row onto their tags; PSD
    blocks keep their matrix dual under the block's single tag.
    """
    solver = solver or CvxpySolver()
    problem = prog.problem()
    status = solver.run(problem, tol)
    if status != "Optimal":
        # conic backends report Infeasible only after their internal dual-ray
        # certificate passes tolerance; the modeling layer does not expose
        # the ray itself
        obj = float("inf") if status == "Infeasible" else float("nan")
        return SolveResult(status=status, objective=obj, duals={},
                           solver_name=solver.name)

    duals: dict[ConstraintTag, float] = {}
    matrix_duals: dict[ConstraintTag, np.ndarray] = {}
    for con, tags in zip(prog.constraints, prog.row_tags):
        dv = con.dual_value
        if dv is None:
            for tag in tags:
                duals[tag] = 0.0
            continue
        dv = np.asarray(dv, dtype=float)
        if dv.ndim == 2 and dv.shape[0] == dv.shape[1] and dv.shape[0] > 1 and len(tags) == 1:
            matrix_duals[tags[0]] = dv
            continue
        flat = dv.reshape(-1)
        if flat.size != len(tags):
            raise SolverFailure(
                "internal", f"dual rows ({flat.size}) do not match tags ({len(tags)}) for {tags[0]}")
        for tag, val in zip(tags, flat):
            duals[tag] = float(val)
    return SolveResult(status=status, objective=float(problem.value),
                       duals=duals, matrix_duals=matrix_duals, solver_name=solver.name)
