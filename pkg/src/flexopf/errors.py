"""Exception hierarchy for flexopf.

Errors carry the offending identifiers so callers (and the CLI) can report
actionable messages without string parsing.
"""

from __future__ import annotations


class FlexOpfError(Exception):
    """Base class for all package errors."""


# --- feeder model / file ----------------------------------------------------

class FeederError(FlexOpfError):
    pass


class ParseError(FeederError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{loc}")


class SchemaViolation(FeederError):
    def __init__(self, field: str, message: str = ""):
        self.field = field
        super().__init__(f"schema violation at '{field}'" + (f": {message}" if message else ""))


class InvariantViolation(FeederError):
    pass


class DuplicateLine(InvariantViolation):
    def __init__(self, from_bus, to_bus):
        self.from_bus = from_bus
        self.to_bus = to_bus
        super().__init__(f"duplicate line between buses {from_bus} and {to_bus}")


class DanglingBus(InvariantViolation):
    def __init__(self, bus_id):
        self.bus_id = bus_id
        super().__init__(f"line endpoint references unknown bus {bus_id}")


class DimensionMismatch(FlexOpfError):
    pass


# --- uncertainty ------------------------------------------------------------

class UncertaintyError(FlexOpfError):
    pass


class InsufficientSamples(UncertaintyError):
    def __init__(self, have: int, need: int):
        self.have = have
        self.need = need
        super().__init__(f"need at least {need} history samples, have {have}")


class NotPSD(UncertaintyError):
    def __init__(self, min_eigenvalue: float):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(f"matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")


# --- optimization -----------------------------------------------------------

class ProgramError(FlexOpfError):
    pass


class MissingForecast(ProgramError):
    def __init__(self, bus, phase, kind: str):
        self.bus = bus
        self.phase = phase
        self.kind = kind
        super().__init__(f"missing {kind} forecast for bus {bus} phase {phase}")


class InfeasibleBoundsDetectedAtAssembly(ProgramError):
    pass


class SolverFailure(FlexOpfError):
    def __init__(self, status: str, message: str = ""):
        self.status = status
        super().__init__(f"solver failed with status '{status}'" + (f": {message}" if message else ""))


class Infeasible(SolverFailure):
    def __init__(self, message: str = ""):
        super().__init__("infeasible", message)


class RankDeficient(FlexOpfError):
    pass


class SingularAtOperatingPoint(FlexOpfError):
    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"injection Jacobian is numerically singular (cond {condition:.3e}); "
                         "operating point is close to voltage collapse")


class ShapeMismatch(FlexOpfError):
    pass


class InvalidEpsilon(FlexOpfError):
    def __init__(self, name: str, value: float):
        self.name = name
        self.value = value
        super().__init__(f"{name}={value} outside (0, 0.5]")


class InfeasibleFloor(FlexOpfError):
    pass


# --- pricing / settlement ---------------------------------------------------

class PricingError(FlexOpfError):
    pass


class DegenerateNorm(PricingError):
    """Raised where a price expression has a vanishing norm denominator."""

    def __init__(self, where: str, norm: float):
        self.where = where
        self.norm = norm
        super().__init__(f"price undefined at {where}: norm denominator {norm:.3e} below floor")


class SufficiencyViolation(PricingError):
    def __init__(self, gap: float):
        self.gap = gap
        super().__init__(f"settlement identity violated beyond tolerance (gap {gap:.3e}); "
                         "this signals a dual-extraction defect")


# --- power flow -------------------------------------------------------------

class NonConvergence(FlexOpfError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"power flow did not converge after {iterations} iterations "
                         f"(residual {residual:.3e})")
