"""Nonlinear three-phase power flow (Newton, rectangular coordinates).

The hot kernel exists twice: a Cython extension built at install time and a
pure-numpy fallback with identical iteration semantics. Selection happens at
import; set FLEXOPF_PURE_PYTHON=1 to force the fallback (used by the
benchmark and the kernel-equivalence tests).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _pf_fallback
from .errors import NonConvergence
from .network import FeederModel, build_admittance

if os.environ.get("FLEXOPF_PURE_PYTHON"):
    _kernel = _pf_fallback
else:
    try:
        from . import _pf_kernel as _kernel  # type: ignore[attr-defined]
    except ImportError:
        _kernel = _pf_fallback

USING_COMPILED_KERNEL: bool = bool(getattr(_kernel, "COMPILED", False))


@dataclass(frozen=True)
class PowerFlowResult:
    voltages: np.ndarray          # complex per bus-phase
    iterations: int
    residual: float               # max complex mismatch magnitude, pu
    converged: bool


def run_powerflow(
    model: FeederModel,
    p_inj: np.ndarray,
    q_inj: np.ndarray,
    v0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 40,
    ybus: np.ndarray | None = None,
    raise_on_failure: bool = True,
) -> PowerFlowResult:
    """Solve the feeder power flow for specified bus-phase injections.

    ``p_inj``/``q_inj`` are net injections (generation positive) per active
    bus-phase; entries at the slack bus are ignored and the slack absorbs the
    residual. Raises :class:`NonConvergence` unless ``raise_on_failure`` is
    cleared, in which case the last iterate is returned flagged.
    """
    Y = build_admittance(model) if ybus is None else ybus
    ns = np.asarray(model.nonslack_indices, dtype=np.int64)
    slack = np.asarray(model.slack_indices, dtype=np.int64)
    if v0 is None:
        v0 = model.flat_voltage()
    V, iters, res, ok = _kernel.newton_solve(
        Y, ns, slack, model.slack_voltage,
        np.asarray(p_inj, dtype=float), np.asarray(q_inj, dtype=float),
        v0, tol, max_iter)
    if not ok and raise_on_failure:
        raise NonConvergence(int(iters), float(res))
    return PowerFlowResult(voltages=V, iterations=int(iters), residual=float(res), converged=bool(ok))


def run_powerflow_batch(
    model: FeederModel,
    p_batch: np.ndarray,
    q_batch: np.ndarray,
    v0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 40,
    ybus: np.ndarray | None = None,
):
    """Vectorized entry point for Monte Carlo: one solve per injection row.

    Returns (V_batch, iterations, residuals, converged) without raising;
    callers count non-converged rows explicitly.
    """
    Y = build_admittance(model) if ybus is None else ybus
    ns = np.asarray(model.nonslack_indices, dtype=np.int64)
    slack = np.asarray(model.slack_indices, dtype=np.int64)
    if v0 is None:
        v0 = model.flat_voltage()
    return _kernel.newton_solve_many(
        Y, ns, slack, model.slack_voltage,
        np.asarray(p_batch, dtype=float), np.asarray(q_batch, dtype=float),
        v0, tol, max_iter)


def injections(Y: np.ndarray, voltages: np.ndarray) -> np.ndarray:
    """Complex nodal injections V * conj(Y V)."""
    return voltages * np.conj(Y @ voltages)
