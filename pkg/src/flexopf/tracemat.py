"""Auxiliary symmetric matrices putting power-flow quantities in trace form.

With the stacked real voltage vector x = [Re(V); Im(V)] and W = x x^T, every
quantity the optimization touches becomes linear in W:

    injection      P_m  = Tr{Yp[m] W},   Q_m  = Tr{Yq[m] W}
    magnitude      |V_m|^2 = Tr{M[m] W}
    line flow      P_l^phi = Tr{PhiP[l, phi] W},  Q analog

Flow matrices are built for the sending ("from") end and include the full
cross-phase coupling of the line admittance block; the reverse direction is
obtained by swapping the endpoint order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .network import _PHASE_POS, FeederModel


@dataclass(frozen=True)
class TraceMatrixSet:
    """Dense symmetric coefficient matrices over the 2*nbp stacked space."""

    nbp: int
    Yp: np.ndarray                 # (nbp, 2n, 2n)
    Yq: np.ndarray                 # (nbp, 2n, 2n)
    M: np.ndarray                  # (nbp, 2n, 2n)
    PhiP: dict[tuple[int, int, str], np.ndarray]
    PhiQ: dict[tuple[int, int, str], np.ndarray]

    @property
    def dim(self) -> int:
        return 2 * self.nbp


def _sym_add(mat: np.ndarray, r: int, c: int, v: float) -> None:
    if r == c:
        mat[r, c] += v
    else:
        mat[r, c] += 0.5 * v
        mat[c, r] += 0.5 * v


def build_trace_matrices(model: FeederModel, Y: np.ndarray) -> TraceMatrixSet:
    """Construct the injection, magnitude, and flow trace matrices from Y."""
    n = model.nbp
    if Y.shape != (n, n):
        raise DimensionMismatch(f"admittance is {Y.shape}, expected ({n}, {n})")

    Yp = np.zeros((n, 2 * n, 2 * n))
    Yq = np.zeros((n, 2 * n, 2 * n))
    M = np.zeros((n, 2 * n, 2 * n))
    for m in range(n):
        ym = np.zeros_like(Y)
        ym[m, :] = Y[m, :]
        yr, yi = ym.real, ym.imag
        Yp[m] = 0.5 * np.block([[yr + yr.T, yi.T - yi], [yi - yi.T, yr + yr.T]])
        Yq[m] = -0.5 * np.block([[yi + yi.T, yr - yr.T], [yr.T - yr, yi + yi.T]])
        M[m, m, m] = 1.0
        M[m, m + n, m + n] = 1.0

    PhiP: dict[tuple[int, int, str], np.ndarray] = {}
    PhiQ: dict[tuple[int, int, str], np.ndarray] = {}
    for ln in model.lines:
        for i, j in ((ln.from_bus, ln.to_bus), (ln.to_bus, ln.from_bus)):
            for pa in ln.phases:
                P = np.zeros((2 * n, 2 * n))
                Q = np.zeros((2 * n, 2 * n))
                m = model.index(i, pa)
                for pb in ln.phases:
                    y = complex(ln.y_series[_PHASE_POS[pa], _PHASE_POS[pb]])
                    if y == 0:
                        continue
                    g, b = y.real, y.imag
                    mi = model.index(i, pb)
                    pj = model.index(j, pb)
                    # P_l^pa  = sum_pb  g(e_m e_mi + f_m f_mi) + b(f_m e_mi - e_m f_mi)
                    #                  - g(e_m e_pj + f_m f_pj) - b(f_m e_pj - e_m f_pj)
                    _sym_add(P, m, mi, g)
                    _sym_add(P, m + n, mi + n, g)
                    _sym_add(P, m + n, mi, b)
                    _sym_add(P, m, mi + n, -b)
                    _sym_add(P, m, pj, -g)
                    _sym_add(P, m + n, pj + n, -g)
                    _sym_add(P, m + n, pj, -b)
                    _sym_add(P, m, pj + n, b)
                    # Q_l^pa  = sum_pb  g(f_m e_mi - e_m f_mi) - b(e_m e_mi + f_m f_mi)
                    #                  - g(f_m e_pj - e_m f_pj) + b(e_m e_pj + f_m f_pj)
                    _sym_add(Q, m + n, mi, g)
                    _sym_add(Q, m, mi + n, -g)
                    _sym_add(Q, m, mi, -b)
                    _sym_add(Q, m + n, mi + n, -b)
                    _sym_add(Q, m + n, pj, -g)
                    _sym_add(Q, m, pj + n, g)
                    _sym_add(Q, m, pj, b)
                    _sym_add(Q, m + n, pj + n, b)
                PhiP[(i, j, pa)] = P
                PhiQ[(i, j, pa)] = Q

    return TraceMatrixSet(nbp=n, Yp=Yp, Yq=Yq, M=M, PhiP=PhiP, PhiQ=PhiQ)


def stack_voltage(voltages: np.ndarray) -> np.ndarray:
    """Complex bus-phase voltages -> stacked real vector [Re; Im]."""
    v = np.asarray(voltages)
    return np.concatenate([v.real, v.imag])


def unstack_voltage(x: np.ndarray) -> np.ndarray:
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def trace_value(A: np.ndarray, x: np.ndarray) -> float:
    """Tr{A x x^T} evaluated without forming the outer product."""
    return float(x @ A @ x)
