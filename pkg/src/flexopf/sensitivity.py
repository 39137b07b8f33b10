"""Operating-point sensitivities and system-wide response to uncertainty.

Every trace-form quantity Tr{A W} has gradient x^T (A + A^T) in the stacked
voltage vector, so the full injection Jacobian is assembled row-by-row from
the trace matrices. Inverting it on the subspace orthogonal to the pinned
slack coordinates turns nodal deviations into voltage responses; composing
with the flow/magnitude rows yields the linear maps from source deviations
to squared voltages and line flows.

The maps are affine in the participation factors: each flexible bus-phase
contributes one precomputed basis column, which is what keeps the
chance-constraint reformulations convex in the policy variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, SingularAtOperatingPoint
from .network import FeederModel
from .tracemat import TraceMatrixSet

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class SensitivityBundle:
    x: np.ndarray                  # operating point, stacked (2n,)
    JP: np.ndarray                 # (n, 2n) injection rows
    JQ: np.ndarray                 # (n, 2n)
    JV: np.ndarray                 # (n, 2n) squared-magnitude rows
    JPij: dict[tuple[int, int, str], np.ndarray]
    JQij: dict[tuple[int, int, str], np.ndarray]
    JS: np.ndarray                 # (2n, 2n) stacked [JP; JQ]
    js_inv: np.ndarray | None = None   # zeros reinserted at slack coordinates
    condition: float = np.nan


def build_jacobians(model: FeederModel, tm: TraceMatrixSet, x: np.ndarray) -> SensitivityBundle:
    """Rows x^T (A + A^T) for every stored trace matrix at operating point x."""
    n = model.nbp
    x = np.asarray(x, dtype=float)
    if x.shape != (2 * n,):
        raise ShapeMismatch(f"operating vector is {x.shape}, expected ({2 * n},)")
    # all stored matrices are symmetric, so the gradient is 2 A x
    JP = 2.0 * np.einsum("mij,j->mi", tm.Yp, x)
    JQ = 2.0 * np.einsum("mij,j->mi", tm.Yq, x)
    JV = 2.0 * np.einsum("mij,j->mi", tm.M, x)
    JPij = {key: 2.0 * (mat @ x) for key, mat in tm.PhiP.items()}
    JQij = {key: 2.0 * (mat @ x) for key, mat in tm.PhiQ.items()}
    JS = np.vstack([JP, JQ])
    return SensitivityBundle(x=x, JP=JP, JQ=JQ, JV=JV, JPij=JPij, JQij=JQij, JS=JS)


def invert_js(model: FeederModel, bundle: SensitivityBundle) -> SensitivityBundle:
    """Invert JS with the slack rows/columns removed, reinserting zeros.

    The full JS is singular because the pinned substation voltages do not
    move; deviations are specified at non-slack bus-phases and absorbed by
    the substation.
    """
    n = model.nbp
    ns = np.asarray(model.nonslack_indices)
    keep = np.concatenate([ns, ns + n])
    JS_red = bundle.JS[np.ix_(keep, keep)]
    cond = float(np.linalg.cond(JS_red))
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularAtOperatingPoint(cond)
    inv_red = np.linalg.inv(JS_red)
    js_inv = np.zeros((2 * n, 2 * n))
    js_inv[np.ix_(keep, keep)] = inv_red
    return SensitivityBundle(
        x=bundle.x, JP=bundle.JP, JQ=bundle.JQ, JV=bundle.JV,
        JPij=bundle.JPij, JQij=bundle.JQij, JS=bundle.JS,
        js_inv=js_inv, condition=cond)


@dataclass(frozen=True)
class ResponseMatrices:
    """Numeric response rows for a fixed policy (one period)."""

    XV: np.ndarray                         # (n, M) squared-voltage rows per bus-phase
    XP: dict[tuple[int, int, str], np.ndarray]
    XQ: dict[tuple[int, int, str], np.ndarray]
    K: np.ndarray                          # (2n, M) shared voltage-response kernel


def build_response(model: FeederModel, bundle: SensitivityBundle,
                   a_xi: np.ndarray, beta: np.ndarray, psi: np.ndarray) -> ResponseMatrices:
    """Response rows for policy matrix ``beta`` (nbp x M, zeros off-policy)."""
    if bundle.js_inv is None:
        raise ShapeMismatch("bundle has no inverse; call invert_js first")
    n = model.nbp
    a_xi = np.asarray(a_xi, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != a_xi.shape:
        raise ShapeMismatch(f"beta is {beta.shape}, expected {a_xi.shape}")
    top = -a_xi + beta
    bot = psi[:, None] * top
    K = bundle.js_inv @ np.vstack([top, bot])
    XV = bundle.JV @ K
    XP = {key: row @ K for key, row in bundle.JPij.items()}
    XQ = {key: row @ K for key, row in bundle.JQij.items()}
    return ResponseMatrices(XV=XV, XP=XP, XQ=XQ, K=K)


@dataclass(frozen=True)
class ResponseKernels:
    """Affine decomposition X(beta) = const + gamma . beta for one period.

    Rows cover non-slack bus-phases (voltage) and the phase-summed flow of
    every line; ``gamma[r, f]`` multiplies the policy entry of flexible
    bus-phase f, identically for every source column.
    """

    v_rows: tuple[tuple[int, str], ...]
    const_v: np.ndarray                    # (n_v, M)
    gamma_v: np.ndarray                    # (n_v, F)
    lines: tuple[tuple[int, int], ...]
    const_p: np.ndarray                    # (L, M) phase-summed sending-end rows
    gamma_p: np.ndarray                    # (L, F)
    const_q: np.ndarray
    gamma_q: np.ndarray
    ph_rows: tuple[tuple[int, int, str], ...]
    const_p_ph: np.ndarray                 # (n_ph, M) per-phase rows, reporting only
    gamma_p_ph: np.ndarray
    const_q_ph: np.ndarray
    gamma_q_ph: np.ndarray
    flex_bps: tuple[tuple[int, str], ...]
    basis: np.ndarray                      # (2n, F) js_inv columns for policy injections

    def xv(self, beta_flex: np.ndarray) -> np.ndarray:
        """XV rows for a policy given as an (F, M) matrix."""
        return self.const_v + self.gamma_v @ beta_flex

    def xp_sum(self, beta_flex: np.ndarray) -> np.ndarray:
        return self.const_p + self.gamma_p @ beta_flex

    def xq_sum(self, beta_flex: np.ndarray) -> np.ndarray:
        return self.const_q + self.gamma_q @ beta_flex


def build_response_kernels(model: FeederModel, bundle: SensitivityBundle,
                           a_xi: np.ndarray, psi: np.ndarray,
                           flex_bps, lines) -> ResponseKernels:
    """Precompute the beta-affine response decomposition."""
    if bundle.js_inv is None:
        raise ShapeMismatch("bundle has no inverse; call invert_js first")
    n = model.nbp
    a_xi = np.asarray(a_xi, dtype=float)
    psi = np.asarray(psi, dtype=float)

    top = -a_xi
    K0 = bundle.js_inv @ np.vstack([top, psi[:, None] * top])

    flex_bps = tuple(flex_bps)
    basis = np.zeros((2 * n, len(flex_bps)))
    for f, (bus, ph) in enumerate(flex_bps):
        m = model.index(bus, ph)
        basis[:, f] = bundle.js_inv[:, m] + psi[m] * bundle.js_inv[:, n + m]

    v_rows = tuple(bp for bp in model.bus_phases if bp[0] != model.slack)
    JVr = np.vstack([bundle.JV[model.index(*bp)] for bp in v_rows])
    const_v = JVr @ K0
    gamma_v = JVr @ basis

    lines = tuple(lines)
    ph_rows = []
    jp_ph, jq_ph = [], []
    for (i, j) in lines:
        for key in bundle.JPij:
            if key[0] == i and key[1] == j:
                ph_rows.append(key)
                jp_ph.append(bundle.JPij[key])
                jq_ph.append(bundle.JQij[key])
    jp_ph = np.vstack(jp_ph) if ph_rows else np.zeros((0, 2 * n))
    jq_ph = np.vstack(jq_ph) if ph_rows else np.zeros((0, 2 * n))

    jp_sum = np.zeros((len(lines), 2 * n))
    jq_sum = np.zeros((len(lines), 2 * n))
    for r, key in enumerate(ph_rows):
        li = lines.index((key[0], key[1]))
        jp_sum[li] += jp_ph[r]
        jq_sum[li] += jq_ph[r]

    return ResponseKernels(
        v_rows=v_rows,
        const_v=const_v, gamma_v=gamma_v,
        lines=lines,
        const_p=jp_sum @ K0, gamma_p=jp_sum @ basis,
        const_q=jq_sum @ K0, gamma_q=jq_sum @ basis,
        ph_rows=tuple(ph_rows),
        const_p_ph=jp_ph @ K0, gamma_p_ph=jp_ph @ basis,
        const_q_ph=jq_ph @ K0, gamma_q_ph=jq_ph @ basis,
        flex_bps=flex_bps,
        basis=basis,
    )


def embed_policy(model: FeederModel, flex_bps, beta_flex: np.ndarray) -> np.ndarray:
    """Lift an (F, M) policy matrix onto the full bus-phase space."""
    out = np.zeros((model.nbp, beta_flex.shape[1]))
    for f, (bus, ph) in enumerate(flex_bps):
        out[model.index(bus, ph)] = beta_flex[f]
    return out
