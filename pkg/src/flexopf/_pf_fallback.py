"""Pure-numpy Newton power-flow kernel.

Reference implementation of the iteration contract shared with the compiled
kernel: rectangular-coordinate Newton on the complex mismatch
S(V) - S_spec at non-slack bus-phases, slack voltages held fixed.
"""

from __future__ import annotations

import numpy as np

COMPILED = False


def newton_solve(ybus, ns, slack, v_slack, p_spec, q_spec, v0, tol, max_iter):
    """Single Newton solve.

    Parameters
    ----------
    ybus : (n, n) complex admittance.
    ns : int array of non-slack bus-phase indices.
    slack : int array of slack bus-phase indices.
    v_slack : complex voltages pinned at the slack indices.
    p_spec, q_spec : (n,) injections in pu; entries at slack ignored.
    v0 : (n,) complex start profile.
    tol : infinity-norm mismatch tolerance in pu.
    max_iter : Newton iteration cap.

    Returns
    -------
    (V, iterations, residual, converged)
    """
    V = np.array(v0, dtype=complex)
    V[slack] = v_slack
    k = ns.size
    if k == 0:
        return V, 0, 0.0, True
    Yns = ybus[np.ix_(ns, ns)]
    Yns_c = np.conj(Yns)
    s_spec = p_spec[ns] + 1j * q_spec[ns]
    res = np.inf
    for it in range(max_iter):
        I = ybus @ V
        F = V[ns] * np.conj(I[ns]) - s_spec
        res = float(np.max(np.abs(F))) if k else 0.0
        if res < tol:
            return V, it, res, True
        dconj = np.conj(I[ns])
        dSdE = np.diag(dconj) + V[ns, None] * Yns_c
        dSdF = 1j * np.diag(dconj) - 1j * (V[ns, None] * Yns_c)
        J = np.empty((2 * k, 2 * k))
        J[:k, :k] = dSdE.real
        J[:k, k:] = dSdF.real
        J[k:, :k] = dSdE.imag
        J[k:, k:] = dSdF.imag
        rhs = np.concatenate([F.real, F.imag])
        try:
            dx = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            return V, it, res, False
        V[ns] = V[ns] - (dx[:k] + 1j * dx[k:])
    I = ybus @ V
    F = V[ns] * np.conj(I[ns]) - s_spec
    res = float(np.max(np.abs(F)))
    return V, max_iter, res, res < tol


def newton_solve_many(ybus, ns, slack, v_slack, p_batch, q_batch, v0, tol, max_iter):
    """Batch of Newton solves sharing topology and start profile.

    Returns (V_batch, iterations, residuals, converged) arrays with one row
    per injection sample.
    """
    nsamp = p_batch.shape[0]
    n = ybus.shape[0]
    V_out = np.empty((nsamp, n), dtype=complex)
    iters = np.empty(nsamp, dtype=np.int64)
    resids = np.empty(nsamp)
    ok = np.empty(nsamp, dtype=bool)
    for s in range(nsamp):
        V, it, res, conv = newton_solve(
            ybus, ns, slack, v_slack, p_batch[s], q_batch[s], v0, tol, max_iter)
        V_out[s] = V
        iters[s] = it
        resids[s] = res
        ok[s] = conv
    return V_out, iters, resids, ok
