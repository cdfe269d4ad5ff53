"""Compiled inner loops: tridiagonal Crank-Nicolson stepping and kernel accumulation."""
from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True)
def thomas_factor(lower, diag, upper):
    """Forward-elimination coefficients for a tridiagonal system, no pivoting.

    Returns (cprime, inv_denom) such that the solve only needs the rhs.
    """
    n = diag.shape[0]
    cprime = np.empty(n, dtype=np.complex128)
    inv_denom = np.empty(n, dtype=np.complex128)
    denom = diag[0]
    if denom == 0:
        raise ZeroDivisionError("singular tridiagonal system")
    inv_denom[0] = 1.0 / denom
    cprime[0] = upper[0] * inv_denom[0] if n > 1 else 0.0
    for i in range(1, n):
        denom = diag[i] - lower[i] * cprime[i - 1]
        if denom == 0:
            raise ZeroDivisionError("singular tridiagonal system")
        inv_denom[i] = 1.0 / denom
        cprime[i] = upper[i] * inv_denom[i] if i < n - 1 else 0.0
    return cprime, inv_denom


@njit(cache=True)
def thomas_solve(lower, cprime, inv_denom, rhs, out):
    n = rhs.shape[0]
    out[0] = rhs[0] * inv_denom[0]
    for i in range(1, n):
        out[i] = (rhs[i] - lower[i] * out[i - 1]) * inv_denom[i]
    for i in range(n - 2, -1, -1):
        out[i] -= cprime[i] * out[i + 1]


@njit(cache=True)
def cn_advance(u, n_steps, a_lower, b_diag, b_off, cprime, inv_denom):
    """Apply ``n_steps`` Cayley steps A u' = B u.

    B is symmetric tridiagonal (diag ``b_diag``, constant off-diagonal
    ``b_off``); A's lower band is ``a_lower`` with elimination data
    ``cprime``/``inv_denom``.
    """
    n = u.shape[0]
    cur = u.copy()
    rhs = np.empty(n, dtype=np.complex128)
    for _ in range(n_steps):
        rhs[0] = b_diag[0] * cur[0] + b_off * cur[1]
        for i in range(1, n - 1):
            rhs[i] = b_diag[i] * cur[i] + b_off * (cur[i - 1] + cur[i + 1])
        rhs[n - 1] = b_diag[n - 1] * cur[n - 1] + b_off * cur[n - 2]
        thomas_solve(a_lower, cprime, inv_denom, rhs, cur)
    return cur


@njit(parallel=True, fastmath={"reassoc", "contract"}, cache=True)
def accumulate_gram(Kr, Ki, Fr, Fi, Gr, Gi):
    """K[i, j] += sum_p G[i, p] conj(F[j, p]) for j >= i, split into real parts.

    G carries the quadrature weights (G = w F). Each entry is owned by one
    thread and reduced by the same compiled loop, so the result does not
    depend on the number of threads.
    """
    nx, npt = Fr.shape
    for i in prange(nx):
        for j in range(i, nx):
            ar = 0.0
            ai = 0.0
            for p in range(npt):
                ar += Gr[i, p] * Fr[j, p] + Gi[i, p] * Fi[j, p]
                ai += Gi[i, p] * Fr[j, p] - Gr[i, p] * Fi[j, p]
            Kr[i, j] += ar
            Ki[i, j] += ai
