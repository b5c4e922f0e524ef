"""LUSGS solution of the block-sparse implicit system.

(D+L) D^-1 (D+U) dQ = RHS via one forward and one backward sweep in
lexicographic cell order (a topological order of the i+j+k hyperplane
sequence, so the result is identical to hyperplane ordering).  Ghost
increments are zero: boundary-facing terms are simply skipped.

The coupled kernels materialise each neighbour's dense (5+ns)^2 half-block
in a scratch matrix and multiply it out, which is the quadratic-in-ns cost
the component-split kernels avoid: those touch a 5x5 flow corner plus one
scalar coefficient per species.  All kernels are serial and BLAS-free, so
runs are deterministic.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import SingularDiagonal
from .implicit import ImplicitOperator


@njit(cache=True, fastmath=True, inline="always")
def _fill_halfblock(A, n, w, b, rho, uvel, S0, S1, S2, lam, sign):
    """A := (A_conv(neighbour state, face) + sign*lam*I)/2; returns u.S."""
    U = uvel[0] * S0 + uvel[1] * S1 + uvel[2] * S2
    for r in range(n):
        for c in range(n):
            A[r, c] = 0.0
    a0 = -0.5 * U / rho
    a1 = 0.5 * S0 / rho
    a2 = 0.5 * S1 / rho
    a3 = 0.5 * S2 / rho
    for r in range(n):
        wr = w[r]
        A[r, 0] += wr * a0
        A[r, 1] += wr * a1
        A[r, 2] += wr * a2
        A[r, 3] += wr * a3
    for c in range(n):
        bc = 0.5 * b[c]
        A[1, c] += S0 * bc
        A[2, c] += S1 * bc
        A[3, c] += S2 * bc
        A[4, c] += U * bc
    dv = 0.5 * (U + sign * lam)
    for r in range(n):
        A[r, r] += dv
    return U


@njit(cache=True, fastmath=True, inline="always")
def _matvec_acc(A, x, acc, n):
    for r in range(n):
        s = 0.0
        for c in range(n):
            s += A[r, c] * x[c]
        acc[r] += s


@njit(cache=True, fastmath=True)
def _ci_forward(dq, rhs, w, b, rho, uvel, Si, Sj, Sk, lamFi, lamFj, lamFk,
                dscal, dinv_blk, has_chem):
    ni, nj, nk, n = rhs.shape
    A = np.empty((n, n))
    acc = np.empty(n)
    for i in range(ni):
        for j in range(nj):
            for k in range(nk):
                for m in range(n):
                    acc[m] = rhs[i, j, k, m]
                if i > 0:
                    S = Si[i, j, k]
                    _fill_halfblock(A, n, w[i - 1, j, k], b[i - 1, j, k],
                                    rho[i - 1, j, k], uvel[i - 1, j, k],
                                    S[0], S[1], S[2], lamFi[i, j, k], 1.0)
                    _matvec_acc(A, dq[i - 1, j, k], acc, n)
                if j > 0:
                    S = Sj[i, j, k]
                    _fill_halfblock(A, n, w[i, j - 1, k], b[i, j - 1, k],
                                    rho[i, j - 1, k], uvel[i, j - 1, k],
                                    S[0], S[1], S[2], lamFj[i, j, k], 1.0)
                    _matvec_acc(A, dq[i, j - 1, k], acc, n)
                if k > 0:
                    S = Sk[i, j, k]
                    _fill_halfblock(A, n, w[i, j, k - 1], b[i, j, k - 1],
                                    rho[i, j, k - 1], uvel[i, j, k - 1],
                                    S[0], S[1], S[2], lamFk[i, j, k], 1.0)
                    _matvec_acc(A, dq[i, j, k - 1], acc, n)
                ds = dscal[i, j, k]
                if has_chem:
                    for m in range(5):
                        dq[i, j, k, m] = acc[m] / ds
                    nsb = n - 5
                    for r in range(nsb):
                        s = 0.0
                        for c in range(nsb):
                            s += dinv_blk[i, j, k, r, c] * acc[5 + c]
                        dq[i, j, k, 5 + r] = s
                else:
                    for m in range(n):
                        dq[i, j, k, m] = acc[m] / ds


@njit(cache=True, fastmath=True)
def _ci_backward(dq, w, b, rho, uvel, Si, Sj, Sk, lamFi, lamFj, lamFk,
                 dscal, dinv_blk, has_chem):
    ni, nj, nk, n = dq.shape
    A = np.empty((n, n))
    acc = np.empty(n)
    for i in range(ni - 1, -1, -1):
        for j in range(nj - 1, -1, -1):
            for k in range(nk - 1, -1, -1):
                for m in range(n):
                    acc[m] = 0.0
                if i < ni - 1:
                    S = Si[i + 1, j, k]
                    _fill_halfblock(A, n, w[i + 1, j, k], b[i + 1, j, k],
                                    rho[i + 1, j, k], uvel[i + 1, j, k],
                                    S[0], S[1], S[2], lamFi[i + 1, j, k], -1.0)
                    _matvec_acc(A, dq[i + 1, j, k], acc, n)
                if j < nj - 1:
                    S = Sj[i, j + 1, k]
                    _fill_halfblock(A, n, w[i, j + 1, k], b[i, j + 1, k],
                                    rho[i, j + 1, k], uvel[i, j + 1, k],
                                    S[0], S[1], S[2], lamFj[i, j + 1, k], -1.0)
                    _matvec_acc(A, dq[i, j + 1, k], acc, n)
                if k < nk - 1:
                    S = Sk[i, j, k + 1]
                    _fill_halfblock(A, n, w[i, j, k + 1], b[i, j, k + 1],
                                    rho[i, j, k + 1], uvel[i, j, k + 1],
                                    S[0], S[1], S[2], lamFk[i, j, k + 1], -1.0)
                    _matvec_acc(A, dq[i, j, k + 1], acc, n)
                ds = dscal[i, j, k]
                if has_chem:
                    for m in range(5):
                        dq[i, j, k, m] -= acc[m] / ds
                    nsb = n - 5
                    for r in range(nsb):
                        s = 0.0
                        for c in range(nsb):
                            s += dinv_blk[i, j, k, r, c] * acc[5 + c]
                        dq[i, j, k, 5 + r] -= s
                else:
                    for m in range(n):
                        dq[i, j, k, m] -= acc[m] / ds


@njit(cache=True, fastmath=True)
def _cs_forward(dq, rhs, w, b, rho, uvel, Si, Sj, Sk, lamFi, lamFj, lamFk,
                sp_lower, dflow, dinv_sp):
    ni, nj, nk, n = rhs.shape
    ns = n - 5
    A = np.empty((5, 5))
    acc = np.empty(5)
    accs = np.empty(ns)
    for i in range(ni):
        for j in range(nj):
            for k in range(nk):
                for m in range(5):
                    acc[m] = rhs[i, j, k, m]
                for s in range(ns):
                    accs[s] = rhs[i, j, k, 5 + s]
                if i > 0:
                    S = Si[i, j, k]
                    _fill_halfblock(A, 5, w[i - 1, j, k], b[i - 1, j, k],
                                    rho[i - 1, j, k], uvel[i - 1, j, k],
                                    S[0], S[1], S[2], lamFi[i, j, k], 1.0)
                    _matvec_acc(A, dq[i - 1, j, k], acc, 5)
                    cf = sp_lower[i - 1, j, k, 0]
                    for s in range(ns):
                        accs[s] += cf[s] * dq[i - 1, j, k, 5 + s]
                if j > 0:
                    S = Sj[i, j, k]
                    _fill_halfblock(A, 5, w[i, j - 1, k], b[i, j - 1, k],
                                    rho[i, j - 1, k], uvel[i, j - 1, k],
                                    S[0], S[1], S[2], lamFj[i, j, k], 1.0)
                    _matvec_acc(A, dq[i, j - 1, k], acc, 5)
                    cf = sp_lower[i, j - 1, k, 1]
                    for s in range(ns):
                        accs[s] += cf[s] * dq[i, j - 1, k, 5 + s]
                if k > 0:
                    S = Sk[i, j, k]
                    _fill_halfblock(A, 5, w[i, j, k - 1], b[i, j, k - 1],
                                    rho[i, j, k - 1], uvel[i, j, k - 1],
                                    S[0], S[1], S[2], lamFk[i, j, k], 1.0)
                    _matvec_acc(A, dq[i, j, k - 1], acc, 5)
                    cf = sp_lower[i, j, k - 1, 2]
                    for s in range(ns):
                        accs[s] += cf[s] * dq[i, j, k - 1, 5 + s]
                ds = dflow[i, j, k]
                for m in range(5):
                    dq[i, j, k, m] = acc[m] / ds
                dv = dinv_sp[i, j, k]
                for s in range(ns):
                    dq[i, j, k, 5 + s] = accs[s] * dv[s]


@njit(cache=True, fastmath=True)
def _cs_backward(dq, w, b, rho, uvel, Si, Sj, Sk, lamFi, lamFj, lamFk,
                 sp_upper, dflow, dinv_sp):
    ni, nj, nk, n = dq.shape
    ns = n - 5
    A = np.empty((5, 5))
    acc = np.empty(5)
    accs = np.empty(ns)
    for i in range(ni - 1, -1, -1):
        for j in range(nj - 1, -1, -1):
            for k in range(nk - 1, -1, -1):
                for m in range(5):
                    acc[m] = 0.0
                for s in range(ns):
                    accs[s] = 0.0
                if i < ni - 1:
                    S = Si[i + 1, j, k]
                    _fill_halfblock(A, 5, w[i + 1, j, k], b[i + 1, j, k],
                                    rho[i + 1, j, k], uvel[i + 1, j, k],
                                    S[0], S[1], S[2], lamFi[i + 1, j, k], -1.0)
                    _matvec_acc(A, dq[i + 1, j, k], acc, 5)
                    cf = sp_upper[i + 1, j, k, 0]
                    for s in range(ns):
                        accs[s] += cf[s] * dq[i + 1, j, k, 5 + s]
                if j < nj - 1:
                    S = Sj[i, j + 1, k]
                    _fill_halfblock(A, 5, w[i, j + 1, k], b[i, j + 1, k],
                                    rho[i, j + 1, k], uvel[i, j + 1, k],
                                    S[0], S[1], S[2], lamFj[i, j + 1, k], -1.0)
                    _matvec_acc(A, dq[i, j + 1, k], acc, 5)
                    cf = sp_upper[i, j + 1, k, 1]
                    for s in range(ns):
                        accs[s] += cf[s] * dq[i, j + 1, k, 5 + s]
                if k < nk - 1:
                    S = Sk[i, j, k + 1]
                    _fill_halfblock(A, 5, w[i, j, k + 1], b[i, j, k + 1],
                                    rho[i, j, k + 1], uvel[i, j, k + 1],
                                    S[0], S[1], S[2], lamFk[i, j, k + 1], -1.0)
                    _matvec_acc(A, dq[i, j, k + 1], acc, 5)
                    cf = sp_upper[i, j, k + 1, 2]
                    for s in range(ns):
                        accs[s] += cf[s] * dq[i, j, k + 1, 5 + s]
                ds = dflow[i, j, k]
                for m in range(5):
                    dq[i, j, k, m] -= acc[m] / ds
                dv = dinv_sp[i, j, k]
                for s in range(ns):
                    dq[i, j, k, 5 + s] -= accs[s] * dv[s]


def lusgs_solve(op: ImplicitOperator, rhs) -> np.ndarray:
    """Forward/backward LUSGS sweeps of the assembled operator; returns dQ."""
    rhs = np.ascontiguousarray(rhs, dtype=float)
    if np.min(np.abs(op.d_scal)) < 1e-300:
        raise SingularDiagonal("scalar diagonal underflow")
    dq = np.zeros_like(rhs)
    grid = op.grid
    Si, Sj, Sk = grid.Si, grid.Sj, grid.Sk
    lamFi, lamFj, lamFk = op.lam_face
    if op.mode == "CI":
        has_chem = op.dinv_species_block is not None
        dinv_blk = op.dinv_species_block if has_chem else np.zeros((1, 1, 1, 1, 1))
        _ci_forward(dq, rhs, op.w, op.b, op.rho, op.u, Si, Sj, Sk,
                    lamFi, lamFj, lamFk, op.d_scal, dinv_blk, has_chem)
        _ci_backward(dq, op.w, op.b, op.rho, op.u, Si, Sj, Sk,
                     lamFi, lamFj, lamFk, op.d_scal, dinv_blk, has_chem)
    else:
        if np.min(np.abs(op.d_species)) < 1e-300:
            raise SingularDiagonal("species diagonal underflow")
        dinv_sp = 1.0 / op.d_species
        _cs_forward(dq, rhs, op.w, op.b, op.rho, op.u, Si, Sj, Sk,
                    lamFi, lamFj, lamFk, op.sp_lower, op.d_scal, dinv_sp)
        _cs_backward(dq, op.w, op.b, op.rho, op.u, Si, Sj, Sk,
                     lamFi, lamFj, lamFk, op.sp_upper, op.d_scal, dinv_sp)
    return dq
