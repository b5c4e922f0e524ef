"""Implicit pseudo-time machinery: flux Jacobians, operator assembly in
coupled (CI) and component-split (CS) form, time steps, dual-time terms, and
the two species consistency corrections.

The directed convective Jacobian A = d(F.S)/dQ of this mixture closure is
the rank-two update

    A = U I + w (grad U)^T + v (grad p)^T,
    w = Q + p e_E,   v = [0, S, U, 0..],   U = u.S,

whose eigenvalues are {U - c|S|, U + c|S|, U (x 3+ns)} and which satisfies
A Q = F.S exactly (degree-1 homogeneity).  The coupled operator materialises
it as dense (5+ns)^2 blocks; the split operator keeps the 5x5 flow corner
and reduces the species part to per-species scalars U +- lambda.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chemistry import source_jacobian
from .errors import NonPhysicalState, SingularDiagonal, ZeroWavespeed
from .grid import StructuredGrid
from .mixture import EPS_NEG, CellPrimitive, MixtureModel, cons_to_prim, species_enthalpy, transport

MODES = ("CI", "CS1", "CS2")


def local_time_step(lam_inv, lam_vis, lam_S, cfl, J):
    """CFL pseudo-time step from directional spectral radii.

    `lam_inv`/`lam_vis` hold one extensive radius (m^3/s) per direction on
    the last axis; `lam_S` is the source radius in 1/s.  dtau = CFL / (J *
    (sum lam_inv + sum lam_vis) + lam_S).
    """
    denom = np.asarray(J) * (np.sum(lam_inv, axis=-1) + np.sum(lam_vis, axis=-1)) \
        + np.asarray(lam_S)
    if np.any(denom <= 0.0):
        raise ZeroWavespeed("all spectral radii vanish; CFL step undefined")
    return np.asarray(cfl) / denom


def dual_time_rhs(R, q_m, q_n, q_nm1, theta, dt, volume):
    """RHS = -R - V[(1+theta)(Q^m - Q^n) - theta(Q^n - Q^{n-1})]/dt.

    Steady mode (dt None or inf) reduces to -R.
    """
    if dt is None or not np.isfinite(dt):
        return -np.asarray(R)
    V = np.asarray(volume)[..., np.newaxis]
    src = (1.0 + theta) * (q_m - q_n) - theta * (q_n - q_nm1)
    return -np.asarray(R) - V * src / dt


def _grad_p_row(prim: CellPrimitive, model: MixtureModel):
    """d p / d Q row: [beta Ek, -beta u, beta, gammaR_sT - beta h_s]."""
    beta = prim.gamma - 1.0
    n = 5 + model.ns
    b = np.empty(np.shape(prim.rho) + (n,))
    b[..., 0] = beta * prim.Ek
    b[..., 1:4] = -beta[..., np.newaxis] * prim.u
    b[..., 4] = beta
    h_s = species_enthalpy(prim.T, model)
    e_s = h_s - model.R_s * prim.T[..., np.newaxis]
    b[..., 5:] = model.R_s * prim.T[..., np.newaxis] - beta[..., np.newaxis] * e_s
    return b


def _w_column(prim: CellPrimitive, model: MixtureModel):
    """Q + p e_E = rho [1, u, h_total, Y_s]."""
    n = 5 + model.ns
    w = np.empty(np.shape(prim.rho) + (n,))
    w[..., 0] = prim.rho
    w[..., 1:4] = prim.rho[..., np.newaxis] * prim.u
    w[..., 4] = prim.rho * prim.h
    w[..., 5:] = prim.rho[..., np.newaxis] * prim.Y
    return w


def convective_jacobian(prim: CellPrimitive, face_metric, model: MixtureModel):
    """Dense d(F.S)/dQ at one state (the coupled scheme's full form)."""
    S = np.asarray(face_metric, dtype=float)
    n = 5 + model.ns
    U = float(prim.u @ S)
    w = _w_column(prim, model)
    b = _grad_p_row(prim, model)
    a = np.zeros(n)
    a[0] = -U / float(prim.rho)
    a[1:4] = S / float(prim.rho)
    v = np.zeros(n)
    v[1:4] = S
    v[4] = U
    A = np.outer(w, a) + np.outer(v, b)
    A[np.diag_indices(n)] += U
    return A


def spectral_split(A, lam):
    """A+- = (A +- lam I)/2; lam must dominate the spectral radius of A.

    The minus part is built as the exact complement A - A+, so the two parts
    always recombine to A bit-for-bit.
    """
    A = np.asarray(A, dtype=float)
    Ap = 0.5 * (A + lam * np.eye(A.shape[-1]))
    return Ap, A - Ap


def correct_increment_cs1(rho_s, d_rho_s, d_rho, eps_neg: float = EPS_NEG):
    """First consistency correction: redistribute the density-increment defect.

    rho_s^{m+1} = rho_s + d_rho_s + W_s (d_rho - sum_r d_rho_r) with current
    mass fractions W_s = rho_s/rho as weights (sum W_s = 1), so the species
    sum lands exactly on rho + d_rho.
    """
    rho_s = np.asarray(rho_s, dtype=float)
    rho = np.sum(rho_s, axis=-1, keepdims=True)
    defect = np.asarray(d_rho)[..., np.newaxis] - np.sum(d_rho_s, axis=-1, keepdims=True)
    out = rho_s + d_rho_s + (rho_s / rho) * defect
    _check_corrected(out, eps_neg)
    return out


def correct_normalize_cs2(rho_s, d_rho_s, d_rho, eps_neg: float = EPS_NEG):
    """Second consistency correction: rescale updated fractions onto rho + d_rho."""
    rho_s = np.asarray(rho_s, dtype=float)
    rho_new = np.sum(rho_s, axis=-1, keepdims=True) + np.asarray(d_rho)[..., np.newaxis]
    raw = rho_s + d_rho_s
    out = rho_new * raw / np.sum(raw, axis=-1, keepdims=True)
    _check_corrected(out, eps_neg)
    return out


def _check_corrected(rho_s, eps_neg):
    rho = np.sum(rho_s, axis=-1, keepdims=True)
    if np.any(rho_s < -eps_neg * rho) or np.any(rho <= 0.0):
        raise NonPhysicalState("consistency correction produced negative species density")


def _diffusivities(prim: CellPrimitive, model: MixtureModel):
    mu, k, D = transport(prim, model)
    cv = prim.Y @ model.cp_s - prim.Y @ model.R_s
    nu_flow = np.maximum(4.0 * mu / (3.0 * prim.rho), k / (prim.rho * cv))
    nu_sp = np.max(D, axis=-1)
    return nu_flow, nu_sp, np.maximum(nu_flow, nu_sp)


def cell_spectral_radii(prim: CellPrimitive, grid: StructuredGrid, model: MixtureModel):
    """Unified per-direction cell radii (lam_inv, lam_vis), each (...,3), m^3/s."""
    _, _, nu_u = _diffusivities(prim, model)
    lam_inv = np.empty(prim.rho.shape + (3,))
    lam_vis = np.empty_like(lam_inv)
    for d in range(3):
        Sc = grid.cell_face_avg(d)
        area2 = np.einsum("...c,...c->...", Sc, Sc)
        lam_inv[..., d] = np.abs(np.einsum("...c,...c->...", prim.u, Sc)) \
            + prim.c * np.sqrt(area2)
        lam_vis[..., d] = nu_u * area2 / grid.volume
    return lam_inv, lam_vis


def _cell_dir_radius(prim, grid, d, nu, species_only):
    """lam_inv + 2 lam_vis at the cell's averaged directional metric."""
    Sc = grid.cell_face_avg(d)
    area2 = np.einsum("...c,...c->...", Sc, Sc)
    lam = np.abs(np.einsum("...c,...c->...", prim.u, Sc))
    if not species_only:
        lam = lam + prim.c * np.sqrt(area2)
    return lam + 2.0 * nu * area2 / grid.volume


def _face_radius(prim, grid, d, nu, species_only):
    """Face radius: max over the two adjacent cells, evaluated at the face metric."""
    S = np.moveaxis(grid.face_areas(d), d, 0)
    area2 = np.einsum("...c,...c->...", S, S)
    area = np.sqrt(area2)
    u = np.moveaxis(prim.u, d, 0)
    c = np.moveaxis(prim.c, d, 0)
    V = np.moveaxis(grid.volume, d, 0)
    nu_m = np.moveaxis(nu, d, 0)

    def lam(cells, faces):
        val = np.abs(np.einsum("...c,...c->...", u[cells], S[faces]))
        if not species_only:
            val = val + c[cells] * area[faces]
        return val + 2.0 * nu_m[cells] * area2[faces] / V[cells]

    out = np.empty(S.shape[:-1])
    inner = slice(1, -1)
    out[inner] = np.maximum(lam(slice(None, -1), inner), lam(slice(1, None), inner))
    out[0] = lam(0, 0)
    out[-1] = lam(-1, -1)
    return np.ascontiguousarray(np.moveaxis(out, 0, d))


def _upper_lower_contravariant(prim, grid, d):
    """u_c . S at the cell's upper and lower d-faces (signed, m^3/s)."""
    S = np.moveaxis(grid.face_areas(d), d, 0)
    u = np.moveaxis(prim.u, d, 0)
    U_up = np.einsum("...c,...c->...", u, S[1:])
    U_lo = np.einsum("...c,...c->...", u, S[:-1])
    return (np.ascontiguousarray(np.moveaxis(U_up, 0, d)),
            np.ascontiguousarray(np.moveaxis(U_lo, 0, d)))


@dataclass
class ImplicitOperator:
    """Assembled left-hand side for one pseudo-time step.

    Diagonal: scalar part per cell plus (with chemistry) the species source
    block d_scal I - V dOmega (CI) or its diagonal (CS).  Off-diagonals are
    spectral-split Jacobian contributions, rebuilt from the stored state
    ingredients during the sweeps: dense blocks for CI, 5x5 flow blocks plus
    per-species scalars for CS.
    """

    mode: str
    grid: StructuredGrid
    model: MixtureModel
    # Jacobian ingredients per cell
    w: np.ndarray              # (ni,nj,nk,5+ns)
    b: np.ndarray              # (ni,nj,nk,5+ns)
    rho: np.ndarray
    u: np.ndarray              # (ni,nj,nk,3)
    # face radii per direction (group depends on mode)
    lam_face: tuple            # 3 arrays, shapes like the face arrays
    d_scal: np.ndarray         # (ni,nj,nk) flow/unified scalar diagonal
    # chemistry (None when frozen)
    vdom: Optional[np.ndarray] = None        # V * dOmega, (ni,nj,nk,ns,ns)
    dinv_species_block: Optional[np.ndarray] = None  # CI: inverse of species D block
    # CS-only pieces
    lam_face_sp: Optional[tuple] = None
    d_species: Optional[np.ndarray] = None   # (ni,nj,nk,ns)
    sp_lower: Optional[np.ndarray] = None    # (ni,nj,nk,3,ns) A+ scalars at upper faces
    sp_upper: Optional[np.ndarray] = None    # (ni,nj,nk,3,ns) A- scalars at lower faces
    sp_scale: float = 0.5

    @property
    def nvar(self) -> int:
        return self.w.shape[-1]

    # -- dense materialisation (tests, small-grid oracle) -------------------

    def _block(self, cell, S, lam, sign, flow_only=False):
        n = 5 if flow_only else self.nvar
        rho = self.rho[cell]
        U = float(self.u[cell] @ S)
        a = np.zeros(n)
        a[0] = -U / rho
        a[1:4] = S / rho
        v = np.zeros(n)
        v[1:4] = S
        v[4] = U
        A = np.outer(self.w[cell][:n], a) + np.outer(v, self.b[cell][:n])
        A[np.diag_indices(n)] += U + sign * lam
        return 0.5 * A

    def offdiag_block(self, cell, d, side):
        """Dense LHS coupling block of `cell` toward its (d, side) neighbour.

        side=0: coefficient multiplying the lower neighbour (-A+ at the shared
        face); side=1: the upper neighbour (+A- at the shared face).
        """
        i, j, k = cell
        nb = list(cell)
        nb[d] += 1 if side else -1
        nb = tuple(nb)
        fidx = list(cell)
        if side == 0:
            pass  # shared face has the cell's own index in the face array
        else:
            fidx[d] += 1
        S = self.grid.face_areas(d)[tuple(fidx)]
        lam = self.lam_face[d][tuple(fidx)]
        n = self.nvar
        out = np.zeros((n, n))
        if self.mode == "CI":
            blk = self._block(nb, S, lam, +1.0 if side == 0 else -1.0)
            return -blk if side == 0 else blk
        # CS: flow corner plus per-species scalar diagonal
        lam_sp = self.lam_face_sp[d][tuple(fidx)]
        flow = self._block(nb, S, lam, +1.0 if side == 0 else -1.0, flow_only=True)
        out[:5, :5] = -flow if side == 0 else flow
        U_nb = float(self.u[nb] @ S)
        coeff = self.sp_scale * (U_nb + lam_sp) if side == 0 else self.sp_scale * (U_nb - lam_sp)
        coeff = -coeff if side == 0 else coeff
        out[5:, 5:] = np.eye(self.nvar - 5) * coeff
        return out

    def diag_block(self, cell):
        n = self.nvar
        D = np.eye(n) * self.d_scal[cell]
        if self.mode == "CI":
            if self.vdom is not None:
                D[5:, 5:] -= self.vdom[cell]
        else:
            D[5:, 5:] = np.diag(self.d_species[cell])
        return D

    def dense_factored_matrix(self):
        """(D+L) D^-1 (D+U) of the whole operator as one dense matrix."""
        ni, nj, nk = self.grid.dims
        n = self.nvar
        N = ni * nj * nk
        idx = lambda i, j, k: (i * nj + j) * nk + k
        D = np.zeros((N * n, N * n))
        L = np.zeros_like(D)
        U = np.zeros_like(D)
        for i in range(ni):
            for j in range(nj):
                for k in range(nk):
                    r = idx(i, j, k) * n
                    D[r:r + n, r:r + n] = self.diag_block((i, j, k))
                    for d, (di, dj, dk) in enumerate(((1, 0, 0), (0, 1, 0), (0, 0, 1))):
                        if (i, j, k)[d] > 0:
                            cnb = idx(i - di, j - dj, k - dk) * n
                            L[r:r + n, cnb:cnb + n] = self.offdiag_block((i, j, k), d, 0)
                        if (i, j, k)[d] < (ni, nj, nk)[d] - 1:
                            cnb = idx(i + di, j + dj, k + dk) * n
                            U[r:r + n, cnb:cnb + n] = self.offdiag_block((i, j, k), d, 1)
        Dinv = np.linalg.inv(D)
        return (D + L) @ Dinv @ (D + U)


def assemble_lhs(q, grid: StructuredGrid, mode: str, dtau, mech, model: MixtureModel,
                 *, theta: float = 0.0, dt: Optional[float] = None,
                 species_offdiag: str = "symmetrized") -> ImplicitOperator:
    """Build the implicit operator for one iteration.

    The scalar diagonal is 1/(J dtau) [+ (1+theta)/(J dt)] plus the
    directional sums of lam_inv + 2 lam_vis with the mode's radii; chemistry
    contributes -V dOmega to the species diagonal (full block for CI, its
    diagonal for CS).
    """
    if mode not in MODES:
        raise ValueError(f"unknown scheme {mode!r}")
    if species_offdiag not in ("symmetrized", "paper"):
        raise ValueError(f"species_offdiag must be 'symmetrized' or 'paper'")
    prim = cons_to_prim(q, model)
    nu_flow, nu_sp, nu_u = _diffusivities(prim, model)
    V = grid.volume
    base = V / np.asarray(dtau)
    if dt is not None and np.isfinite(dt):
        base = base + (1.0 + theta) * V / dt

    w = _w_column(prim, model)
    b = _grad_p_row(prim, model)

    chem_on = mech is not None and getattr(mech, "enabled", False) and bool(mech.reactions)
    vdom = None
    if chem_on:
        vdom = source_jacobian(prim, mech, model) * V[..., np.newaxis, np.newaxis]

    if mode == "CI":
        d_scal = base + sum(_cell_dir_radius(prim, grid, d, nu_u, False) for d in range(3))
        lam_face = tuple(_face_radius(prim, grid, d, nu_u, False) for d in range(3))
        dinv_blk = None
        if chem_on:
            ns = model.ns
            blk = d_scal[..., np.newaxis, np.newaxis] * np.eye(ns) - vdom
            try:
                dinv_blk = np.linalg.inv(blk)
            except np.linalg.LinAlgError as exc:
                raise SingularDiagonal(f"species diagonal block not invertible: {exc}")
        _check_diag(d_scal)
        return ImplicitOperator(mode=mode, grid=grid, model=model, w=w, b=b,
                                rho=np.ascontiguousarray(prim.rho),
                                u=np.ascontiguousarray(prim.u),
                                lam_face=lam_face, d_scal=d_scal, vdom=vdom,
                                dinv_species_block=dinv_blk)

    # component-split operator
    d_flow = base + sum(_cell_dir_radius(prim, grid, d, nu_flow, False) for d in range(3))
    d_sp = (base + sum(_cell_dir_radius(prim, grid, d, nu_sp, True) for d in range(3)))
    d_sp = np.repeat(d_sp[..., np.newaxis], model.ns, axis=-1)
    if chem_on:
        diag = np.einsum("...ss->...s", vdom)
        d_sp = d_sp - diag
    lam_face = tuple(_face_radius(prim, grid, d, nu_flow, False) for d in range(3))
    lam_face_sp = tuple(_face_radius(prim, grid, d, nu_sp, True) for d in range(3))
    sp_scale = 0.5 if species_offdiag == "symmetrized" else 1.0
    ns = model.ns
    sp_lower = np.empty(grid.dims + (3, ns))
    sp_upper = np.empty(grid.dims + (3, ns))
    for d in range(3):
        U_up, U_lo = _upper_lower_contravariant(prim, grid, d)
        lamF = lam_face_sp[d]
        lam_up = np.moveaxis(np.moveaxis(lamF, d, 0)[1:], 0, d)
        lam_lo = np.moveaxis(np.moveaxis(lamF, d, 0)[:-1], 0, d)
        sp_lower[..., d, :] = (sp_scale * (U_up + lam_up))[..., np.newaxis]
        sp_upper[..., d, :] = (sp_scale * (U_lo - lam_lo))[..., np.newaxis]
    _check_diag(d_flow)
    _check_diag(d_sp)
    return ImplicitOperator(mode=mode, grid=grid, model=model, w=w, b=b,
                            rho=np.ascontiguousarray(prim.rho),
                            u=np.ascontiguousarray(prim.u),
                            lam_face=lam_face, d_scal=d_flow, vdom=vdom,
                            lam_face_sp=lam_face_sp, d_species=d_sp,
                            sp_lower=sp_lower, sp_upper=sp_upper, sp_scale=sp_scale)


def _check_diag(d):
    if np.any(np.abs(d) < 1e-300) or not np.all(np.isfinite(d)):
        raise SingularDiagonal("implicit-operator diagonal underflowed or is non-finite")
