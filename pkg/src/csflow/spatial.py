"""Right-hand-side assembly: upwind convective fluxes, central viscous fluxes,
chemical sources, and the cell residual R.

The residual is "extensive": R_cell = sum over faces of (flux . outward area
vector) minus source*volume, units of Q m^3/s, so that V dQ/dt = -R.  Face
spectral radii follow the same convention, lambda = |u.S| + c|S| (m^3/s),
which equals (|U| + c grad(xi))/J of the index-space form.
"""

from __future__ import annotations

import numpy as np

from .boundary import apply_boundary_conditions
from .chemistry import _rates_from_partial_densities
from .errors import NonPhysicalState
from .fields import IP, IRHO, IU, IY, NGHOST, decode_to_padded, it_index
from .grid import StructuredGrid
from .mixture import CellPrimitive, MixtureModel, species_enthalpy, transport


def minmod(a, b):
    """Elementwise minmod limiter."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.where(np.abs(a) < np.abs(b), a, b)
    return np.where(a * b <= 0.0, 0.0, out)


def muscl_reconstruct(q_mm, q_m, q_p, q_pp):
    """Second-order MUSCL states at the face between q_m and q_p.

    qL = q_m + minmod(q_m - q_mm, q_p - q_m)/2,
    qR = q_p - minmod(q_p - q_m, q_pp - q_p)/2.
    """
    d_central = np.asarray(q_p, dtype=float) - np.asarray(q_m, dtype=float)
    qL = q_m + 0.5 * minmod(q_m - np.asarray(q_mm, dtype=float), d_central)
    qR = q_p - 0.5 * minmod(d_central, np.asarray(q_pp, dtype=float) - q_p)
    return qL, qR


class _FaceState:
    """Flux inputs derived from stacked primitive components [rho,u,p,Y]."""

    __slots__ = ("rho", "u", "p", "Y", "T", "c", "q")

    def __init__(self, W, model: MixtureModel):
        self.rho = W[..., IRHO]
        self.u = W[..., IU:IU + 3]
        self.p = W[..., IP]
        self.Y = W[..., IY:IY + model.ns]
        R = self.Y @ model.R_s
        self.T = self.p / (self.rho * R)
        if np.any(self.T <= 0.0) or not np.all(np.isfinite(self.T)):
            raise NonPhysicalState("non-positive temperature at a face state")
        cp = self.Y @ model.cp_s
        gamma = cp / (cp - R)
        self.c = np.sqrt(gamma * R * self.T)
        Ek = 0.5 * np.sum(self.u * self.u, axis=-1)
        e_t = self.Y @ model.b_s + (cp - R) * self.T + Ek
        q = np.empty(W.shape[:-1] + (5 + model.ns,))
        q[..., 0] = self.rho
        q[..., 1:4] = self.rho[..., np.newaxis] * self.u
        q[..., 4] = self.rho * e_t
        q[..., 5:] = self.rho[..., np.newaxis] * self.Y
        self.q = q


def _directed_flux(state: _FaceState, S):
    """F(q) . S for one side of a face; S is the face area vector (m^2)."""
    U = np.einsum("...c,...c->...", state.u, S)
    F = U[..., np.newaxis] * state.q
    F[..., 1:4] += state.p[..., np.newaxis] * S
    F[..., 4] += state.p * U
    return F, U


def directed_flux(q, S, model: MixtureModel):
    """Convective flux of a raw conservative vector through area vector S.

    Decodes q without clipping or renormalisation (Y = rho_s/rho as stored),
    which is the flux function the analytic Jacobian differentiates.
    """
    q = np.asarray(q, dtype=float)
    S = np.asarray(S, dtype=float)
    rho = q[..., 0]
    u = q[..., 1:4] / rho[..., np.newaxis]
    r_s = q[..., 5:]
    cv_sum = r_s @ model.cp_s - r_s @ model.R_s
    T = (q[..., 4] - 0.5 * rho * np.sum(u * u, axis=-1) - r_s @ model.b_s) / cv_sum
    p = (r_s @ model.R_s) * T
    U = np.einsum("...c,...c->...", u, S)
    F = U[..., np.newaxis] * q
    F[..., 1:4] += p[..., np.newaxis] * S
    F[..., 4] += p * U
    return F


def inviscid_spectral_radius(prim, S, eqgroup: str = "flow"):
    """|u.S| + c|S| for the flow/unified groups, |u.S| for species (m^3/s)."""
    U = np.abs(np.einsum("...c,...c->...", np.asarray(prim.u), np.asarray(S, dtype=float)))
    if eqgroup == "species":
        return U
    return U + np.asarray(prim.c) * np.linalg.norm(S, axis=-1)


def viscous_spectral_radius(prim, S, volume, model: MixtureModel, eqgroup: str = "flow"):
    """Diffusive radius nu_group * |S|^2 / V (m^3/s).

    flow: max(4 mu/(3 rho), k/(rho cv)); species: max_s D_s; unified: max of all.
    """
    mu, k, D = transport(prim, model)
    cv = prim.Y @ model.cp_s - prim.Y @ model.R_s
    nu_flow = np.maximum(4.0 * mu / (3.0 * prim.rho), k / (prim.rho * cv))
    nu_sp = np.max(D, axis=-1)
    if eqgroup == "flow":
        nu = nu_flow
    elif eqgroup == "species":
        nu = nu_sp
    else:
        nu = np.maximum(nu_flow, nu_sp)
    return nu * np.einsum("...c,...c->...", S, S) / volume


def convective_flux(primL: CellPrimitive, primR: CellPrimitive, face_metric, model: MixtureModel):
    """Rusanov flux through a face: 0.5(FL+FR) - 0.5 max(lamL, lamR) (QR-QL)."""
    from .fields import stack_primitive

    WL = stack_primitive(primL, model.ns)[..., :5 + model.ns]
    WR = stack_primitive(primR, model.ns)[..., :5 + model.ns]
    return _rusanov(_FaceState(WL, model), _FaceState(WR, model),
                    np.asarray(face_metric, dtype=float))


def _rusanov(sL: _FaceState, sR: _FaceState, S):
    FL, UL = _directed_flux(sL, S)
    FR, UR = _directed_flux(sR, S)
    area = np.linalg.norm(S, axis=-1)
    lam = np.maximum(np.abs(UL) + sL.c * area, np.abs(UR) + sR.c * area)
    return 0.5 * (FL + FR) - 0.5 * lam[..., np.newaxis] * (sR.q - sL.q)


def viscous_flux(face_state: CellPrimitive, face_gradients, face_metric, model: MixtureModel):
    """Viscous flux vector through a face (extensive, Q m^3/s).

    `face_gradients` is (grad_u, grad_T, grad_Y) with grad_u[..., i, j] =
    du_i/dx_j.  Species diffusive mass fluxes are corrected to sum to zero
    by subtracting their Y_s-weighted total.
    """
    grad_u, grad_T, grad_Y = face_gradients
    S = np.asarray(face_metric, dtype=float)
    mu, k, D = transport(face_state, model)
    div_u = np.trace(grad_u, axis1=-2, axis2=-1)
    tau = mu[..., np.newaxis, np.newaxis] * (grad_u + np.swapaxes(grad_u, -1, -2))
    idx = np.arange(3)
    tau[..., idx, idx] -= (2.0 / 3.0 * mu * div_u)[..., np.newaxis]
    # Fickian mass fluxes with zero-sum correction
    j_s = -(face_state.rho[..., np.newaxis, np.newaxis] * D[..., np.newaxis]) * grad_Y
    j_s -= face_state.Y[..., np.newaxis] * np.sum(j_s, axis=-2, keepdims=True)
    h_s = species_enthalpy(face_state.T, model)
    qvec = -k[..., np.newaxis] * grad_T + np.einsum("...s,...sl->...l", h_s, j_s)
    F = np.zeros(np.broadcast_shapes(face_state.rho.shape, S.shape[:-1]) + (5 + model.ns,))
    tau_S = np.einsum("...il,...l->...i", tau, S)
    F[..., 1:4] = -tau_S
    F[..., 4] = -np.einsum("...i,...i->...", face_state.u, tau_S) \
        + np.einsum("...l,...l->...", qvec, S)
    F[..., 5:] = np.einsum("...sl,...l->...s", j_s, S)
    return F


def _tangential_cd(P, axis):
    """Central differences of the padded array along a tangential axis."""
    out = np.zeros_like(P)
    sl_p = [slice(None)] * P.ndim
    sl_m = [slice(None)] * P.ndim
    sl_c = [slice(None)] * P.ndim
    sl_p[axis] = slice(2, None)
    sl_m[axis] = slice(None, -2)
    sl_c[axis] = slice(1, -1)
    out[tuple(sl_c)] = 0.5 * (P[tuple(sl_p)] - P[tuple(sl_m)])
    return out


class _DirectionViews:
    """Face-aligned views of padded cell data along one index direction.

    After moveaxis the two tangential axes always land at positions 1 and 2,
    so restricting them to the interior is a plain (view-returning) slice.
    """

    def __init__(self, P, d, dims):
        nf = dims[d] + 1
        Pm = np.moveaxis(P, d, 0)[:, NGHOST:-NGHOST, NGHOST:-NGHOST]
        self.mm = Pm[0:nf]
        self.m = Pm[1:nf + 1]
        self.p = Pm[2:nf + 2]
        self.pp = Pm[3:nf + 3]


def _face_tangential(P, d, dims, axis):
    """Face-averaged tangential central differences d(P)/d(xi_axis)."""
    cd = _tangential_cd(P, axis)
    v = _DirectionViews(cd, d, dims)
    return 0.5 * (v.m + v.p)


def assemble_residual(q, grid: StructuredGrid, bcs, mech, model: MixtureModel,
                      *, first_order: bool = False, return_padded: bool = False):
    """Assemble the extensive residual R (V dQ/dt = -R) on interior cells."""
    dims = grid.dims
    ns = model.ns
    nv = 5 + ns
    P = decode_to_padded(q, model)
    apply_boundary_conditions(P, grid, bcs, model)
    R = np.zeros(dims + (nv,))

    for d in range(3):
        S = np.moveaxis(grid.face_areas(d), d, 0)
        v = _DirectionViews(P, d, dims)
        if first_order:
            WL, WR = v.m[..., :nv], v.p[..., :nv]
        else:
            WL, WR = muscl_reconstruct(v.mm[..., :nv], v.m[..., :nv],
                                       v.p[..., :nv], v.pp[..., :nv])
        F = _rusanov(_FaceState(WL, model), _FaceState(WR, model), S)

        # central viscous flux from cell-adjacent values
        Wf = 0.5 * (v.m + v.p)
        face = _FaceState(Wf[..., :nv], model)
        face_prim = CellPrimitive(rho=face.rho, u=face.u, p=face.p, T=face.T,
                                  Y=face.Y, c=face.c, gamma=None, h=None, Ek=None)
        # metric terms: normal from the shared face, tangential from cell averages
        volL = np.moveaxis(grid.volume, d, 0)
        Vf = np.empty(S.shape[:-1])
        Vf[1:-1] = 0.5 * (volL[1:] + volL[:-1])
        Vf[0] = volL[0]
        Vf[-1] = volL[-1]
        xi_n = S / Vf[..., np.newaxis]
        grads = [None, None, None]
        grads[d] = (v.p - v.m)[..., np.newaxis] * xi_n[..., np.newaxis, :]
        for a in (x for x in range(3) if x != d):
            Sc = np.moveaxis(grid.cell_face_avg(a), d, 0)
            Jc = np.moveaxis(grid.J, d, 0)
            xi_a_cell = Sc * Jc[..., np.newaxis]
            xi_a = np.empty_like(xi_n)
            xi_a[1:-1] = 0.5 * (xi_a_cell[1:] + xi_a_cell[:-1])
            xi_a[0] = xi_a_cell[0]
            xi_a[-1] = xi_a_cell[-1]
            dP = _face_tangential(P, d, dims, a)
            grads[a] = dP[..., np.newaxis] * xi_a[..., np.newaxis, :]
        grad = grads[0] + grads[1] + grads[2]  # (..., ncomp, 3)
        IT = it_index(ns)
        F += viscous_flux(face_prim,
                          (grad[..., IU:IU + 3, :], grad[..., IT, :],
                           grad[..., IY:IY + ns, :]),
                          S, model)

        Rm = np.moveaxis(R, d, 0)
        Rm += F[1:] - F[:-1]

    if mech is not None and getattr(mech, "enabled", False) and mech.reactions:
        from .fields import interior

        Pi = interior(P)
        rho_s = Pi[..., IRHO, np.newaxis] * Pi[..., IY:IY + ns]
        omega = _rates_from_partial_densities(Pi[..., it_index(ns)], rho_s, mech, model)
        R[..., 5:] -= omega * grid.volume[..., np.newaxis]

    if not np.all(np.isfinite(R)):
        idx = np.argwhere(~np.isfinite(R).all(axis=-1))[0]
        raise NonPhysicalState(f"non-finite residual at cell {tuple(idx)}")
    if return_padded:
        return R, P
    return R
