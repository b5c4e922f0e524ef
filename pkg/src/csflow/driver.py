"""Steady pseudo-time solver and dual-time unsteady solver.

One iteration: fill ghosts, assemble the residual, pick the CFL step, build
the implicit operator for the configured scheme, sweep, then close the
species update (last-species reconstruction for the coupled scheme, one of
the two consistency corrections for the split schemes).  A step that
produces a non-physical state is retried with halved CFL, up to five times.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .boundary import FACE_NAMES, BoundaryCondition
from .chemistry import Mechanism, source_jacobian, source_spectral_radius
from .errors import Diverged, NonPhysicalState, NoWallBoundary
from .fields import IP, IRHO, IY, NGHOST, it_index
from .grid import StructuredGrid
from .implicit import (
    assemble_lhs,
    cell_spectral_radii,
    correct_increment_cs1,
    correct_normalize_cs2,
    dual_time_rhs,
    local_time_step,
)
from .lusgs import lusgs_solve
from .mixture import CellPrimitive, MixtureModel, cons_to_prim, prim_to_cons, transport
from .spatial import assemble_residual

MAX_STEP_RETRIES = 5


@dataclass
class Case:
    """Everything one solver run needs (built from a config file or by hand)."""

    grid: StructuredGrid
    model: MixtureModel
    bcs: dict
    freestream: CellPrimitive
    mech: Optional[Mechanism] = None
    scheme: str = "CI"
    cfl: float = 5.0
    cfl_ramp: Optional[tuple] = None          # (start, factor, every_n); cap = cfl
    species_offdiag: str = "symmetrized"
    first_order: bool = False
    # steady stopping
    max_iters: int = 2000
    residual_drop_orders: float = 6.0
    monitor_every: int = 10
    monitor_window: int = 20
    monitor_rel_change: Optional[float] = None   # e.g. 0.01 for the 1% criterion
    # unsteady
    dt: Optional[float] = None
    theta: float = 2.0
    n_steps: int = 0
    inner_orders: float = 4.0
    inner_max: int = 60
    # disabled by fixed-point stress tests that must keep marching
    stop_on_absolute_floor: bool = True

    def initial_field(self):
        q0 = prim_to_cons(self.freestream, self.model)
        return np.broadcast_to(q0, self.grid.dims + (self.model.nvar,)).copy()

    def cfl_at(self, it: int) -> float:
        if self.cfl_ramp is None:
            return self.cfl
        start, factor, every = self.cfl_ramp
        return min(self.cfl, start * factor ** (it // max(int(every), 1)))


@dataclass
class GroupedResidual:
    flow: float      # L2 over the density/momentum/energy rows
    species: float   # L2 of the per-cell sum of species rows
    density: float   # L2 of the density row (the stopping monitor)


def residual_norms(R) -> GroupedResidual:
    R = np.asarray(R)
    flow = float(np.sqrt(np.sum(R[..., :5] ** 2)))
    species = float(np.sqrt(np.sum(np.sum(R[..., 5:], axis=-1) ** 2)))
    density = float(np.sqrt(np.sum(R[..., 0] ** 2)))
    return GroupedResidual(flow=flow, species=species, density=density)


@dataclass
class ConvergenceHistory:
    iters: list = field(default_factory=list)
    res_flow: list = field(default_factory=list)
    res_species: list = field(default_factory=list)
    res_density: list = field(default_factory=list)
    q_stag: list = field(default_factory=list)
    wall_seconds: list = field(default_factory=list)
    implicit_seconds: list = field(default_factory=list)
    cfl: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    reason: str = ""

    def record(self, it, norms, q_stag, wall_s, imp_s, cfl):
        self.iters.append(it)
        self.res_flow.append(norms.flow)
        self.res_species.append(norms.species)
        self.res_density.append(norms.density)
        self.q_stag.append(q_stag)
        self.wall_seconds.append(wall_s)
        self.implicit_seconds.append(imp_s)
        self.cfl.append(cfl)

    def iterations_to_drop(self, orders: float) -> Optional[int]:
        """First recorded iteration at which the density residual has dropped
        `orders` decades below its initial value."""
        if not self.res_density:
            return None
        target = self.res_density[0] * 10.0 ** (-orders)
        for it, r in zip(self.iters, self.res_density):
            if r <= target:
                return it
        return None


def _wall_faces(bcs):
    return [name for name in FACE_NAMES if bcs[name].kind == "noslip_isothermal"]


def wall_heat_flux(P, grid: StructuredGrid, bcs, model: MixtureModel):
    """Wall-normal heat flux q_w (W/m^2, positive into the wall) per wall face.

    One-sided second-order difference through the wall temperature and the
    first two interior cell centres; exact for temperature profiles up to
    quadratic in wall distance.
    """
    walls = _wall_faces(bcs)
    if not walls:
        raise NoWallBoundary("no noslip_isothermal boundary in this case")
    ns = model.ns
    IT = it_index(ns)
    out = {}
    nodes = grid.nodes
    # cell centroids (node average)
    cc = 0.125 * (nodes[:-1, :-1, :-1] + nodes[1:, :-1, :-1] + nodes[:-1, 1:, :-1]
                  + nodes[:-1, :-1, 1:] + nodes[1:, 1:, :-1] + nodes[1:, :-1, 1:]
                  + nodes[:-1, 1:, 1:] + nodes[1:, 1:, 1:])
    for name in walls:
        face_id = FACE_NAMES.index(name)
        axis, side = divmod(face_id, 2)
        n = grid.dims[axis]
        bc = bcs[name]
        S = np.moveaxis(grid.face_areas(axis), axis, 0)[-1 if side else 0]
        nhat = S / np.linalg.norm(S, axis=-1, keepdims=True)
        if side == 0:
            nhat = nhat.copy()  # points +axis, i.e. from the wall into the fluid
        else:
            nhat = -nhat
        # face centroid (after moveaxis the tangential node axes are 1 and 2)
        nm = np.moveaxis(nodes, axis, 0)[-1 if side else 0]
        fc = 0.25 * (nm[:-1, :-1] + nm[1:, :-1] + nm[:-1, 1:] + nm[1:, 1:])
        ccm = np.moveaxis(cc, axis, 0)
        c1 = ccm[-1 if side else 0]
        c2 = ccm[-2 if side else 1]
        d1 = np.abs(np.einsum("...c,...c->...", c1 - fc, nhat))
        d2 = np.abs(np.einsum("...c,...c->...", c2 - fc, nhat))
        Pm = np.moveaxis(P, axis, 0)[:, NGHOST:-NGHOST, NGHOST:-NGHOST]
        P1 = Pm[NGHOST + n - 1 if side else NGHOST]
        P2 = Pm[NGHOST + n - 2 if side else NGHOST + 1]
        Tw = bc.T_wall
        dTdn = (((P1[..., IT] - Tw) * d2 ** 2 - (P2[..., IT] - Tw) * d1 ** 2)
                / (d1 * d2 * (d2 - d1)))
        Y = P1[..., IY:IY + ns]
        from .mixture import mixture_gas_constant

        rho_w = P1[..., IP] / (mixture_gas_constant(Y, model) * Tw)
        wall_state = CellPrimitive(rho=rho_w, u=np.zeros(rho_w.shape + (3,)),
                                   p=P1[..., IP], T=np.full_like(rho_w, Tw), Y=Y,
                                   c=None, gamma=None, h=None, Ek=None)
        _, k_w, _ = transport(wall_state, model)
        out[name] = k_w * dTdn
    return out


def _stagnation_monitor(P, grid, bcs, model):
    """Heat flux at the wall face currently holding the peak wall pressure."""
    try:
        qw = wall_heat_flux(P, grid, bcs, model)
    except NoWallBoundary:
        return float("nan")
    best = float("nan")
    best_p = -np.inf
    for name, q in qw.items():
        face_id = FACE_NAMES.index(name)
        axis, side = divmod(face_id, 2)
        n = grid.dims[axis]
        Pm = np.moveaxis(P, axis, 0)[:, NGHOST:-NGHOST, NGHOST:-NGHOST]
        p1 = Pm[NGHOST + n - 1 if side else NGHOST][..., IP]
        idx = np.unravel_index(int(np.argmax(p1)), p1.shape)
        if p1[idx] > best_p:
            best_p = float(p1[idx])
            best = float(q[idx])
    return best


def _reference_density_residual(case: Case) -> float:
    """Freestream flux scale used for the absolute convergence floor."""
    inf = case.freestream
    speed = float(np.linalg.norm(inf.u) + inf.c)
    areas = [np.linalg.norm(case.grid.face_areas(d), axis=-1).mean() for d in range(3)]
    return float(inf.rho) * speed * max(areas) * np.sqrt(case.grid.ncells)


def _apply_update(q, dq, scheme, model):
    q_new = q.copy()
    q_new[..., :5] += dq[..., :5]
    if scheme == "CI":
        q_new[..., 5:] += dq[..., 5:]
        # reconstruct the last species from mass conservation
        q_new[..., -1] = q_new[..., 0] - np.sum(q_new[..., 5:-1], axis=-1)
        if np.any(q_new[..., -1] < -1e-10 * q_new[..., 0]):
            raise NonPhysicalState("reconstructed last species went negative")
    elif scheme == "CS1":
        q_new[..., 5:] = correct_increment_cs1(q[..., 5:], dq[..., 5:], dq[..., 0])
    else:
        q_new[..., 5:] = correct_normalize_cs2(q[..., 5:], dq[..., 5:], dq[..., 0])
    return q_new


def _implicit_step(case: Case, q, R, cfl, theta, dt, q_n=None, q_nm1=None):
    """One LUSGS update at fixed CFL; returns (q_new, implicit_seconds)."""
    grid, model, mech = case.grid, case.model, case.mech
    prim = cons_to_prim(q, model)
    lam_inv, lam_vis = cell_spectral_radii(prim, grid, model)
    chem_on = mech is not None and mech.enabled and bool(mech.reactions)
    lam_S = source_spectral_radius(source_jacobian(prim, mech, model)) if chem_on else 0.0
    dtau = local_time_step(lam_inv, lam_vis, lam_S, cfl, grid.J)
    if dt is None:
        rhs = -R
    else:
        rhs = dual_time_rhs(R, q, q_n, q_nm1, theta, dt, grid.volume)
    t0 = time.perf_counter()
    op = assemble_lhs(q, grid, case.scheme, dtau, mech, model, theta=theta, dt=dt,
                      species_offdiag=case.species_offdiag)
    dq = lusgs_solve(op, rhs)
    t_imp = time.perf_counter() - t0
    q_new = _apply_update(q, dq, case.scheme, model)
    cons_to_prim(q_new, model)  # admissibility gate; raises NonPhysicalState
    return q_new, t_imp


def _step_with_retries(case, q, R, cfl, theta=0.0, dt=None, q_n=None, q_nm1=None):
    for attempt in range(MAX_STEP_RETRIES + 1):
        try:
            return _implicit_step(case, q, R, cfl, theta, dt, q_n, q_nm1), cfl
        except NonPhysicalState:
            if attempt == MAX_STEP_RETRIES:
                raise Diverged(
                    f"step failed after {MAX_STEP_RETRIES} CFL halvings (CFL={cfl:g})")
            cfl *= 0.5
    raise AssertionError("unreachable")


def steady_solve(case: Case, q0=None):
    """March to steady state; returns (q, ConvergenceHistory)."""
    grid, model = case.grid, case.model
    q = case.initial_field() if q0 is None else np.array(q0, dtype=float)
    hist = ConvergenceHistory(metadata={
        "scheme": case.scheme, "cfl": case.cfl, "cfl_ramp": case.cfl_ramp,
        "monitor_every": case.monitor_every, "monitor_window": case.monitor_window,
    })
    ref_floor = 1e-12 * _reference_density_residual(case)
    cfl_scale = 1.0
    monitor_samples = []
    for it in range(1, case.max_iters + 1):
        t_iter0 = time.perf_counter()
        R, P = assemble_residual(q, grid, case.bcs, case.mech, model,
                                 first_order=case.first_order, return_padded=True)
        norms = residual_norms(R)
        if not np.isfinite(norms.flow) or not np.isfinite(norms.species):
            raise Diverged(f"non-finite residual norm at iteration {it}")
        sample = float("nan")
        if case.monitor_rel_change is not None or _wall_faces(case.bcs):
            if it % case.monitor_every == 0 or it == 1:
                sample = _stagnation_monitor(P, grid, case.bcs, model)
                monitor_samples.append(sample)
        cfl_now = case.cfl_at(it - 1) * cfl_scale
        if case.stop_on_absolute_floor and norms.density <= ref_floor:
            hist.record(it, norms, sample, time.perf_counter() - t_iter0, 0.0, cfl_now)
            hist.reason = "converged_absolute"
            break
        drop_target = hist.res_density[0] * 10.0 ** (-case.residual_drop_orders) \
            if hist.res_density and np.isfinite(case.residual_drop_orders) else None
        if drop_target is not None and norms.density <= drop_target:
            hist.record(it, norms, sample, time.perf_counter() - t_iter0, 0.0, cfl_now)
            hist.reason = "converged_residual_drop"
            break
        if (case.monitor_rel_change is not None
                and len(monitor_samples) >= case.monitor_window):
            w = np.array(monitor_samples[-case.monitor_window:])
            if np.all(np.isfinite(w)) and np.max(np.abs(w - w[-1])) \
                    <= case.monitor_rel_change * max(abs(w[-1]), 1e-300):
                hist.record(it, norms, sample, time.perf_counter() - t_iter0, 0.0, cfl_now)
                hist.reason = "converged_monitor_plateau"
                break
        (q, t_imp), cfl_used = _step_with_retries(case, q, R, cfl_now)
        if cfl_used < cfl_now:
            cfl_scale *= cfl_used / cfl_now
        else:
            # recover from earlier emergency halvings once steps succeed again
            cfl_scale = min(1.0, cfl_scale * 1.2)
        hist.record(it, norms, sample, time.perf_counter() - t_iter0, t_imp, cfl_used)
    else:
        hist.reason = "max_iters"
    return q, hist


def unsteady_solve(case: Case, q0=None):
    """Dual-time unsteady march; returns (snapshots, times, ConvergenceHistory).

    The first physical step runs first-order (theta = 0) to bootstrap the
    three-level stencil; inner iterations stop after `inner_orders` decades
    or `inner_max` iterations.
    """
    if case.dt is None or not np.isfinite(case.dt) or case.dt <= 0:
        raise ValueError("unsteady_solve requires a positive physical dt")
    grid, model = case.grid, case.model
    q_n = case.initial_field() if q0 is None else np.array(q0, dtype=float)
    q_nm1 = q_n.copy()
    snapshots, times = [q_n.copy()], [0.0]
    hist = ConvergenceHistory(metadata={"scheme": case.scheme, "dt": case.dt,
                                        "theta": case.theta})
    for step in range(1, case.n_steps + 1):
        theta = 0.0 if step == 1 else case.theta
        q_m = q_n.copy()
        inner0 = None
        for inner in range(1, case.inner_max + 1):
            t0 = time.perf_counter()
            R = assemble_residual(q_m, grid, case.bcs, case.mech, model,
                                  first_order=case.first_order)
            rhs = dual_time_rhs(R, q_m, q_n, q_nm1, theta, case.dt, grid.volume)
            rnorm = float(np.sqrt(np.sum(rhs * rhs)))
            if inner0 is None:
                inner0 = max(rnorm, 1e-300)
            if not np.isfinite(rnorm):
                raise Diverged(f"non-finite inner residual at step {step}")
            if rnorm <= inner0 * 10.0 ** (-case.inner_orders) or rnorm == 0.0:
                break
            (q_m, t_imp), _ = _step_with_retries(case, q_m, R, case.cfl, theta=theta,
                                                 dt=case.dt, q_n=q_n, q_nm1=q_nm1)
            hist.record(len(hist.iters) + 1,
                        GroupedResidual(rnorm, rnorm, rnorm), float("nan"),
                        time.perf_counter() - t0, t_imp, case.cfl)
        q_nm1, q_n = q_n, q_m
        snapshots.append(q_n.copy())
        times.append(step * case.dt)
    return snapshots, times, hist
