"""Ghost-cell boundary conditions.

Boundaries are treated explicitly: ghosts carry primitive states only and
their increments are taken as zero during implicit sweeps.  Two ghost layers
are filled per face; faces are processed i, then j, then k so edge/corner
ghosts inherit already-filled tangential neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import MissingBC
from .fields import IP, IRHO, IU, IY, NGHOST, it_index, stack_primitive
from .grid import StructuredGrid
from .mixture import CellPrimitive, MixtureModel, mixture_gas_constant

FACE_NAMES = ("imin", "imax", "jmin", "jmax", "kmin", "kmax")
BC_KINDS = ("farfield", "supersonic_outflow", "noslip_isothermal", "symmetry", "periodic")


@dataclass(frozen=True)
class BoundaryCondition:
    kind: str
    freestream: Optional[CellPrimitive] = None  # farfield state
    T_wall: Optional[float] = None              # isothermal wall temperature, K
    axis: Optional[int] = None                  # symmetry: override mirror axis (0..2)

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise MissingBC(f"unknown boundary kind {self.kind!r}")
        if self.kind == "farfield" and self.freestream is None:
            raise MissingBC("farfield boundary requires a freestream state")
        if self.kind == "noslip_isothermal" and (self.T_wall is None or self.T_wall <= 0):
            raise MissingBC("isothermal wall requires T_wall > 0")


def _boundary_normals(grid: StructuredGrid, axis: int, side: int, tang_shape):
    """Outward-extended unit normals of a boundary face, edge-padded to ghosts."""
    S = grid.face_areas(axis)
    idx = [slice(None)] * 3
    idx[axis] = -1 if side else 0
    n = S[tuple(idx)]
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    pad = [(NGHOST, NGHOST), (NGHOST, NGHOST), (0, 0)]
    n = np.pad(n, pad, mode="edge")
    return np.broadcast_to(n, tang_shape + (3,))


def apply_boundary_conditions(P: np.ndarray, grid: StructuredGrid, bcs: dict,
                              model: MixtureModel) -> np.ndarray:
    """Fill both ghost layers of every face of the padded primitive field P."""
    dims = grid.dims
    IT = it_index(model.ns)
    for face_id, name in enumerate(FACE_NAMES):
        if name not in bcs:
            raise MissingBC(f"no boundary condition for face {name!r}")
    for face_id, name in enumerate(FACE_NAMES):
        bc = bcs[name]
        axis, side = divmod(face_id, 2)  # side: 0 = min face, 1 = max face
        n = dims[axis]

        def cell(layer):
            """Slice of P at padded index `layer` along `axis` (full tangential)."""
            sl = [slice(None)] * 3
            sl[axis] = layer
            return P[tuple(sl)]

        if bc.kind == "periodic":
            opposite = FACE_NAMES[axis * 2 + (1 - side)]
            if bcs[opposite].kind != "periodic":
                raise MissingBC(f"periodic face {name!r} requires periodic {opposite!r}")
            for g in (1, 2):
                if side == 0:
                    cell(NGHOST - g)[...] = cell(NGHOST + n - g)
                else:
                    cell(NGHOST + n + g - 1)[...] = cell(NGHOST + g - 1)
            continue

        for g in (1, 2):
            if side == 0:
                ghost = cell(NGHOST - g)
                mirror = cell(NGHOST + g - 1)
                adjacent = cell(NGHOST)
            else:
                ghost = cell(NGHOST + n + g - 1)
                mirror = cell(NGHOST + n - g)
                adjacent = cell(NGHOST + n - 1)

            if bc.kind == "farfield":
                ghost[...] = stack_primitive(bc.freestream, model.ns)
            elif bc.kind == "supersonic_outflow":
                ghost[...] = adjacent
            elif bc.kind == "noslip_isothermal":
                ghost[...] = mirror
                ghost[..., IU:IU + 3] = -mirror[..., IU:IU + 3]
                Tg = np.maximum(2.0 * bc.T_wall - mirror[..., IT], 0.1 * bc.T_wall)
                ghost[..., IT] = Tg
                R = mixture_gas_constant(mirror[..., IY:IY + model.ns], model)
                ghost[..., IRHO] = mirror[..., IP] / (R * Tg)
            elif bc.kind == "symmetry":
                ghost[...] = mirror
                if bc.axis is not None:
                    nhat = np.zeros(3)
                    nhat[bc.axis] = 1.0
                else:
                    nhat = _boundary_normals(grid, axis, side, ghost.shape[:-1])
                u = mirror[..., IU:IU + 3]
                un = np.sum(u * nhat, axis=-1, keepdims=True)
                ghost[..., IU:IU + 3] = u - 2.0 * un * nhat
    return P
