"""Structured curvilinear grids: node storage, metrics, built-in generators.

Face area vectors come from the cross product of the face diagonals, which
makes the vector area of every closed cell sum to zero exactly (freestream
preservation).  Volumes follow from the divergence theorem; J = 1/V.

Index conventions: cell (i, j, k); i-faces have shape (ni+1, nj, nk) and are
oriented toward +i (likewise j, k).  2-D runs are 3-D grids with nk = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadDims, DegenerateCell


@dataclass(frozen=True)
class StructuredGrid:
    """Metric terms of a single-block structured grid (immutable after build)."""

    nodes: np.ndarray      # (ni+1, nj+1, nk+1, 3), m
    volume: np.ndarray     # (ni, nj, nk), m^3
    J: np.ndarray          # 1/volume, 1/m^3
    Si: np.ndarray         # (ni+1, nj, nk, 3) face area vectors, m^2, +i oriented
    Sj: np.ndarray         # (ni, nj+1, nk, 3)
    Sk: np.ndarray         # (ni, nj, nk+1, 3)
    # cell-averaged directional face vectors, used for cell spectral radii
    Sci: np.ndarray = field(repr=False)
    Scj: np.ndarray = field(repr=False)
    Sck: np.ndarray = field(repr=False)

    @property
    def dims(self):
        return tuple(int(n) - 1 for n in self.nodes.shape[:3])

    @property
    def ncells(self) -> int:
        ni, nj, nk = self.dims
        return ni * nj * nk

    def face_areas(self, direction: int) -> np.ndarray:
        return (self.Si, self.Sj, self.Sk)[direction]

    def cell_face_avg(self, direction: int) -> np.ndarray:
        return (self.Sci, self.Scj, self.Sck)[direction]


def _face_vectors(nodes, direction):
    """Half cross product of the face diagonals, oriented toward +direction."""
    # spanned node directions, cyclic so the normal points along `direction`
    a, b = ((1, 2), (2, 0), (0, 1))[direction]
    shifts = [(0, 0), (0, 0), (0, 0)]

    def corner(da, db):
        sl = [slice(None)] * 3
        for ax, d in ((a, da), (b, db)):
            sl[ax] = slice(1, None) if d else slice(0, -1)
        sl[direction] = slice(None)
        return nodes[tuple(sl)]

    p00 = corner(0, 0)
    pa0 = corner(1, 0)
    pab = corner(1, 1)
    p0b = corner(0, 1)
    d1 = pab - p00
    d2 = pa0 - p0b
    return 0.5 * np.cross(d2, d1), 0.25 * (p00 + pa0 + pab + p0b)


def compute_metrics(nodes) -> StructuredGrid:
    """Build metric terms from a node array; raises DegenerateCell on bad cells."""
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 4 or nodes.shape[-1] != 3 or min(nodes.shape[:3]) < 2:
        raise BadDims(f"node array must be (ni+1, nj+1, nk+1, 3), got {nodes.shape}")
    Si, Ci = _face_vectors(nodes, 0)
    Sj, Cj = _face_vectors(nodes, 1)
    Sk, Ck = _face_vectors(nodes, 2)
    # divergence theorem: V = (1/3) sum over outward faces of S . centroid
    vol = (
        np.einsum("...c,...c->...", Si[1:], Ci[1:])
        - np.einsum("...c,...c->...", Si[:-1], Ci[:-1])
        + np.einsum("...c,...c->...", Sj[:, 1:], Cj[:, 1:])
        - np.einsum("...c,...c->...", Sj[:, :-1], Cj[:, :-1])
        + np.einsum("...c,...c->...", Sk[:, :, 1:], Ck[:, :, 1:])
        - np.einsum("...c,...c->...", Sk[:, :, :-1], Ck[:, :, :-1])
    ) / 3.0
    if np.any(vol <= 1e-30) or not np.all(np.isfinite(vol)):
        idx = np.unravel_index(int(np.argmin(vol)), vol.shape)
        raise DegenerateCell(
            f"cell {idx} has volume {vol[idx]:.3e} m^3 (J <= 0 or collapsed)")
    return StructuredGrid(
        nodes=nodes, volume=vol, J=1.0 / vol, Si=Si, Sj=Sj, Sk=Sk,
        Sci=0.5 * (Si[:-1] + Si[1:]),
        Scj=0.5 * (Sj[:, :-1] + Sj[:, 1:]),
        Sck=0.5 * (Sk[:, :, :-1] + Sk[:, :, 1:]),
    )


def generate_box(extent, dims):
    """Uniform Cartesian box nodes; `extent` is a scalar or (Lx, Ly, Lz)."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise BadDims(f"box dims must be three positive cell counts, got {dims}")
    ext = np.broadcast_to(np.asarray(extent, dtype=float), (3,))
    if np.any(ext <= 0.0):
        raise BadDims(f"box extent must be positive, got {extent}")
    axes = [np.linspace(0.0, ext[d], dims[d] + 1) for d in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _radial_nodes(r_in, r_out, n, stretch, first_cell):
    length = r_out - r_in
    if first_cell is not None:
        uniform = length / n
        if not 0 < first_cell <= uniform:
            raise BadDims(f"first_cell must be in (0, {uniform:g}] for {n} cells")
        # solve h0(stretch) = first_cell by bisection; h0 decreases with stretch
        lo, hi = 1.0, 2.0
        h0 = lambda r: length / n if r == 1.0 else length * (r - 1.0) / (r ** n - 1.0)
        while h0(hi) > first_cell:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if h0(mid) > first_cell:
                lo = mid
            else:
                hi = mid
        stretch = 0.5 * (lo + hi)
    if stretch == 1.0:
        return np.linspace(r_in, r_out, n + 1)
    h0 = length * (stretch - 1.0) / (stretch ** n - 1.0)
    steps = h0 * stretch ** np.arange(n)
    return r_in + np.concatenate(([0.0], np.cumsum(steps)))


def generate_cylinder_ogrid(radius, outer_radius, dims, theta_deg=(270.0, 90.0),
                            stretch=1.0, first_cell=None, span=None):
    """Nodes for an O-grid wrapped around a (part-)cylinder.

    i runs along the circumference from theta_deg[0] to theta_deg[1] (the
    default decreasing sweep keeps cells right-handed), j radially outward
    from the wall with geometric clustering (`stretch`, or `first_cell` to
    prescribe the wall spacing), k spanwise over `span` (default radius/10).
    """
    ni, nj, nk = (int(d) for d in dims)
    if ni < 2 or nj < 2 or nk < 1:
        raise BadDims(f"cylinder O-grid needs ni, nj >= 2 and nk >= 1, got {dims}")
    if not 0.0 < radius < outer_radius:
        raise BadDims("need 0 < radius < outer_radius")
    if stretch < 1.0:
        raise BadDims("stretch ratio must be >= 1")
    theta = np.deg2rad(np.linspace(theta_deg[0], theta_deg[1], ni + 1))
    r = _radial_nodes(float(radius), float(outer_radius), nj, float(stretch), first_cell)
    z = np.linspace(0.0, span if span is not None else 0.1 * radius, nk + 1)
    nodes = np.empty((ni + 1, nj + 1, nk + 1, 3))
    nodes[..., 0] = (r[np.newaxis, :] * np.cos(theta)[:, np.newaxis])[..., np.newaxis]
    nodes[..., 1] = (r[np.newaxis, :] * np.sin(theta)[:, np.newaxis])[..., np.newaxis]
    nodes[..., 2] = z[np.newaxis, np.newaxis, :]
    return nodes
