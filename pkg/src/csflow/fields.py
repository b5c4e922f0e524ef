"""Stacked primitive field layout shared by the spatial and boundary modules.

A primitive field is a padded array of shape (ni+2G, nj+2G, nk+2G, 6+ns)
holding [rho, u, v, w, p, Y_1..Y_ns, T] per cell; G = NGHOST = 2 layers
support the MUSCL stencil.  Ghosts start as NaN so unfilled ones are loud.
"""

from __future__ import annotations

import numpy as np

from .mixture import CellPrimitive, MixtureModel, cons_to_prim

NGHOST = 2

IRHO = 0
IU = 1          # u, v, w occupy 1:4
IP = 4
IY = 5          # species occupy 5:5+ns
# temperature sits at index 5+ns (after the species block)


def ncomp(ns: int) -> int:
    return 6 + ns


def it_index(ns: int) -> int:
    return 5 + ns


def stack_primitive(prim: CellPrimitive, ns: int) -> np.ndarray:
    """Stack a CellPrimitive into the shared component layout."""
    parts = [np.asarray(prim.rho)[..., np.newaxis], np.asarray(prim.u),
             np.asarray(prim.p)[..., np.newaxis], np.asarray(prim.Y),
             np.asarray(prim.T)[..., np.newaxis]]
    return np.concatenate(parts, axis=-1)


def decode_to_padded(q, model: MixtureModel) -> np.ndarray:
    """Decode interior conservatives and embed them in a NaN-ghosted array."""
    prim = cons_to_prim(q, model)
    inner = stack_primitive(prim, model.ns)
    shape = tuple(n + 2 * NGHOST for n in q.shape[:3]) + (ncomp(model.ns),)
    P = np.full(shape, np.nan)
    P[NGHOST:-NGHOST, NGHOST:-NGHOST, NGHOST:-NGHOST] = inner
    return P


def interior(P: np.ndarray) -> np.ndarray:
    return P[NGHOST:-NGHOST, NGHOST:-NGHOST, NGHOST:-NGHOST]
