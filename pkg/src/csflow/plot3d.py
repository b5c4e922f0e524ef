"""ASCII Plot3D (.xyz) grid import/export, single block only."""

from __future__ import annotations

import numpy as np

from .errors import MultiBlockUnsupported, ParseError


def _tokens_with_offsets(text):
    offset = 0
    for raw in text.splitlines(keepends=True):
        line = raw.split("#", 1)[0]
        col = 0
        for tok in line.split():
            col = line.index(tok, col)
            yield tok, offset + col
            col += len(tok)
        offset += len(raw)


def read_plot3d(path):
    """Read a single-block ASCII Plot3D file; returns nodes (ni, nj, nk, 3).

    Node counts in the file are point counts.  Two header layouts are
    accepted: a leading block count (must be 1) followed by the dims, or the
    three dims alone.  Multi-block files raise MultiBlockUnsupported.
    """
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    toks = list(_tokens_with_offsets(text))
    pos = 0

    def take_int(what):
        nonlocal pos
        if pos >= len(toks):
            raise ParseError(f"file truncated while reading {what}",
                             byte_offset=len(text))
        tok, off = toks[pos]
        pos += 1
        try:
            val = int(tok)
        except ValueError:
            raise ParseError(f"expected integer {what}, got {tok!r}",
                             byte_offset=off) from None
        if val <= 0:
            raise ParseError(f"{what} must be positive, got {val}", byte_offset=off)
        return val

    first_line = text.lstrip().splitlines()[0] if text.strip() else ""
    if len(first_line.split()) == 1:
        nblocks = take_int("block count")
        if nblocks != 1:
            raise MultiBlockUnsupported(
                f"{nblocks}-block files are not supported (single block only)")
    ni = take_int("node count ni")
    nj = take_int("node count nj")
    nk = take_int("node count nk")
    count = ni * nj * nk
    vals = np.empty(3 * count)
    for m in range(3 * count):
        if pos >= len(toks):
            raise ParseError("file truncated while reading coordinates",
                             byte_offset=len(text))
        tok, off = toks[pos]
        pos += 1
        try:
            vals[m] = float(tok)
        except ValueError:
            raise ParseError(f"expected coordinate value, got {tok!r}",
                             byte_offset=off) from None
    if pos != len(toks):
        raise ParseError("trailing data after single block",
                         byte_offset=toks[pos][1])
    nodes = np.empty((ni, nj, nk, 3))
    for c in range(3):
        nodes[..., c] = vals[c * count:(c + 1) * count].reshape((ni, nj, nk), order="F")
    return nodes


def write_plot3d(path, nodes):
    """Write nodes as a 1-block ASCII Plot3D file (full float64 precision)."""
    nodes = np.asarray(nodes, dtype=float)
    ni, nj, nk = nodes.shape[:3]
    with open(path, "w", encoding="utf-8") as f:
        f.write("1\n")
        f.write(f"{ni} {nj} {nk}\n")
        for c in range(3):
            flat = nodes[..., c].reshape(-1, order="F")
            for start in range(0, flat.size, 5):
                f.write(" ".join(f"{v:.17e}" for v in flat[start:start + 5]) + "\n")
