"""Exception types shared across the solver."""


class CsflowError(Exception):
    """Base class for all solver errors."""


class NonPhysicalState(CsflowError):
    """State decoding produced rho <= 0, T <= 0, p <= 0 or Y below -eps_neg."""


class DegenerateCell(CsflowError):
    """Cell with non-positive or vanishing volume (left-handed or collapsed)."""


class BadDims(CsflowError):
    """Grid generator called with unusable dimensions or extents."""


class MissingBC(CsflowError):
    """A grid face has no boundary condition assigned."""


class ZeroWavespeed(CsflowError):
    """CFL time step undefined: all spectral radii are zero."""


class SingularDiagonal(CsflowError):
    """Implicit-operator diagonal is numerically singular."""


class Diverged(CsflowError):
    """Solver produced NaN/Inf or exhausted CFL-halving retries."""


class NoWallBoundary(CsflowError):
    """Wall quantity requested but no no-slip wall boundary exists."""


class EmptySeries(CsflowError):
    """Plot requested for an empty data series."""


class ParseError(CsflowError):
    """Malformed input file; carries location information when available."""

    def __init__(self, message, *, line=None, column=None, byte_offset=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if column is not None:
            loc.append(f"column {column}")
        if byte_offset is not None:
            loc.append(f"byte {byte_offset}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.line = line
        self.column = column
        self.byte_offset = byte_offset


class MultiBlockUnsupported(ParseError):
    """Plot3D file contains more than one block."""


class ValidationError(CsflowError):
    """Configuration is syntactically valid but violates the schema.

    Collects every violation so the user sees them all at once.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.violations))
