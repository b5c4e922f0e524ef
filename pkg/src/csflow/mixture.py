"""Thermally perfect gas mixture: thermodynamics, transport, state conversions.

Each species is calorically perfect (constant cp), so the temperature
inversion from total energy is closed form.  All functions broadcast: the
species axis is the last axis, everything else may be any leading shape
(scalar states and whole fields go through the same code).

Conservative vector layout (SI units): ``[rho, rho*u, rho*v, rho*w,
rho*e_t, rho*Y_1, ..., rho*Y_ns]``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPhysicalState, ParseError, ValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

R_UNIVERSAL = 8.314462618  # J/(mol K)

#: mass fractions more negative than this raise NonPhysicalState; values in
#: [-EPS_NEG, 0) are clipped to zero and the vector renormalized
EPS_NEG = 1e-10


@dataclass(frozen=True)
class SpeciesData:
    """Constant-property description of one species.

    Sutherland viscosity: mu(T) = mu_ref * (T/T_mu)^1.5 * (T_mu + S_mu)/(T + S_mu).
    """

    name: str
    M: float        # molar mass, kg/mol
    cp: float       # specific heat at constant pressure, J/(kg K)
    hf: float       # formation enthalpy at Tref, J/kg
    Tref: float     # reference temperature, K
    mu_ref: float   # viscosity at T_mu, Pa s
    T_mu: float     # Sutherland reference temperature, K
    S_mu: float     # Sutherland constant, K

    def __post_init__(self):
        if self.M <= 0.0:
            raise ValueError(f"species {self.name}: molar mass must be positive")
        if self.cp <= R_UNIVERSAL / self.M:
            raise ValueError(f"species {self.name}: cp must exceed R_u/M (cv > 0)")
        if self.mu_ref < 0.0:
            raise ValueError(f"species {self.name}: mu_ref must be >= 0")


@dataclass(frozen=True)
class MixtureModel:
    """Immutable mixture: ordered species plus Prandtl and Schmidt numbers."""

    species: tuple
    Pr: float
    Sc: float

    # per-species arrays cached at construction (same order as `species`)
    M: np.ndarray = field(init=False, repr=False, compare=False)
    cp_s: np.ndarray = field(init=False, repr=False, compare=False)
    hf_s: np.ndarray = field(init=False, repr=False, compare=False)
    Tref_s: np.ndarray = field(init=False, repr=False, compare=False)
    R_s: np.ndarray = field(init=False, repr=False, compare=False)
    b_s: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.species) < 1:
            raise ValueError("mixture needs at least one species")
        if self.Pr <= 0.0 or self.Sc <= 0.0:
            raise ValueError("Pr and Sc must be positive")
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise ValueError("species names must be unique")
        arr = lambda vals: np.asarray(vals, dtype=float)
        object.__setattr__(self, "M", arr([s.M for s in self.species]))
        object.__setattr__(self, "cp_s", arr([s.cp for s in self.species]))
        object.__setattr__(self, "hf_s", arr([s.hf for s in self.species]))
        object.__setattr__(self, "Tref_s", arr([s.Tref for s in self.species]))
        object.__setattr__(self, "R_s", R_UNIVERSAL / self.M)
        # h_s(T) = hf + cp (T - Tref) = b_s + cp T with b_s = hf - cp Tref
        object.__setattr__(self, "b_s", self.hf_s - self.cp_s * self.Tref_s)

    @property
    def ns(self) -> int:
        return len(self.species)

    @property
    def nvar(self) -> int:
        """Length of the conservative vector, 5 + ns."""
        return 5 + self.ns

    def species_index(self, name: str) -> int:
        for i, s in enumerate(self.species):
            if s.name == name:
                return i
        raise KeyError(f"unknown species {name!r}")


@dataclass(frozen=True)
class CellPrimitive:
    """Decoded primitive state; every field is an ndarray (possibly 0-d).

    ``h`` is the total specific enthalpy (static + kinetic), so that
    ``e_t = h - p/rho`` holds.
    """

    rho: np.ndarray    # kg/m^3
    u: np.ndarray      # (..., 3) m/s
    p: np.ndarray      # Pa
    T: np.ndarray      # K
    Y: np.ndarray      # (..., ns) mass fractions
    c: np.ndarray      # frozen sound speed, m/s
    gamma: np.ndarray  # mixture cp/cv
    h: np.ndarray      # total specific enthalpy, J/kg
    Ek: np.ndarray     # kinetic energy per unit mass, J/kg


def mixture_gas_constant(Y, model: MixtureModel):
    """R_mix = sum_s Y_s R_u/M_s, J/(kg K).  Linear in Y; no validation."""
    return np.asarray(Y, dtype=float) @ model.R_s


def pressure(rho, Y, T, model: MixtureModel):
    """Ideal-gas pressure p = rho * R_mix(Y) * T."""
    return np.asarray(rho, dtype=float) * mixture_gas_constant(Y, model) * np.asarray(T, dtype=float)


def species_enthalpy(T, model: MixtureModel):
    """Static enthalpies h_s(T) = hf_s + cp_s (T - Tref_s), shape (..., ns)."""
    T = np.asarray(T, dtype=float)
    return model.b_s + model.cp_s * T[..., np.newaxis]


def mixture_cp(Y, model: MixtureModel):
    return np.asarray(Y, dtype=float) @ model.cp_s


def temperature_from_energy(q, model: MixtureModel):
    """Invert rho*e_t for T (closed form for constant per-species cp).

    Solves e_int = sum Y_s h_s(T) - R_mix T with
    e_int = e_t - |u|^2/2.  Raises NonPhysicalState when the effective cv
    is non-positive or the resulting temperature is non-positive.
    """
    q = np.asarray(q, dtype=float)
    rho = q[..., 0]
    Y = q[..., 5:] / rho[..., np.newaxis]
    u = q[..., 1:4] / rho[..., np.newaxis]
    e_int = q[..., 4] / rho - 0.5 * np.sum(u * u, axis=-1)
    cv = Y @ model.cp_s - Y @ model.R_s
    if np.any(cv <= 0.0):
        raise NonPhysicalState("mixture cv <= 0 in temperature inversion")
    T = (e_int - Y @ model.b_s) / cv
    if np.any(T <= 0.0) or not np.all(np.isfinite(T)):
        raise NonPhysicalState("non-positive temperature from energy inversion")
    return T


def _clip_mass_fractions(Y, eps_neg):
    """Clip Y in [-eps_neg, 0) to zero and renormalize; raise below -eps_neg."""
    if np.any(Y < -eps_neg):
        idx = np.unravel_index(int(np.argmin(Y)), Y.shape)
        raise NonPhysicalState(
            f"mass fraction {Y[idx]:.3e} below -{eps_neg:g} at index {idx}")
    if np.any(Y < 0.0):
        Y = np.where(Y < 0.0, 0.0, Y)
    return Y / np.sum(Y, axis=-1, keepdims=True)


def cons_to_prim(q, model: MixtureModel, eps_neg: float = EPS_NEG) -> CellPrimitive:
    """Decode a conservative vector (or field of them) into primitives."""
    q = np.asarray(q, dtype=float)
    rho = q[..., 0]
    if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
        raise NonPhysicalState("non-positive density")
    u = q[..., 1:4] / rho[..., np.newaxis]
    Y = _clip_mass_fractions(q[..., 5:] / rho[..., np.newaxis], eps_neg)
    Ek = 0.5 * np.sum(u * u, axis=-1)
    R = Y @ model.R_s
    cp = Y @ model.cp_s
    cv = cp - R
    e_int = q[..., 4] / rho - Ek
    T = (e_int - Y @ model.b_s) / cv
    if np.any(T <= 0.0) or not np.all(np.isfinite(T)):
        raise NonPhysicalState("non-positive temperature in cons_to_prim")
    p = rho * R * T
    gamma = cp / cv
    c = np.sqrt(gamma * R * T)
    h = Y @ model.b_s + cp * T + Ek
    return CellPrimitive(rho=rho, u=u, p=p, T=T, Y=Y, c=c, gamma=gamma, h=h, Ek=Ek)


def prim_to_cons(prim: CellPrimitive, model: MixtureModel):
    """Encode primitives back to the conservative vector."""
    rho = np.asarray(prim.rho, dtype=float)
    u = np.asarray(prim.u, dtype=float)
    Y = np.asarray(prim.Y, dtype=float)
    T = np.asarray(prim.T, dtype=float)
    Ek = 0.5 * np.sum(u * u, axis=-1)
    e_t = Y @ model.b_s + (Y @ model.cp_s) * T - (Y @ model.R_s) * T + Ek
    q = np.empty(rho.shape + (model.nvar,), dtype=float)
    q[..., 0] = rho
    q[..., 1:4] = rho[..., np.newaxis] * u
    q[..., 4] = rho * e_t
    q[..., 5:] = rho[..., np.newaxis] * Y
    return q


def make_primitive(model: MixtureModel, rho=None, u=(0.0, 0.0, 0.0), p=None,
                   T=None, Y=None) -> CellPrimitive:
    """Build a consistent CellPrimitive from any two of (rho, p, T) plus Y."""
    Y = np.asarray(Y, dtype=float)
    if abs(float(np.sum(Y)) - 1.0) > 1e-8 and Y.ndim == 1:
        raise NonPhysicalState("mass fractions must sum to 1")
    R = mixture_gas_constant(Y, model)
    if rho is None:
        rho = p / (R * T)
    elif T is None:
        T = p / (rho * R)
    elif p is None:
        p = rho * R * T
    rho = np.asarray(rho, dtype=float)
    T = np.asarray(T, dtype=float)
    p = np.asarray(p, dtype=float)
    u = np.broadcast_to(np.asarray(u, dtype=float), rho.shape + (3,)).copy()
    if np.any(rho <= 0) or np.any(T <= 0) or np.any(p <= 0):
        raise NonPhysicalState("freestream/primitive state not admissible")
    Y = np.broadcast_to(Y, rho.shape + (model.ns,)).copy()
    Ek = 0.5 * np.sum(u * u, axis=-1)
    cp = Y @ model.cp_s
    cv = cp - R
    gamma = cp / cv
    return CellPrimitive(rho=rho, u=u, p=p, T=T, Y=Y, c=np.sqrt(gamma * R * T),
                         gamma=gamma, h=Y @ model.b_s + cp * T + Ek, Ek=Ek)


def transport(prim: CellPrimitive, model: MixtureModel):
    """Mixture transport properties (mu, k, D_s).

    Sutherland per-species viscosity with mass-fraction mixing, constant
    Prandtl and Schmidt numbers:

        mu  = sum_s Y_s mu_s(T)
        k   = mu * cp_mix / Pr
        D_s = mu / (rho * Sc)   (identical for every species)
    """
    T = np.asarray(prim.T, dtype=float)[..., np.newaxis]
    mu_ref = np.array([s.mu_ref for s in model.species])
    T_mu = np.array([s.T_mu for s in model.species])
    S_mu = np.array([s.S_mu for s in model.species])
    mu_s = mu_ref * (T / T_mu) ** 1.5 * (T_mu + S_mu) / (T + S_mu)
    mu = np.sum(prim.Y * mu_s, axis=-1)
    k = mu * mixture_cp(prim.Y, model) / model.Pr
    D = (mu / (prim.rho * model.Sc))[..., np.newaxis] * np.ones(model.ns)
    return mu, k, D


_SPECIES_KEYS = {"M", "cp", "hf", "Tref", "mu_ref", "T_mu", "S_mu"}


def load_mixture(path) -> MixtureModel:
    """Read a mixture definition file (TOML: top-level Pr/Sc, one table per species)."""
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    violations = []
    if "Pr" not in doc:
        violations.append("missing top-level key 'Pr'")
    if "Sc" not in doc:
        violations.append("missing top-level key 'Sc'")
    species = []
    for name, table in doc.items():
        if name in ("Pr", "Sc"):
            continue
        if not isinstance(table, dict):
            violations.append(f"unexpected top-level key {name!r}")
            continue
        missing = _SPECIES_KEYS - set(table)
        extra = set(table) - _SPECIES_KEYS
        if missing:
            violations.append(f"species {name!r}: missing fields {sorted(missing)}")
        if extra:
            violations.append(f"species {name!r}: unknown fields {sorted(extra)}")
        if missing or extra:
            continue
        try:
            species.append(SpeciesData(name=name, **{k: float(table[k]) for k in _SPECIES_KEYS}))
        except ValueError as exc:
            violations.append(str(exc))
    if not species and not violations:
        violations.append("no species tables found")
    if violations:
        raise ValidationError(violations)
    return MixtureModel(species=tuple(species), Pr=float(doc["Pr"]), Sc=float(doc["Sc"]))


def nitrogen_like(name: str = "N2") -> SpeciesData:
    """Molecular-nitrogen-like species used by tests and the scaling benchmark."""
    return SpeciesData(name=name, M=0.028, cp=1039.0, hf=0.0, Tref=0.0,
                       mu_ref=1.663e-5, T_mu=273.15, S_mu=107.0)


def cloned_mixture(ns: int, Pr: float = 0.72, Sc: float = 0.7) -> MixtureModel:
    """Inert mixture of `ns` identical nitrogen-like species (benchmark helper)."""
    species = tuple(nitrogen_like(f"N2_{i:04d}") for i in range(ns))
    return MixtureModel(species=species, Pr=Pr, Sc=Sc)
