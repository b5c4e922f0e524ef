"""Finite-rate chemistry: mass-action Arrhenius rates and their Jacobian.

Rates use molar concentrations [X_s] = rho_s / M_s.  The source Jacobian is
the species-by-species block only, obtained by central finite differences of
the production rates with temperature held fixed; its row-sum norm bounds the
source spectral radius used in the time step.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ParseError, ValidationError
from .mixture import R_UNIVERSAL, CellPrimitive, MixtureModel


@dataclass(frozen=True)
class Reaction:
    """One elementary reaction with forward (and optional backward) Arrhenius rate."""

    reactant_stoich: np.ndarray   # (ns,) integer coefficients nu'
    product_stoich: np.ndarray    # (ns,) integer coefficients nu''
    A_f: float
    b_f: float
    Ea_f: float                   # J/mol
    backward: Optional[Tuple[float, float, float]] = None  # (A_b, b_b, Ea_b)

    def validate_mass_balance(self, model: MixtureModel):
        lhs = float(self.reactant_stoich @ model.M)
        rhs = float(self.product_stoich @ model.M)
        if abs(lhs - rhs) > 1e-12 * max(lhs, rhs):
            raise ValidationError(
                [f"reaction does not conserve mass: {lhs:.15g} kg/mol vs {rhs:.15g} kg/mol"])


@dataclass(frozen=True)
class Mechanism:
    reactions: tuple
    enabled: bool = True


def _arrhenius(A, b, Ea, T):
    return A * T ** b * np.exp(-Ea / (R_UNIVERSAL * T))


def _rates_from_partial_densities(T, rho_s, mech: Mechanism, model: MixtureModel):
    """omega_s (kg/(m^3 s)) as a function of T and partial densities rho_s."""
    conc = rho_s / model.M
    omega_molar = np.zeros_like(conc)
    for rx in mech.reactions:
        rate = _arrhenius(rx.A_f, rx.b_f, rx.Ea_f, T)
        for s in np.nonzero(rx.reactant_stoich)[0]:
            rate = rate * conc[..., s] ** rx.reactant_stoich[s]
        if rx.backward is not None:
            A_b, b_b, Ea_b = rx.backward
            rate_b = _arrhenius(A_b, b_b, Ea_b, T)
            for s in np.nonzero(rx.product_stoich)[0]:
                rate_b = rate_b * conc[..., s] ** rx.product_stoich[s]
            rate = rate - rate_b
        omega_molar += (rx.product_stoich - rx.reactant_stoich) * rate[..., np.newaxis]
    return omega_molar * model.M


def production_rates(prim: CellPrimitive, mech: Optional[Mechanism], model: MixtureModel):
    """Net chemical production rate per species, kg/(m^3 s); zero when disabled."""
    rho_s = np.asarray(prim.rho)[..., np.newaxis] * prim.Y
    if mech is None or not mech.enabled or not mech.reactions:
        return np.zeros_like(rho_s)
    return _rates_from_partial_densities(np.asarray(prim.T), rho_s, mech, model)


def source_jacobian(prim: CellPrimitive, mech: Optional[Mechanism], model: MixtureModel):
    """d omega_s / d rho_r (1/s), shape (..., ns, ns), by central differences.

    Temperature is held fixed; the coupling of omega to (rho, rho*u, rho*E)
    through T is deliberately left off the implicit operator.
    """
    rho = np.asarray(prim.rho, dtype=float)
    ns = model.ns
    shape = rho.shape + (ns, ns)
    if mech is None or not mech.enabled or not mech.reactions:
        return np.zeros(shape)
    T = np.asarray(prim.T, dtype=float)
    rho_s = rho[..., np.newaxis] * prim.Y
    dOm = np.empty(shape)
    for r in range(ns):
        h = np.maximum(1e-8 * np.abs(rho_s[..., r]), 1e-12 * rho)
        rp = rho_s.copy()
        rp[..., r] += h
        rm = rho_s.copy()
        rm[..., r] -= h
        om_p = _rates_from_partial_densities(T, rp, mech, model)
        om_m = _rates_from_partial_densities(T, rm, mech, model)
        dOm[..., :, r] = (om_p - om_m) / (2.0 * h)[..., np.newaxis]
    return dOm


def source_spectral_radius(dOmega):
    """Row-sum bound max_s sum_r |dOmega_{s,r}|, 1/s."""
    return np.max(np.sum(np.abs(dOmega), axis=-1), axis=-1)


_TERM_RE = re.compile(r"^\s*(?:(\d+)\s+)?([A-Za-z][\w+\-*']*)\s*$")


def _parse_side(side: str, model: MixtureModel, lineno: int, line: str):
    stoich = np.zeros(model.ns, dtype=float)
    for term in side.split("+"):
        m = _TERM_RE.match(term)
        if not m:
            raise ParseError(f"cannot parse stoichiometric term {term.strip()!r}",
                             line=lineno, column=line.find(term.strip()) + 1)
        coeff = int(m.group(1)) if m.group(1) else 1
        name = m.group(2)
        try:
            stoich[model.species_index(name)] += coeff
        except KeyError:
            raise ParseError(f"unknown species {name!r}", line=lineno,
                             column=line.find(name) + 1) from None
    return stoich


def _parse_params(text: str, lineno: int, line: str):
    params = {}
    for tok in text.split():
        if "=" not in tok:
            raise ParseError(f"expected key=value, got {tok!r}", line=lineno,
                             column=line.find(tok) + 1)
        key, val = tok.split("=", 1)
        try:
            params[key] = float(val)
        except ValueError:
            raise ParseError(f"bad numeric value {val!r} for {key}", line=lineno,
                             column=line.find(tok) + 1) from None
    return params


def load_mechanism(path, model: MixtureModel, enabled: bool = True) -> Mechanism:
    """Parse a reaction-list file.

    One reaction per line::

        A + B -> C : A=1.0e6 b=0.0 Ea=5.0e4
        2 A <-> B  : A_f=2.0 b_f=0 Ea_f=0 A_b=1.0 b_b=0 Ea_b=0

    '#' starts a comment.  Field names are exactly A/b/Ea for irreversible
    reactions and A_f/b_f/Ea_f plus A_b/b_b/Ea_b for reversible ones.
    """
    reactions = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].rstrip()
            if not line.strip():
                continue
            if ":" not in line:
                raise ParseError("missing ':' between reaction and rate fields",
                                 line=lineno, column=len(line))
            eq, params_text = line.split(":", 1)
            reversible = "<->" in eq
            arrow = "<->" if reversible else "->"
            if arrow not in eq:
                raise ParseError("missing '->' or '<->'", line=lineno, column=1)
            lhs, rhs = eq.split(arrow, 1)
            nu_r = _parse_side(lhs, model, lineno, raw)
            nu_p = _parse_side(rhs, model, lineno, raw)
            params = _parse_params(params_text, lineno, raw)
            want = {"A_f", "b_f", "Ea_f", "A_b", "b_b", "Ea_b"} if reversible else {"A", "b", "Ea"}
            if set(params) != want:
                raise ParseError(
                    f"rate fields must be exactly {sorted(want)}, got {sorted(params)}",
                    line=lineno, column=raw.find(":") + 1)
            if reversible:
                rx = Reaction(nu_r, nu_p, params["A_f"], params["b_f"], params["Ea_f"],
                              backward=(params["A_b"], params["b_b"], params["Ea_b"]))
            else:
                rx = Reaction(nu_r, nu_p, params["A"], params["b"], params["Ea"])
            rx.validate_mass_balance(model)
            reactions.append(rx)
    return Mechanism(reactions=tuple(reactions), enabled=enabled)
