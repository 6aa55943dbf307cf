"""
Preset table: every moment the lab measures, with its citation, its phase
terms as functions of the scale parameters, and the exponent claimed for it.
"""
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Optional, Tuple

from dotenv import dotenv_values

from . import bounds
from .config import Config
from .exceptions import PreconditionError
from .systems import (LEFT, RIGHT, IntRange, MomentSpec, PhaseTerm, SlotGroup, WindowSystem,
                      as_rational, dyadic_range, spec_to_system)


@dataclass(frozen=True)
class ParamLaw:
    """A scale parameter coefficient * N^exponent."""
    exponent: Fraction
    coefficient: float = 1.0

    def value(self, N):
        return self.coefficient * float(N) ** float(self.exponent)

    def times(self, other):
        return ParamLaw(self.exponent + other.exponent, self.coefficient * other.coefficient)

    def __str__(self):
        law = f"N^{self.exponent}"
        return law if self.coefficient == 1.0 else f"{self.coefficient:g}*{law}"


_FACTOR = re.compile(r"^N\^\(?(-?[0-9./]+)\)?$")


def parse_law(text, known=None) -> ParamLaw:
    """Parse products such as ``delta*N``, ``0.5*delta*N`` or ``N^-3/2``."""
    known = known or {}
    law = ParamLaw(Fraction(0))
    for raw in str(text).replace(" ", "").split("*"):
        if not raw:
            raise PreconditionError(f"malformed parameter expression {text!r}")
        divisor = 1.0
        if "/" in raw and not raw.startswith("N^"):
            raw, den = raw.split("/", 1)
            divisor = float(den)
        if raw in known:
            law = law.times(known[raw])
        elif raw == "N":
            law = law.times(ParamLaw(Fraction(1)))
        elif _FACTOR.match(raw):
            law = law.times(ParamLaw(as_rational(_FACTOR.match(raw).group(1))))
        else:
            try:
                law = law.times(ParamLaw(Fraction(0), float(raw)))
            except ValueError:
                raise PreconditionError(f"unknown factor {raw!r} in {text!r}")
        law = ParamLaw(law.exponent, law.coefficient / divisor)
    return law


# Each builder returns (term, tolerance scale); the scale carries the
# numeric coefficient of a law, which N^e amplitudes cannot express.

def _normalized(power, law):
    # (1/param) * (n/N)^power: window param on sums of (n/N)^power
    return PhaseTerm(power, -law.exponent, True), law.coefficient


def _spacing_terms(laws):
    terms = [(PhaseTerm(1), 1.0), (PhaseTerm(2), 1.0), _normalized(Fraction(3, 2), laws["delta"])]
    if "Delta" in laws:
        terms.append(_normalized(Fraction(1, 2), laws["Delta"]))
    return terms


def _quartic_terms(laws):
    lam = laws["lambda"]
    return [(PhaseTerm(2), 1.0), (PhaseTerm(4, lam.exponent, False), 1.0 / lam.coefficient)]


def _bilinear_terms(laws):
    # N * phi(n/N) with phi(t) = t^(3/2): window 1/N on sums of (n/N)^(3/2)
    return [(PhaseTerm(1), 1.0), (PhaseTerm(2), 1.0), (PhaseTerm(Fraction(3, 2), 1, True), 1.0)]


def _n8_claim(laws):
    return max(Fraction(4), 5 + laws["delta"].exponent)


def _n10_claim(laws):
    d, D = laws["delta"].exponent, laws["Delta"].exponent
    general = max(7 + d + Fraction(3, 4) * D, 6 + max(d, D), Fraction(5))
    claims = [general]
    if D == d + 1:
        claims.append(max(7 + d, Fraction(5)))
        if Fraction(-2) <= d <= Fraction(-33, 18):
            claims.append(Fraction(5))
    return min(claims)


def _n8_rhs(laws, N):
    return bounds.n8_bound(N, laws["delta"].value(N))


def _n10_rhs(laws, N):
    """Smallest right-hand side whose hypotheses hold at these parameters."""
    delta, Delta = laws["delta"].value(N), laws["Delta"].value(N)
    candidates = [bounds.n10_bound(N, delta, Delta)]
    if laws["Delta"].exponent == laws["delta"].exponent + 1:
        candidates.append(bounds.n10_diagonal_bound(N, delta))
        if 1 / N ** 2 < delta < 1 / N:
            candidates.append(bounds.n10_mid_range_bound(N, delta))
    for formula in (bounds.n10_narrow_bound, bounds.n10_iterated_bound):
        try:
            candidates.append(formula(N, delta, Delta))
        except PreconditionError:
            pass
    return min(candidates)


def _bilinear_groups(N):
    full = dyadic_range(N)
    u1 = IntRange(full.lo, N * 5 // 8)
    u2 = IntRange(N * 7 // 8 + 1, N)
    return tuple(SlotGroup(u, 2, side) for side in (LEFT, RIGHT) for u in (u1, u2))


@dataclass(frozen=True)
class Preset:
    name: str
    citation: str
    p: int
    params: Tuple[str, ...]
    defaults: Dict[str, str]
    terms: Callable
    claimed: Optional[Callable] = None
    groups: Optional[Callable] = None
    rhs: Optional[Callable] = None
    ladder: Tuple[int, ...] = ()
    description: str = ""

    @property
    def s(self):
        return self.p // 2

    def default_ladder(self):
        return list(self.ladder or Config.DEFAULT_LADDERS.get(self.s, Config.DEFAULT_LADDERS[5]))


PRESETS = {
    "n8": Preset("n8", "N_8(delta) << delta*N^5 + N^4", 8, ("delta",),
                 {"delta": "N^-2"}, _spacing_terms, _n8_claim, ladder=(32, 64, 128, 256), rhs=_n8_rhs,
                 description="eighth moment of the first spacing problem"),
    "n10": Preset("n10", "N_10(delta, Delta) << delta*Delta^(3/4)*N^7 + (delta + Delta)*N^6 + N^5", 10,
                  ("delta", "Delta"),
                  {"delta": "N^-2", "Delta": "delta*N"}, _spacing_terms, _n10_claim,
                  ladder=(24, 32, 48, 64), rhs=_n10_rhs, description="tenth moment N_10(delta, Delta)"),
    "n12": Preset("n12", "N_12(delta, Delta)", 12, ("delta", "Delta"), {"delta": "N^-2", "Delta": "delta*N"},
                  _spacing_terms, ladder=(16, 20, 24, 28), description="twelfth moment N_12(delta, Delta)"),
    "i6": Preset("i6", "I_6(N^-3) << N^(3+eps)", 6, ("lambda",), {"lambda": "N^-3"},
                 _quartic_terms, lambda laws: Fraction(3), ladder=(64, 128, 256, 512),
                 description="sixth moment of e(n^2 x + lambda n^4 y)"),
    "i8": Preset("i8", "I_8(N^-7/3) << N^(13/3+eps)", 8, ("lambda",),
                 {"lambda": "N^-7/3"}, _quartic_terms, lambda laws: Fraction(13, 3),
                 ladder=(32, 48, 64, 96, 128), description="eighth moment I_8(lambda)"),
    "i8-52": Preset("i8-52", "I_8(N^-5/2) << N^(9/2+eps)", 8, ("lambda",),
                    {"lambda": "N^-5/2"}, _quartic_terms, lambda laws: Fraction(9, 2),
                    ladder=(32, 48, 64, 96, 128), description="eighth moment I_8(N^-5/2)"),
    "i10": Preset("i10", "I_10(N^-5/3) << N^(17/3+eps)", 10, ("lambda",),
                  {"lambda": "N^-5/3"}, _quartic_terms, lambda laws: Fraction(17, 3),
                  ladder=(24, 32, 48, 64), description="tenth moment I_10(lambda)"),
    "i10-178": Preset("i10-178", "I_10(N^-17/8) << N^(49/8+eps)", 10, ("lambda",),
                      {"lambda": "N^-17/8"}, _quartic_terms, lambda laws: Fraction(49, 8),
                      ladder=(24, 32, 48, 64), description="tenth moment I_10(N^-17/8)"),
    "i10-unscaled": Preset("i10-unscaled", "I_10 <= I_10(N^-5/3)", 10, ("lambda",),
                           {"lambda": "N^0"}, _quartic_terms, lambda laws: Fraction(17, 3),
                           ladder=(12, 16, 20, 24), description="tenth moment of e(n^2 x + n^4 y)"),
    "bilinear-n3": Preset("bilinear-n3", "bilinear L^4, n = 3, phi_2(t) = t^(3/2)", 8, (),
                          {}, _bilinear_terms, lambda laws: Fraction(4), _bilinear_groups,
                          ladder=(16, 32, 64), description="bilinear L^4 count over separated U_1, U_2"),
    "exact-12": Preset("exact-12", "exact forms {1, 2}, s = 2", 4, (), {},
                       lambda laws: [(PhaseTerm(1), 1.0), (PhaseTerm(2), 1.0)], lambda laws: Fraction(2),
                       ladder=(32, 64, 128, 256), description="integer phases n, n^2"),
}


def get_preset(name) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise PreconditionError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")


@dataclass(frozen=True)
class SystemTemplate:
    """A preset with its scale parameters fixed as laws in N."""
    preset: Preset
    laws: Dict[str, ParamLaw] = field(default_factory=dict)
    window_constant: Optional[float] = None
    p: Optional[int] = None

    @classmethod
    def build(cls, name, overrides=None, window_constant=None, p=None):
        """Resolve a preset and textual overrides such as {"Delta": "delta*N"}."""
        preset = get_preset(name)
        overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        unknown = set(overrides) - set(preset.params)
        if unknown:
            raise PreconditionError(
                f"preset {name} takes parameters {list(preset.params) or 'none'}, got {sorted(unknown)}")
        laws = {}
        for param in preset.params:
            laws[param] = parse_law(overrides.get(param, preset.defaults[param]), laws)
        if p is not None and (p <= 0 or p % 2):
            raise PreconditionError(f"moment order p must be a positive even integer, got {p}")
        return cls(preset, laws, window_constant, p)

    @property
    def order(self):
        return self.p or self.preset.p

    @property
    def name(self):
        params = ", ".join(f"{k}={v}" for k, v in self.laws.items())
        suffix = f", p={self.p}" if self.p else ""
        return f"{self.preset.name}[{params}{suffix}]" if params or suffix else self.preset.name

    def claimed(self):
        if self.preset.claimed is None or (self.p and self.p != self.preset.p):
            return None
        return self.preset.claimed(self.laws)

    def rhs_at(self, N):
        """Right-hand side of the claimed bound at N: the preset formula, else N^claimed."""
        claimed = self.claimed()
        if claimed is None:
            return None
        if self.preset.rhs is not None:
            return self.preset.rhs(self.laws, N)
        return float(N) ** float(claimed)

    def params_at(self, N):
        return {k: law.value(N) for k, law in self.laws.items()}

    def moment_spec(self, N):
        terms = [t for t, _ in self.preset.terms(self.laws)]
        return MomentSpec(N, self.order, tuple(terms))

    def resolve(self, N) -> WindowSystem:
        pairs = self.preset.terms(self.laws)
        system = spec_to_system(self.moment_spec(N), self.window_constant)
        scales = [c for t, c in pairs if not t.exact]
        system = system.with_tolerances([f.tolerance * c for f, c in zip(system.windowed_forms, scales)])
        if self.preset.groups is not None:
            system = WindowSystem(self.preset.groups(N), system.exact_forms, system.windowed_forms, N)
        return WindowSystem(system.groups, system.exact_forms, system.windowed_forms, N, self.name)


def _parse_term(text):
    parts = [p.strip() for p in text.split(",")]
    if not parts[0] or len(parts) > 3:
        raise PreconditionError(f"malformed term {text!r}; expected power[,amplitude exponent[,n]]")
    amplitude = as_rational(parts[1]) if len(parts) > 1 and parts[1] else Fraction(0)
    normalized = len(parts) > 2 and parts[2] == "n"
    return PhaseTerm(as_rational(parts[0]), amplitude, normalized)


def preset_from_spec_file(path) -> Preset:
    """Preset described by a ``key = value`` file with keys p, terms, ladder, claimed."""
    fields = {k.lower(): v for k, v in dotenv_values(path).items() if v is not None}
    missing = {"p", "terms"} - set(fields)
    if missing:
        raise PreconditionError(f"spec file {path} lacks {sorted(missing)}")
    try:
        p = int(fields["p"])
    except ValueError:
        raise PreconditionError(f"spec file {path}: p must be an integer, got {fields['p']!r}")
    terms = tuple(_parse_term(t) for t in fields["terms"].split(";") if t.strip())
    claimed = as_rational(fields["claimed"]) if fields.get("claimed") else None
    ladder = tuple(int(v) for v in fields.get("ladder", "").split(",") if v.strip())
    name = os.path.splitext(os.path.basename(path))[0]
    return Preset(name, f"spec file {os.path.basename(path)}", p, (), {},
                  lambda laws: [(t, 1.0) for t in terms],
                  (lambda laws: claimed) if claimed is not None else None,
                  ladder=ladder, description=fields.get("description", ""))
