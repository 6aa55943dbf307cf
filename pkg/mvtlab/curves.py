"""
Polynomial curves t -> (t, phi_1(t), ..., phi_{n-1}(t)) and the curve library.

The library is a dotenv file of ``<name>.<field> = value`` lines:

    cubic.phis = 0,0,1; 0,0,0,1
    cubic.domain = 1/2, 1
    cubic.intervals = 1/2,5/8; 3/4,1

Fractional powers are given as ``<name>.taylor = 3/2, 1/2`` together with
``<name>.center`` and ``<name>.degree`` and are truncated to polynomials.
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Tuple

from dotenv import dotenv_values
from numpy.polynomial import Polynomial
from sympy import Rational, binomial

from .config import Config
from .exceptions import PreconditionError
from .systems import as_rational

logger = logging.getLogger(__name__)


def _coefficients(values):
    out = []
    for v in values:
        out.append(v if isinstance(v, (Fraction, float)) else as_rational(v))
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return tuple(out)


@dataclass(frozen=True)
class CurveSpec:
    """phis are ascending coefficient vectors; sub_intervals are closed and ordered."""
    name: str
    phis: Tuple[Tuple, ...]
    domain: Tuple[float, float]
    sub_intervals: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "phis", tuple(_coefficients(c) for c in self.phis))
        object.__setattr__(self, "domain", tuple(self.domain))
        object.__setattr__(self, "sub_intervals", tuple(tuple(i) for i in self.sub_intervals))
        if len(self.phis) < 2:
            raise PreconditionError("a curve needs at least two phi components (n >= 3)")
        for i, c in enumerate(self.phis):
            if len(c) < 3:
                raise PreconditionError(f"phi_{i + 1} of {self.name} has degree < 2")
        lo, hi = self.domain
        if not 0 <= lo < hi <= 1:
            raise PreconditionError(f"domain {self.domain} is not an interval inside [0, 1]")
        if len(self.sub_intervals) != len(self.phis):
            raise PreconditionError(f"{self.name} needs {len(self.phis)} sub-intervals, "
                                    f"got {len(self.sub_intervals)}")
        previous = None
        for a, b in self.sub_intervals:
            if not lo <= a < b <= hi:
                raise PreconditionError(f"sub-interval [{a}, {b}] is not inside the domain {self.domain}")
            if previous is not None and a <= previous:
                raise PreconditionError(f"sub-intervals of {self.name} must be disjoint and ordered")
            previous = b

    @property
    def n(self):
        return len(self.phis) + 1

    def polynomial(self, i):
        return Polynomial([float(c) for c in self.phis[i]])

    def derivative(self, i, order, t):
        p = self.polynomial(i)
        return float((p.deriv(order) if order else p)(t))

    def exact_derivative(self, i, order, t):
        """order-th derivative of phi_i at rational t, as a sympy Rational."""
        t = as_rational(t)
        t = Rational(t.numerator, t.denominator)
        total = Rational(0)
        for k, c in enumerate(self.phis[i]):
            if k < order:
                continue
            falling = 1
            for j in range(order):
                falling *= k - j
            c = Fraction(c)
            total += Rational(c.numerator, c.denominator) * falling * t ** (k - order)
        return total

    def scaled(self, i, factor):
        phis = list(self.phis)
        phis[i] = tuple(c * factor for c in phis[i])
        return CurveSpec(f"{self.name}*{factor}", tuple(phis), self.domain, self.sub_intervals)

    def with_intervals(self, intervals):
        return CurveSpec(self.name, self.phis, self.domain, intervals)


@dataclass(frozen=True)
class TaylorPoly:
    coefficients: Tuple[float, ...]
    remainder_bound: float


def taylor_truncation(power, center, degree, interval) -> TaylorPoly:
    """Degree-``degree`` Taylor polynomial of t^power at ``center``, in powers of t.

    The remainder bound is the Lagrange form maximised over ``interval``.
    """
    gamma = as_rational(power)
    gamma = Rational(gamma.numerator, gamma.denominator)
    c = float(center)
    lo, hi = (float(v) for v in interval)
    if lo <= 0 or c <= 0:
        raise PreconditionError("Taylor truncation of t^power needs a positive interval and center")
    if degree < 2:
        raise PreconditionError(f"truncation degree must be >= 2, got {degree}")
    shift = Polynomial([-c, 1.0])
    poly = Polynomial([0.0])
    for k in range(degree + 1):
        poly = poly + float(binomial(gamma, k)) * c ** float(gamma - k) * shift ** k
    k = degree + 1
    exponent = float(gamma - k)
    # xi^exponent is monotone on the interval, so its max sits at an endpoint
    peak = max(lo ** exponent, hi ** exponent)
    reach = max(abs(lo - c), abs(hi - c))
    bound = abs(float(binomial(gamma, k))) * peak * reach ** k
    return TaylorPoly(tuple(float(v) for v in poly.coef), bound)


def _pairs(text):
    return [tuple(as_rational(v) for v in chunk.split(",")) for chunk in text.split(";") if chunk.strip()]


def parse_curve(name, fields):
    domain = tuple(float(v) for v in _pairs(fields["domain"])[0])
    intervals = tuple(tuple(float(v) for v in pair) for pair in _pairs(fields["intervals"]))
    if "phis" in fields:
        phis = tuple(tuple(pair) for pair in _pairs(fields["phis"]))
    elif "taylor" in fields:
        center = as_rational(fields.get("center", str((domain[0] + domain[1]) / 2)))
        degree = int(fields.get("degree", "4"))
        phis = []
        for power in _pairs(fields["taylor"])[0]:
            poly = taylor_truncation(power, center, degree, domain)
            logger.debug("%s: t^%s truncated at degree %d, remainder <= %.2e",
                         name, power, degree, poly.remainder_bound)
            phis.append(poly.coefficients)
        phis = tuple(phis)
    else:
        raise PreconditionError(f"curve {name} needs either phis or taylor")
    return CurveSpec(name, phis, domain, intervals)


def load_curve_library(path=None) -> Dict[str, CurveSpec]:
    path = path or Config.CURVE_LIBRARY
    grouped = {}
    for key, value in dotenv_values(path).items():
        if "." not in key or value is None:
            continue
        name, field = key.split(".", 1)
        grouped.setdefault(name, {})[field] = value
    curves = {name: parse_curve(name, fields) for name, fields in grouped.items()}
    logger.info("Loaded %d curves from %s", len(curves), path)
    return curves


def get_curve(name, path=None) -> CurveSpec:
    curves = load_curve_library(path)
    if name not in curves:
        raise PreconditionError(f"unknown curve {name!r}; choose from {', '.join(sorted(curves))}")
    return curves[name]
