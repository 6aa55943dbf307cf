"""
Domain vocabulary: phase terms, moment specs, counting systems.

A moment  int |sum_n e(sum_j c_j(n) x_j)|^p dx  with p = 2s is the number of
pairs of s-tuples whose phase sums agree; integer phases must agree exactly,
scaled fractional phases only up to a window.  ``spec_to_system`` performs
that translation.
"""
import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Tuple

from sympy import integer_nthroot

from .config import Config
from .exceptions import PreconditionError

LEFT = "left"
RIGHT = "right"


def as_rational(value) -> Fraction:
    """Fraction from int, Fraction, '3/2'-style string or float."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10 ** 6)
    return Fraction(str(value).strip())


@dataclass(frozen=True)
class IntRange:
    """Inclusive integer interval lo..hi."""
    lo: int
    hi: int

    def __post_init__(self):
        if self.hi < self.lo:
            raise PreconditionError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def size(self):
        return self.hi - self.lo + 1

    def values(self):
        return range(self.lo, self.hi + 1)

    def overlaps(self, other):
        return not (self.hi < other.lo or other.hi < self.lo)

    def __contains__(self, n):
        return self.lo <= n <= self.hi

    def __str__(self):
        return f"[{self.lo}, {self.hi}]"


def dyadic_range(N, mode=None) -> IntRange:
    """The range "n ~ N"."""
    mode = mode or Config.RANGE_MODE
    if mode == "closed":
        return IntRange(-(-N // 2), N)
    return IntRange(N // 2 + 1, N)


@dataclass(frozen=True)
class PhaseTerm:
    power: Fraction
    amplitude_exponent: Fraction = Fraction(0)
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "power", as_rational(self.power))
        object.__setattr__(self, "amplitude_exponent", as_rational(self.amplitude_exponent))
        if self.power < 0:
            raise PreconditionError(f"negative power {self.power}")

    @property
    def exact(self):
        return self.power.denominator == 1 and self.amplitude_exponent == 0 and not self.normalized

    def coefficient(self, N):
        return float(N) ** float(self.amplitude_exponent)

    def __str__(self):
        base = "(n/N)" if self.normalized else "n"
        amp = "" if self.amplitude_exponent == 0 else f"N^{self.amplitude_exponent}*"
        return f"{amp}{base}^{self.power}"


@dataclass(frozen=True)
class MomentSpec:
    N: int
    p: int
    terms: Tuple[PhaseTerm, ...]
    range: Optional[IntRange] = None

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.range is None:
            object.__setattr__(self, "range", dyadic_range(self.N))
        if self.N < 4:
            raise PreconditionError(f"N must be >= 4, got {self.N}")
        if self.p <= 0 or self.p % 2:
            raise PreconditionError(f"moment order p must be a positive even integer, got {self.p}")
        if not self.terms:
            raise PreconditionError("moment spec needs at least one phase term")
        powers = [t.power for t in self.terms]
        if len(set(powers)) != len(powers):
            raise PreconditionError(f"phase powers must be distinct, got {[str(q) for q in powers]}")

    @property
    def s(self):
        return self.p // 2


@dataclass(frozen=True)
class SlotGroup:
    interval: IntRange
    multiplicity: int
    side: str

    def __post_init__(self):
        if self.multiplicity < 1:
            raise PreconditionError("slot multiplicity must be >= 1")
        if self.side not in (LEFT, RIGHT):
            raise PreconditionError(f"unknown side {self.side!r}")


@dataclass(frozen=True)
class WindowedForm:
    power: Fraction
    tolerance: float
    normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "power", as_rational(self.power))
        object.__setattr__(self, "tolerance", float(self.tolerance))
        if math.isnan(self.tolerance) or self.tolerance < 0:
            raise PreconditionError(f"tolerance must be >= 0, got {self.tolerance}")

    @property
    def binds(self):
        return not math.isinf(self.tolerance)

    def g(self, n, N):
        x = n / N if self.normalized else n
        return float(x) ** float(self.power)


@dataclass(frozen=True)
class WindowSystem:
    groups: Tuple[SlotGroup, ...]
    exact_forms: Tuple[int, ...]
    windowed_forms: Tuple[WindowedForm, ...]
    N: int
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "exact_forms", tuple(int(e) for e in self.exact_forms))
        object.__setattr__(self, "windowed_forms", tuple(self.windowed_forms))
        left = sum(g.multiplicity for g in self.side_groups(LEFT))
        right = sum(g.multiplicity for g in self.side_groups(RIGHT))
        if left < 1 or left != right:
            raise PreconditionError(f"left and right multiplicities must agree and be >= 1 ({left} vs {right})")
        for side in (LEFT, RIGHT):
            groups = self.side_groups(side)
            for i, a in enumerate(groups):
                for b in groups[i + 1:]:
                    if a.interval.overlaps(b.interval):
                        raise PreconditionError(
                            f"{side} slot intervals {a.interval} and {b.interval} overlap")
        if len(set(self.exact_forms)) != len(self.exact_forms):
            raise PreconditionError("exact powers must be pairwise distinct")
        if any(e < 0 for e in self.exact_forms):
            raise PreconditionError("exact powers must be non-negative")
        for form in self.windowed_forms:
            if form.power.denominator == 1 and not form.normalized and form.tolerance == 0:
                raise PreconditionError(
                    f"integer power {form.power} with zero tolerance belongs in exact_forms")

    @property
    def s(self):
        return sum(g.multiplicity for g in self.side_groups(LEFT))

    def side_groups(self, side):
        return tuple(g for g in self.groups if g.side == side)

    @property
    def symmetric(self):
        def shape(side):
            return sorted((g.interval.lo, g.interval.hi, g.multiplicity) for g in self.side_groups(side))
        return shape(LEFT) == shape(RIGHT)

    def with_tolerances(self, tolerances):
        forms = tuple(WindowedForm(f.power, t, f.normalized)
                      for f, t in zip(self.windowed_forms, tolerances))
        return WindowSystem(self.groups, self.exact_forms, forms, self.N, self.label)

    def describe(self):
        groups = [{"interval": [g.interval.lo, g.interval.hi], "multiplicity": g.multiplicity,
                   "side": g.side} for g in self.groups]
        windows = [{"power": str(f.power), "tolerance": f.tolerance, "normalized": f.normalized}
                   for f in self.windowed_forms]
        return {"N": self.N, "s": self.s, "groups": groups,
                "exact_forms": list(self.exact_forms), "windowed_forms": windows}

    def fingerprint(self, scale_bits=None):
        """SHA-256 over (system, N, ranges, scale_bits)."""
        scale_bits = Config.SCALE_BITS if scale_bits is None else scale_bits
        parts = [f"N={self.N}", f"scale={scale_bits}"]
        parts += [f"g={g.side}:{g.interval.lo}:{g.interval.hi}:{g.multiplicity}" for g in self.groups]
        parts += [f"e={e}" for e in self.exact_forms]
        parts += [f"w={f.power}:{f.tolerance!r}:{int(f.normalized)}" for f in self.windowed_forms]
        return hashlib.sha256("|".join(parts).encode()).digest()


@dataclass(frozen=True, order=True)
class FixedPoint:
    """x represented as round(x * 2^scale_bits); sums of k terms err by at most k/2 ulps."""
    value: int
    scale_bits: int = 48

    @classmethod
    def from_float(cls, x, scale_bits=48):
        return cls(math.floor(Fraction(x) * (1 << scale_bits) + Fraction(1, 2)), scale_bits)

    @classmethod
    def from_power(cls, n, power, N=1, normalized=False, scale_bits=48):
        """round(g(n) * 2^scale_bits) computed in exact integer arithmetic."""
        power = as_rational(power)
        a, b = power.numerator, power.denominator
        # floor of twice the value, then halve with round-half-up
        num = n ** a << (scale_bits * b + b)
        if normalized:
            num //= N ** a
        root, _ = integer_nthroot(num, b)
        return cls((int(root) + 1) >> 1, scale_bits)

    def _check(self, other):
        if self.scale_bits != other.scale_bits:
            raise PreconditionError("fixed-point scales differ")

    def __add__(self, other):
        self._check(other)
        return FixedPoint(self.value + other.value, self.scale_bits)

    def __sub__(self, other):
        self._check(other)
        return FixedPoint(self.value - other.value, self.scale_bits)

    def __abs__(self):
        return FixedPoint(abs(self.value), self.scale_bits)

    def within(self, other, tolerance):
        """|self - other| <= tolerance, tolerance given as a FixedPoint."""
        return abs(self - other).value <= tolerance.value

    def to_float(self):
        return self.value / (1 << self.scale_bits)


def power_table(values, power, N, normalized, scale_bits):
    """Fixed-point values of g(n) for every n in ``values`` (Python ints)."""
    return [FixedPoint.from_power(n, power, N, normalized, scale_bits).value for n in values]


def spec_to_system(spec: MomentSpec, window_constant=None) -> WindowSystem:
    """Counting system whose solution count is the moment of ``spec``."""
    if spec.p % 2:
        raise PreconditionError(f"odd moment order {spec.p}")
    powers = [t.power for t in spec.terms]
    if len(set(powers)) != len(powers):
        raise PreconditionError("duplicate phase powers")
    c = Config.WINDOW_CONSTANT if window_constant is None else window_constant
    s = spec.s
    exact, windowed = [], []
    for term in spec.terms:
        if term.exact:
            exact.append(int(term.power))
        else:
            # coefficient N^e on g(n) becomes the window N^-e on sums of g
            tolerance = c * float(spec.N) ** float(-term.amplitude_exponent)
            windowed.append(WindowedForm(term.power, tolerance, term.normalized))
    groups = (SlotGroup(spec.range, s, LEFT), SlotGroup(spec.range, s, RIGHT))
    return WindowSystem(groups, tuple(exact), tuple(windowed), spec.N)
