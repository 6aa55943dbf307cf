import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import mpmath
import numpy as np

from ..config import Config
from ..exceptions import PreconditionError
from ..systems import PhaseTerm, as_rational, dyadic_range

logger = logging.getLogger(__name__)

# Below this magnitude double rounding of c(N) * g(n) * x stays under 1e-12
SAFE_MAGNITUDE = 2.0 ** 10


@dataclass(frozen=True)
class SumValue:
    real: float
    imag: float
    n_terms: int

    @property
    def value(self):
        return complex(self.real, self.imag)

    def __abs__(self):
        return math.hypot(self.real, self.imag)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    samples: int
    seed: int


@dataclass(frozen=True)
class Phase:
    """f(n) = scale * c(N) * g(n) for a single phase term."""
    term: PhaseTerm
    scale: float = 1.0

    def third_derivative(self, n, N):
        a = float(self.term.power)
        d3 = a * (a - 1) * (a - 2) * float(n) ** (a - 3)
        if self.term.normalized:
            d3 /= float(N) ** a
        return self.scale * self.term.coefficient(N) * d3


@dataclass
class VdcReport:
    N: int
    D: int
    intervals: int
    partition_sum: float
    full_sum_sq: float
    lambda3: float
    short_block_bound: float
    long_block_bound: Optional[float] = None
    degenerate: bool = False
    sign_warning: bool = False
    audit_constant: float = field(default_factory=lambda: Config.AUDIT_CONSTANT)

    @property
    def ratio(self):
        return self.partition_sum / self.short_block_bound

    @property
    def within_audit(self):
        return self.ratio <= self.audit_constant

    def to_dict(self):
        return {
            "N": self.N, "D": self.D, "intervals": self.intervals,
            "partition_sum": self.partition_sum, "lambda3": self.lambda3,
            "short_block_bound": self.short_block_bound, "long_block_bound": self.long_block_bound,
            "ratio": self.ratio, "within_audit": self.within_audit,
            "degenerate": self.degenerate, "sign_warning": self.sign_warning,
        }


class PhaseCalculator:
    @staticmethod
    def term_phases(term, N, values, x):
        """Fractional parts of c(N) * g(n) * x for each n in ``values``."""
        values = list(values)
        if x == 0:
            return np.zeros(len(values))
        if term.exact:
            return PhaseCalculator.integer_phases(int(term.power), values, x)
        coeff = term.coefficient(N)
        n = np.asarray(values, dtype=np.float64)
        base = (n / N if term.normalized else n) ** float(term.power)
        t = coeff * base * x
        if np.all(np.abs(t) < SAFE_MAGNITUDE):
            return t - np.floor(t)
        return PhaseCalculator.exact_phases(term, N, values, x)

    @staticmethod
    def integer_phases(power, values, x):
        """x * n^power mod 1, exact: x is the dyadic rational num / den."""
        num, den = float(x).as_integer_ratio()
        return np.array([(v ** power * num) % den / den for v in values])

    @staticmethod
    def exact_phases(term, N, values, x):
        """Extended-precision reduction mod 1, for magnitudes beyond a double's mantissa."""
        top = max(abs(v) for v in values) or 1
        digits = int(float(term.power) * math.log10(top) + abs(float(term.amplitude_exponent)) * math.log10(N))
        with mpmath.workdps(max(30, digits + 25)):
            power = mpmath.mpf(term.power.numerator) / term.power.denominator
            coeff = mpmath.mpf(N) ** (mpmath.mpf(term.amplitude_exponent.numerator)
                                      / term.amplitude_exponent.denominator)
            xm = mpmath.mpf(x)
            out = []
            for v in values:
                if term.exact:
                    g = mpmath.mpf(v ** int(term.power))
                else:
                    base = mpmath.mpf(v) / N if term.normalized else mpmath.mpf(v)
                    g = base ** power
                out.append(float(mpmath.frac(coeff * g * xm)))
        return np.array(out)

    @staticmethod
    def difference_phases(power, values, x):
        """x * n^power mod 1 along consecutive n, stepped by forward differences mod den."""
        n0, count = values[0], len(values)
        num, den = float(x).as_integer_ratio()
        # exact integer differences of n^power at n0
        row = [(n0 + i) ** power for i in range(power + 1)]
        state = []
        for _ in range(power + 1):
            state.append(row[0] * num % den)
            row = [b - a for a, b in zip(row, row[1:])]
        out = np.empty(count)
        for i in range(count):
            out[i] = state[0] / den
            for j in range(power):
                state[j] = (state[j] + state[j + 1]) % den
        return out


class SumsService:
    def __init__(self, workers=None, chunk=None):
        self.workers = workers or Config.WORKERS
        self.chunk = chunk or Config.MC_CHUNK

    @staticmethod
    def _check_point(spec, x):
        x = [float(v) for v in x]
        if len(x) != len(spec.terms):
            raise PreconditionError(f"point has {len(x)} coordinates, spec has {len(spec.terms)} terms")
        if not all(math.isfinite(v) for v in x):
            raise PreconditionError("point coordinates must be finite")
        return x

    def eval_exp_sum(self, spec, x) -> SumValue:
        x = self._check_point(spec, x)
        values = list(spec.range.values())
        total = np.zeros(len(values))
        for term, xj in zip(spec.terms, x):
            total += PhaseCalculator.term_phases(term, spec.N, values, xj)
        s = np.exp(2j * np.pi * (total % 1.0)).sum()
        return SumValue(float(s.real), float(s.imag), len(values))

    def eval_exp_sum_recurrence(self, spec, x) -> SumValue:
        """Second evaluation path: integer powers by forward differences, the rest in mpmath."""
        x = self._check_point(spec, x)
        values = list(spec.range.values())
        total = np.zeros(len(values))
        for term, xj in zip(spec.terms, x):
            if term.exact:
                total += PhaseCalculator.difference_phases(int(term.power), values, xj)
            else:
                total += PhaseCalculator.exact_phases(term, spec.N, values, xj)
        s = np.exp(2j * np.pi * (total % 1.0)).sum()
        return SumValue(float(s.real), float(s.imag), len(values))

    def _mc_chunk(self, spec, seed_seq, size):
        rng = np.random.default_rng(seed_seq)
        points = rng.random((size, len(spec.terms)))
        values = np.arange(spec.range.lo, spec.range.hi + 1, dtype=np.float64)
        phase = np.zeros((size, len(values)))
        for j, term in enumerate(spec.terms):
            base = (values / spec.N if term.normalized else values) ** float(term.power)
            t = np.outer(points[:, j], term.coefficient(spec.N) * base)
            phase += t - np.floor(t)
        sums = np.exp(2j * np.pi * phase).sum(axis=1)
        return np.abs(sums) ** spec.p

    def mc_moment(self, spec, samples, seed=0) -> MCEstimate:
        """Monte Carlo estimate of the p-th moment over the unit cube.

        Samples are drawn in fixed chunks, each from its own child of
        ``SeedSequence(seed)``, so the estimate does not depend on the
        number of workers.
        """
        if samples < 1000:
            raise PreconditionError(f"mc_moment needs at least 1000 samples, got {samples}")
        sizes = [min(self.chunk, samples - i) for i in range(0, samples, self.chunk)]
        children = np.random.SeedSequence(seed).spawn(len(sizes))
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            parts = list(pool.map(lambda job: self._mc_chunk(spec, *job), zip(children, sizes)))
        values = np.concatenate(parts)
        mean = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(samples))
        logger.info("MC moment p=%d: %.4g +- %.2g over %d samples", spec.p, mean, stderr, samples)
        return MCEstimate(mean, stderr, samples, seed)

    def weyl_sum(self, a, q, N, k=8) -> SumValue:
        """sum_{1<=n<=N} e(a n^k / q) from exact residues."""
        if q < 1:
            raise PreconditionError(f"q must be >= 1, got {q}")
        if math.gcd(a, q) != 1:
            raise PreconditionError(f"gcd({a}, {q}) != 1")
        residues = np.array([(a * pow(n, k, q)) % q for n in range(1, N + 1)], dtype=np.float64)
        s = np.exp(2j * np.pi * residues / q).sum()
        return SumValue(float(s.real), float(s.imag), N)

    @staticmethod
    def resolve_sigma(sigma):
        if isinstance(sigma, str) and sigma in Config.WEYL_SIGMAS:
            return Config.WEYL_SIGMAS[sigma]
        return as_rational(sigma)

    def weyl_bound_rhs(self, a, q, N, sigma) -> float:
        if q < 1 or math.gcd(a, q) != 1:
            raise PreconditionError(f"need q >= 1 and gcd(a, q) = 1, got a={a}, q={q}")
        sigma = self.resolve_sigma(sigma)
        N = float(N)
        return N ** (1 - float(sigma)) * (N ** 4 / q + 1 + q / N ** 4) ** (1 / 160)

    def weyl_scan(self, N, pairs, sigma, k=8) -> List[dict]:
        rows = []
        for a, q in pairs:
            value = abs(self.weyl_sum(a, q, N, k))
            rhs = self.weyl_bound_rhs(a, q, N, sigma)
            rows.append({"a": a, "q": q, "abs_sum": value, "rhs": rhs, "ratio": value / rhs})
        return rows

    @staticmethod
    def vdc_bounds(lambda3, D, N):
        """Short-block bound and, when D > lambda3^(-1/3), the long-block bound."""
        if lambda3 <= 0:
            return float(N), None
        b22 = N + math.sqrt(D / lambda3) + D ** 1.5 * math.sqrt(lambda3) * N
        b23 = None
        if D > lambda3 ** (-1 / 3):
            b23 = N * D * lambda3 ** (1 / 3) + D * lambda3 ** (-1 / 3)
        return b22, b23

    def vdc_partition_sum(self, phase, D, N, range_=None) -> VdcReport:
        if D < 1:
            raise PreconditionError(f"interval length D must be >= 1, got {D}")
        interval = range_ or dyadic_range(N)
        values = list(interval.values())
        terms = np.exp(2j * np.pi * PhaseCalculator.term_phases(phase.term, N, values, phase.scale))
        blocks = [terms[i:i + D] for i in range(0, len(terms), D)]
        partition = float(sum(abs(b.sum()) ** 2 for b in blocks))
        full = float(abs(terms.sum()) ** 2)

        third = np.array([phase.third_derivative(n, N) for n in values])
        lambda3 = float(np.abs(third).max())
        degenerate = lambda3 == 0.0
        sign_warning = bool((np.any(third > 0) and np.any(third < 0)) or (not degenerate and np.any(third == 0)))
        if sign_warning:
            logger.warning("f''' changes sign on %s; the third-derivative test does not apply", interval)
        b22, b23 = self.vdc_bounds(lambda3, D, N)
        return VdcReport(N, D, len(blocks), partition, full, lambda3, b22, b23, degenerate, sign_warning)

    def vdc_scan(self, phase, N, Ds):
        return [self.vdc_partition_sum(phase, D, N) for D in Ds]


def phase_from_law(power, amplitude_exponent, normalized=True, scale=1.0):
    """Phase scale * N^amplitude_exponent * g(n)."""
    return Phase(PhaseTerm(power, amplitude_exponent, normalized), scale)
