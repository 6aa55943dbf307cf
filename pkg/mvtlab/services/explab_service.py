import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from .. import bounds
from ..config import Config
from ..exceptions import CapacityError, LadderCapacityError, PreconditionError
from ..models import LadderRun
from ..presets import ParamLaw, SystemTemplate, get_preset
from ..systems import IntRange, LEFT, RIGHT, SlotGroup, WindowSystem, dyadic_range
from .counter_service import CounterService

logger = logging.getLogger(__name__)

CONSISTENT = "consistent"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class LadderPoint:
    N: int
    count: int
    params: Dict[str, float] = field(default_factory=dict)
    engine: str = ""
    wall_time: float = 0.0

    def to_dict(self):
        return {"N": self.N, "count": self.count, "params": self.params}


@dataclass
class FitResult:
    points: List[LadderPoint]
    slope: float
    intercept: float
    max_residual: float

    @property
    def ladder(self):
        return [p.N for p in self.points]


@dataclass(frozen=True)
class BoundVerdict:
    claimed_exponent: Fraction
    measured_slope: float
    band: Tuple[float, float]
    verdict: str
    max_residual: float = 0.0

    def to_dict(self):
        return {"claimed_exponent": str(self.claimed_exponent), "measured_slope": self.measured_slope,
                "band": list(self.band), "verdict": self.verdict}


def numeric_template(name, values, window_constant=None):
    """Template whose parameters are fixed numbers rather than powers of N."""
    laws = {k: ParamLaw(Fraction(0), float(v)) for k, v in values.items()}
    return SystemTemplate(get_preset(name), laws, window_constant)


class ExpLabService:
    def __init__(self, counter=None, session=None, workers=None, audit_constant=None):
        self.counter = counter or CounterService(session=session)
        self.session = session
        self.workers = workers or Config.WORKERS
        self.audit_constant = audit_constant or Config.AUDIT_CONSTANT

    def _point(self, template, N):
        result = self.counter.count(template.resolve(N))
        logger.info("Ladder %s: N=%d count=%d", template.name, N, result.count)
        return LadderPoint(N, result.count, template.params_at(N), result.engine, result.wall_time)

    def run_ladder(self, template, ladder) -> FitResult:
        ladder = [int(N) for N in ladder]
        if len(ladder) < 3:
            raise PreconditionError(f"a ladder needs at least 3 values of N, got {len(ladder)}")
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise PreconditionError(f"ladder must be strictly increasing, got {ladder}")

        points = []
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            try:
                for point in pool.map(lambda N: self._point(template, N), ladder):
                    points.append(point)
            except CapacityError as e:
                raise LadderCapacityError(f"ladder stopped after {len(points)} points: {e}",
                                          points, budget=e.budget, estimate=e.estimate)
        return self.fit_exponent(points)

    def fit_exponent(self, points) -> FitResult:
        if len(points) < 3:
            raise PreconditionError(f"fit needs at least 3 points, got {len(points)}")
        Ns = [p.N for p in points]
        if len(set(Ns)) != len(Ns):
            raise PreconditionError(f"degenerate ladder: duplicate N in {Ns}")
        if any(p.count < 1 for p in points):
            raise PreconditionError("every count must be >= 1")
        x = np.log2(np.array(Ns, dtype=np.float64))
        y = np.array([math.log2(p.count) for p in points])
        slope, intercept = np.polyfit(x, y, 1)
        residual = float(np.abs(y - (slope * x + intercept)).max())
        return FitResult(list(points), float(slope), float(intercept), residual)

    @staticmethod
    def check_bound(fit, claimed, band=None) -> BoundVerdict:
        claimed = Fraction(claimed)
        below, above = band or (Config.BAND_LOW, Config.BAND_HIGH)
        low, high = float(claimed) - below, float(claimed) + above
        if low <= fit.slope <= high:
            verdict = CONSISTENT
        elif fit.slope > high and fit.max_residual < Config.RESIDUAL_GATE:
            verdict = VIOLATED
        else:
            verdict = INCONCLUSIVE
        return BoundVerdict(claimed, fit.slope, (low, high), verdict, fit.max_residual)

    def formula_check(self, count, rhs):
        ratio = count / rhs
        return {"count": count, "rhs": rhs, "ratio": ratio, "within_audit": ratio <= self.audit_constant}

    def _n10_count(self, N, delta, Delta, window_constant=None):
        system = numeric_template("n10", {"delta": delta, "Delta": Delta}, window_constant).resolve(N)
        return system, self.counter.count(system).count

    def interchange_check(self, N, delta, Delta, T, C=1.0, window_constant=None):
        """Compare N_10(delta, Delta) with (1/T) N_10(T^2 delta, T Delta) + N_10(delta, C T delta)."""
        if not 1 / N > delta:
            raise PreconditionError(f"needs 1/N > delta, got delta={delta:.4g} at N={N}")
        if not delta > 1 / N ** 2:
            raise PreconditionError(f"needs delta > 1/N^2, got delta={delta:.4g} at N={N}")
        if not 1 / N < Delta:
            raise PreconditionError(f"needs 1/N < Delta, got Delta={Delta:.4g} at N={N}")
        if not Delta < delta * N:
            raise PreconditionError(f"needs Delta < delta*N = {delta * N:.4g}, got Delta={Delta:.4g}")
        if T < 2:
            raise PreconditionError(f"needs T >= 2, got T={T}")
        if T > (delta * N) ** -0.5:
            raise PreconditionError(f"needs T <= (delta N)^(-1/2) = {(delta * N) ** -0.5:.4g}, got T={T}")

        base_system, base = self._n10_count(N, delta, Delta, window_constant)
        coarse_system, coarse = self._n10_count(N, T * T * delta, T * Delta, window_constant)
        narrow_system, narrow = self._n10_count(N, delta, C * T * delta, window_constant)
        rhs = coarse / T + narrow
        ratio = base / rhs
        report = {
            "N": N, "delta": delta, "Delta": Delta, "T": T, "C": C,
            "count": base, "count_coarse": coarse, "count_narrow": narrow,
            "rhs": rhs, "ratio": ratio, "audit_constant": self.audit_constant,
            "flagged": ratio > self.audit_constant,
            "systems": {"base": base_system.describe(), "coarse": coarse_system.describe(),
                        "narrow": narrow_system.describe()},
        }
        if report["flagged"]:
            logger.warning("Interchange ratio %.3g exceeds audit constant %.3g", ratio, self.audit_constant)
        return report

    def lower_bound_check(self, N, delta, Delta, constant=None, window_constant=None):
        """Count of the family built on one window of length M = round(Delta^(1/4) N)."""
        constant = Config.LOWER_BOUND_CONSTANT if constant is None else constant
        if delta > Delta:
            raise PreconditionError(f"needs delta <= Delta, got {delta:.4g} > {Delta:.4g}")
        if Delta ** 0.25 * N < 4:
            raise PreconditionError(f"needs Delta^(1/4) N >= 4, got {Delta ** 0.25 * N:.4g}")
        full_range = dyadic_range(N)
        M = round(Delta ** 0.25 * N)
        if M > full_range.size:
            raise PreconditionError(f"window length M={M} exceeds the range {full_range}")

        template = numeric_template("n10", {"delta": delta, "Delta": Delta}, window_constant)
        system = template.resolve(N)
        window = IntRange(full_range.lo, full_range.lo + M - 1)
        restricted = WindowSystem((SlotGroup(window, 5, LEFT), SlotGroup(window, 5, RIGHT)),
                                  system.exact_forms, system.windowed_forms, N, f"{system.label} on {window}")
        local = self.counter.count(restricted).count
        scaled = local * N / M
        target = constant * bounds.lower_bound_term(N, delta, Delta)
        full = self.counter.count(system).count
        return {
            "N": N, "delta": delta, "Delta": Delta, "M": M, "window": [window.lo, window.hi],
            "restricted_count": local, "scaled_count": scaled,
            "lower_bound": target, "constant": constant, "lower_bound_holds": scaled >= target,
            "full_count": full, **{f"full_{k}": v for k, v in
                                   self.formula_check(full, bounds.n10_bound(N, delta, Delta)).items()
                                   if k != "count"},
            "systems": {"restricted": restricted.describe(), "full": system.describe()},
        }

    def monotonicity_check(self, template, N, exponents):
        """Counts at parameter N^e; ordered by window width, the count must not decrease."""
        if not template.preset.params:
            raise PreconditionError(f"preset {template.preset.name} has no scale parameter")
        param = template.preset.params[0]
        rows = []
        for e in exponents:
            variant = SystemTemplate.build(template.preset.name, {param: f"N^{e}"}, template.window_constant)
            system = variant.resolve(N)
            width = min((f.tolerance for f in system.windowed_forms), default=math.inf)
            rows.append({"exponent": str(e), "tolerance": width, "count": self.counter.count(system).count})
        rows.sort(key=lambda row: row["tolerance"])
        inversions = [(a["exponent"], b["exponent"]) for a, b in zip(rows, rows[1:])
                      if b["count"] < a["count"]]
        return {"N": N, "parameter": param, "rows": rows, "inversions": inversions,
                "monotone": not inversions}

    def bound_checks(self, template, fit):
        """Count against the claimed right-hand side at every ladder point."""
        checks = []
        for point in fit.points:
            rhs = template.rhs_at(point.N)
            if rhs is not None:
                checks.append({"N": point.N, **self.formula_check(point.count, rhs)})
        return checks

    def report(self, template, fit, verdicts=()):
        return {
            "template": template.name,
            "citation": template.preset.citation,
            "ladder": [p.to_dict() for p in fit.points],
            "slope": fit.slope,
            "intercept": fit.intercept,
            "max_residual": fit.max_residual,
            "verdicts": [v.to_dict() for v in verdicts],
            "bound_checks": self.bound_checks(template, fit),
        }

    def save_run(self, template, fit, verdict: Optional[BoundVerdict] = None):
        if self.session is None:
            return None
        run = LadderRun(
            template=template.name,
            ladder=",".join(str(N) for N in fit.ladder),
            slope=fit.slope,
            intercept=fit.intercept,
            max_residual=fit.max_residual,
            claimed_exponent=str(verdict.claimed_exponent) if verdict else None,
            verdict=verdict.verdict if verdict else None,
            report=json.dumps(self.report(template, fit, [verdict] if verdict else []), sort_keys=True),
        )
        self.session.add(run)
        self.session.commit()
        return run

    def list_runs(self, template_name=None):
        if self.session is None:
            return []
        query = self.session.query(LadderRun)
        if template_name:
            query = query.filter(LadderRun.template == template_name)
        return query.order_by(LadderRun.created_at).all()
