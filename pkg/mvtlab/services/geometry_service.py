import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List

import numpy as np
from sympy import Matrix

from ..config import Config
from ..exceptions import PreconditionError

logger = logging.getLogger(__name__)

NEWTON_STEPS = 50


@dataclass
class GeometryReport:
    curve: str
    min_abs_wronskian: float
    min_abs_detD1: float
    min_abs_sff_coeffs: List[float]
    grid: int
    threshold: float = field(default_factory=lambda: Config.DEGENERACY_THRESHOLD)

    @property
    def degenerate(self):
        minima = [self.min_abs_wronskian, self.min_abs_detD1, *self.min_abs_sff_coeffs]
        return any(m < self.threshold for m in minima)

    def to_dict(self):
        return {
            "curve": self.curve,
            "min_abs_wronskian": self.min_abs_wronskian,
            "min_abs_detD1": self.min_abs_detD1,
            "min_abs_sff_coeffs": list(self.min_abs_sff_coeffs),
            "grid": self.grid,
            "threshold": self.threshold,
            "degenerate": self.degenerate,
        }


class GeometryService:
    def __init__(self, workers=None, threshold=None):
        self.workers = workers or Config.WORKERS
        self.threshold = Config.DEGENERACY_THRESHOLD if threshold is None else threshold

    @staticmethod
    def _check_order(order):
        if order not in (1, 2, 3):
            raise PreconditionError(f"derivative order must be 1, 2 or 3, got {order}")

    @staticmethod
    def _check_domain(curve, t):
        lo, hi = curve.domain
        if not lo <= float(t) <= hi:
            raise PreconditionError(f"t={float(t):g} lies outside the domain [{lo}, {hi}]")

    def wronskian(self, curve, order, t):
        """det[phi_i^(order + j)(t)], the Wronskian of the order-th derivatives."""
        self._check_order(order)
        self._check_domain(curve, t)
        k = curve.n - 1
        matrix = np.array([[curve.derivative(i, order + j, t) for j in range(k)] for i in range(k)])
        return float(np.linalg.det(matrix))

    def exact_wronskian(self, curve, order, t):
        """Same determinant in rational arithmetic; t must be rational."""
        self._check_order(order)
        self._check_domain(curve, t)
        k = curve.n - 1
        return Matrix(k, k, lambda i, j: curve.exact_derivative(i, order + j, t)).det()

    @staticmethod
    def _matrices(curve, t):
        k = curve.n - 1
        D1 = np.array([[curve.derivative(i, 1, t[j]) for j in range(k)] for i in range(k)])
        D2 = np.array([[curve.derivative(i, 2, t[j]) for j in range(k)] for i in range(k)])
        return D1, D2

    def build_D1_D2(self, curve, t):
        t = [float(v) for v in t]
        if len(t) != curve.n - 1:
            raise PreconditionError(f"need {curve.n - 1} points, got {len(t)}")
        for j, (tj, (a, b)) in enumerate(zip(t, curve.sub_intervals)):
            if not a <= tj <= b:
                raise PreconditionError(f"t_{j + 1}={tj:g} is not in I_{j + 1}=[{a}, {b}]")
        return self._matrices(curve, t)

    @staticmethod
    def scaled_det(D1):
        norms = np.linalg.norm(D1, axis=0)
        if np.any(norms == 0):
            return 0.0
        return float(np.linalg.det(D1 / norms))

    def _sff(self, D1, D2):
        if abs(self.scaled_det(D1)) < Config.SINGULAR_THRESHOLD:
            raise PreconditionError("D1 is singular at this point")
        return np.linalg.solve(D1, D2).sum(axis=0)

    def sff_coefficients(self, curve, t):
        """<D1^-1 D2 e_j, xi> for xi = (1, ..., 1)."""
        D1, D2 = self.build_D1_D2(curve, t)
        return [float(c) for c in self._sff(D1, D2)]

    def _height(self, curve, t0, target):
        """x_0 = sum t_j on the sumset surface above x' = target, by Newton from t0."""
        t = np.array(t0, dtype=np.float64)
        k = len(t)
        for _ in range(NEWTON_STEPS):
            value = np.array([sum(curve.polynomial(i)(tj) for tj in t) for i in range(k)])
            residual = value - target
            if not residual.any():
                break
            D1, _ = self._matrices(curve, t)
            step = np.linalg.solve(D1, residual)
            t = t - step
            if np.abs(step).max() <= 1e-17 * (1 + np.abs(t).max()):
                break
        return float(t.sum())

    def quadratic_fit_check(self, curve, t, h):
        """Second-order coefficients of x_0 over y = D1^-1 (x' - x'_0), against -sff.

        ``one_sided`` differs from -c_j by O(h), ``central`` by O(h^2).
        """
        D1, D2 = self.build_D1_D2(curve, t)
        for j, (tj, (a, b)) in enumerate(zip(t, curve.sub_intervals)):
            if tj - 2 * abs(h) < a or tj + 2 * abs(h) > b:
                raise PreconditionError(f"step h={h:g} leaves I_{j + 1}=[{a}, {b}] around t_{j + 1}={tj:g}")
        coeffs = self._sff(D1, D2)
        k = curve.n - 1
        base = np.array([sum(curve.polynomial(i)(tj) for tj in t) for i in range(k)])
        x0 = self._height(curve, t, base)
        one_sided, central = [], []
        for j in range(k):
            forward = self._height(curve, t, base + h * D1[:, j])
            backward = self._height(curve, t, base - h * D1[:, j])
            one_sided.append((forward - x0 - h) / (h * h / 2))
            central.append((forward - 2 * x0 + backward) / (h * h))
        one_sided_err = [abs(e + c) for e, c in zip(one_sided, coeffs)]
        central_err = [abs(e + c) / max(abs(c), 1e-300) for e, c in zip(central, coeffs)]
        return {
            "t": [float(v) for v in t], "h": h, "base_height": x0, "base_sum": float(np.sum(t)),
            "sff": [float(c) for c in coeffs],
            "one_sided": one_sided, "one_sided_error": one_sided_err,
            "central": central, "central_relative_error": central_err,
        }

    def _scan_points(self, curve, points):
        det_min = np.inf
        sff_min = np.full(curve.n - 1, np.inf)
        for t in points:
            D1, D2 = self._matrices(curve, t)
            det = abs(self.scaled_det(D1))
            det_min = min(det_min, det)
            if det < Config.SINGULAR_THRESHOLD:
                sff_min[:] = 0.0
                continue
            sff_min = np.minimum(sff_min, np.abs(np.linalg.solve(D1, D2).sum(axis=0)))
        return det_min, sff_min

    def nondegeneracy_scan(self, curve, grid_per_axis) -> GeometryReport:
        if grid_per_axis < 4:
            raise PreconditionError(f"grid_per_axis must be >= 4, got {grid_per_axis}")
        axes = [np.linspace(a, b, grid_per_axis) for a, b in curve.sub_intervals]
        points = list(itertools.product(*axes))
        size = max(1, len(points) // max(1, self.workers))
        chunks = [points[i:i + size] for i in range(0, len(points), size)]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            parts = list(pool.map(lambda chunk: self._scan_points(curve, chunk), chunks))
        det_min = min(p[0] for p in parts)
        sff_min = np.min(np.array([p[1] for p in parts]), axis=0)

        lo, hi = curve.domain
        samples = np.linspace(lo, hi, grid_per_axis * (curve.n - 1) * 4)
        w_min = min(abs(self.wronskian(curve, 2, t)) for t in samples)
        report = GeometryReport(curve.name, float(w_min), float(det_min),
                                [float(v) for v in sff_min], grid_per_axis, self.threshold)
        logger.info("Scan of %s: W=%.3g det=%.3g sff=%s degenerate=%s", curve.name, w_min, det_min,
                    report.min_abs_sff_coeffs, report.degenerate)
        return report

    def separation_sweep(self, curve, gaps, grid_per_axis=8):
        """Scan minima with the domain split into equal pieces ``gap`` apart."""
        lo, hi = curve.domain
        k = curve.n - 1
        rows = []
        for gap in gaps:
            width = (hi - lo - (k - 1) * gap) / k
            if gap <= 0 or width <= 0:
                raise PreconditionError(f"gap {gap} does not leave {k} disjoint pieces in {curve.domain}")
            intervals = [(lo + j * (width + gap), lo + j * (width + gap) + width) for j in range(k)]
            intervals[-1] = (intervals[-1][0], hi)
            report = self.nondegeneracy_scan(curve.with_intervals(intervals), grid_per_axis)
            rows.append({"gap": gap, "min_abs_detD1": report.min_abs_detD1,
                         "min_abs_sff_coeffs": report.min_abs_sff_coeffs, "degenerate": report.degenerate})
        return rows

    def mean_value_identity_check(self, curve, report=None, grid_per_axis=8):
        """For n = 3: a Wronskian bounded away from 0 should come with non-zero sff coefficients."""
        if curve.n != 3:
            raise PreconditionError(f"the identity check is for n = 3 curves, got n = {curve.n}")
        report = report or self.nondegeneracy_scan(curve, grid_per_axis)
        wronskian_ok = report.min_abs_wronskian >= report.threshold
        sff_ok = min(report.min_abs_sff_coeffs) >= report.threshold
        violated = wronskian_ok and not sff_ok
        if violated:
            logger.warning("%s: Wronskian non-vanishing but sff coefficients reach %.3g",
                           curve.name, min(report.min_abs_sff_coeffs))
        return {"curve": curve.name, "wronskian_nonvanishing": wronskian_ok,
                "sff_nonvanishing": sff_ok, "violated": violated}
