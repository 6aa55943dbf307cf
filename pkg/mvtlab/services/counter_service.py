"""
Exact and windowed solution counting.

Three engines answer the same question, the number of ordered pairs of
slot tuples (left, right) whose exact forms agree and whose windowed forms
agree within tolerance:

* ``convolution``: representation functions r_s built by s-fold
  convolution of value-vector tables (exact systems only);
* ``group_sweep``: s-multisets with multinomial weights, grouped by exact
  key, windows resolved by a merge sweep over sorted window values;
* ``brute``: ordered tuples, candidate pairs joined on exact keys and every
  window checked directly.  Used as the oracle for the other two.
"""
import logging
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np

from ..config import Config
from ..exceptions import CapacityError, OracleCeilingError, PrecisionError, PreconditionError
from ..models import CountRecord
from ..systems import LEFT, RIGHT, WindowedForm, WindowSystem, power_table
from ..utils.multisets import (CHUNK_ROWS, SideTable, cartesian_combine, enumerate_partitioned,
                               exact_dot, expand_ranges, joint_group_ids, multiset_count,
                               ordered_tuples, reduce_rows, window_prefix)
from .cache_service import side_fingerprint

logger = logging.getLogger(__name__)

LANE_BITS = 62
LANE_CAP = 2 ** 62


@dataclass(frozen=True)
class Lane:
    """A windowed form resolved to int64 fixed-point arithmetic."""
    form: WindowedForm
    scale_bits: int
    tolerance_units: int
    spread: float
    binds: bool


@dataclass
class CountResult:
    count: int
    system: WindowSystem
    enumerated_multisets: int
    wall_time: float
    engine: str
    scale_bits: Tuple[int, ...] = ()
    diagonal: Optional[int] = None
    cached: bool = False

    def to_dict(self):
        return {
            "count": self.count,
            "engine": self.engine,
            "enumerated_multisets": self.enumerated_multisets,
            "diagonal": self.diagonal,
            "scale_bits": list(self.scale_bits),
            "system": self.system.describe(),
        }


class CounterService:
    def __init__(self, session=None, cache=None, workers=None, memory_budget=None,
                 scale_bits=None, oracle_ceiling=None):
        self.session = session
        self.cache = cache
        self.workers = workers or Config.WORKERS
        self.memory_budget = memory_budget or Config.MEMORY_BUDGET
        self.scale_bits = scale_bits or Config.SCALE_BITS
        self.oracle_ceiling = oracle_ceiling or Config.ORACLE_CEILING

    # -- value tables -------------------------------------------------------

    def lanes(self, system):
        s, N = system.s, system.N
        lo_n = min(g.interval.lo for g in system.groups)
        hi_n = max(g.interval.hi for g in system.groups)
        lanes = []
        for form in system.windowed_forms:
            g_lo, g_hi = form.g(lo_n, N), form.g(hi_n, N)
            spread = s * (g_hi - g_lo)
            scale = min(self.scale_bits, LANE_BITS - math.ceil(math.log2(s * g_hi + 2)) - 2)
            if scale < 0:
                raise CapacityError(f"window form {form.power} does not fit a 64-bit lane at N={N}")
            ulp = 2.0 ** -scale
            # a window wider than every attainable difference never binds
            binds = form.binds and form.tolerance < spread + (s + 1) * ulp
            if binds and 0 < form.tolerance < 2 * s * ulp:
                raise PrecisionError(
                    f"tolerance {form.tolerance:.3e} is below the fixed-point resolution "
                    f"2^-{scale} * {2 * s}")
            units = math.floor(Fraction(form.tolerance) * (1 << scale)) if binds else LANE_CAP
            lanes.append(Lane(form, scale, units, spread, binds))
        return lanes

    def columns(self, system, interval, lanes):
        """(size, exact + windowed) int64 table of per-value lanes."""
        cols = []
        for e in system.exact_forms:
            values = [n ** e for n in interval.values()]
            if system.s * max(values) >= 2 ** 61:
                raise CapacityError(f"exact form n^{e} overflows 64-bit sums at N={system.N}")
            cols.append(values)
        for lane in lanes:
            f = lane.form
            cols.append(power_table(interval.values(), f.power, system.N, f.normalized, lane.scale_bits))
        if not cols:
            return np.zeros((interval.size, 0), dtype=np.int64)
        return np.array(cols, dtype=np.int64).T.copy()

    def side_table(self, system, side, lanes):
        parts = []
        for group in system.side_groups(side):
            cols = self.columns(system, group.interval, lanes)
            parts.append(enumerate_partitioned(cols, group.multiplicity, self.workers))
        sums, weights = parts[0]
        for part in parts[1:]:
            sums, weights = cartesian_combine((sums, weights), part)
        F = len(system.exact_forms)
        return SideTable(keys=np.ascontiguousarray(sums[:, :F]),
                         windows=np.ascontiguousarray(sums[:, F:]), weights=weights)

    def _side_records(self, system, side, lanes):
        if self.cache is None:
            return self.side_table(system, side, lanes), False
        key = side_fingerprint(system.fingerprint(self.scale_bits), side)
        F, W = len(system.exact_forms), len(system.windowed_forms)
        table = self.cache.load_or_none(key, F, W)
        if table is not None:
            return table, True
        table = self.side_table(system, side, lanes)
        self.cache.cache_store(key, table)
        return table, False

    def _preflight(self, system):
        per_side = {}
        for side in (LEFT, RIGHT):
            n = 1
            for g in system.side_groups(side):
                n *= multiset_count(g.interval.size, g.multiplicity)
            per_side[side] = n
        width = len(system.exact_forms) + len(system.windowed_forms) + 1
        estimate = (per_side[LEFT] + per_side[RIGHT]) * width * 8 * 3
        logger.debug("Sweep preflight: %d + %d records, ~%d bytes", per_side[LEFT], per_side[RIGHT], estimate)
        if estimate > self.memory_budget:
            raise CapacityError(
                f"multiset tables need ~{estimate} bytes, over the memory budget of {self.memory_budget}",
                budget=self.memory_budget, estimate=estimate)
        return per_side

    # -- engines ------------------------------------------------------------

    def count_exact(self, system):
        if system.windowed_forms:
            raise PreconditionError("count_exact needs a system without windowed forms")
        left, right = system.side_groups(LEFT), system.side_groups(RIGHT)
        if len(left) != 1 or len(right) != 1 or left[0].interval != right[0].interval:
            raise PreconditionError("count_exact needs one slot group per side over the same interval")
        started = time.perf_counter()
        s, interval = system.s, left[0].interval
        cols = self.columns(system, interval, [])
        base = reduce_rows(cols, np.ones(interval.size, dtype=np.int64))

        boxes = 1
        for j in range(cols.shape[1]):
            boxes *= s * int(cols[:, j].max() - cols[:, j].min()) + 1
        distinct = min(multiset_count(interval.size, s), boxes)
        estimate = distinct * (cols.shape[1] + 1) * 8 * 4
        logger.debug("Convolution preflight: <= %d keys, ~%d bytes", distinct, estimate)
        if estimate <= self.memory_budget:
            table = self._power(base, s)
            count, rows = exact_dot(table[1], table[1]), len(table[1])
        else:
            count, rows = self._meet_in_middle(base, s, estimate)
        result = CountResult(count, system, rows, time.perf_counter() - started, "convolution")
        self._record(result)
        return result

    def _convolve(self, first, second):
        (ka, ca), (kb, cb) = first, second
        width = ka.shape[1]
        step = max(1, CHUNK_ROWS // max(1, len(cb)))
        keys, counts = [], []
        for i in range(0, len(ca), step):
            k = (ka[i:i + step, None, :] + kb[None, :, :]).reshape(-1, width)
            c = (ca[i:i + step, None] * cb[None, :]).reshape(-1)
            k, c = reduce_rows(k, c)
            keys.append(k)
            counts.append(c)
        if not keys:
            return ka[:0], ca[:0]
        return reduce_rows(np.concatenate(keys), np.concatenate(counts))

    def _power(self, base, k):
        table = base
        for _ in range(k - 1):
            table = self._convolve(table, base)
        return table

    def _meet_in_middle(self, base, s, estimate):
        """Sum of r_s(v)^2 with r_s = r_a * r_b assembled one residue class of v_0 at a time."""
        a = s // 2
        half_a, half_b = self._power(base, a), self._power(base, s - a)
        width = base[0].shape[1]
        half_bytes = (len(half_a[1]) + len(half_b[1])) * (width + 1) * 8
        if half_bytes > self.memory_budget or width == 0:
            raise CapacityError(
                f"half tables need ~{half_bytes} bytes, over the memory budget of {self.memory_budget}",
                budget=self.memory_budget, estimate=estimate)
        buckets = max(2, math.ceil(estimate / max(1, self.memory_budget - half_bytes)))
        logger.info("Meet-in-the-middle split %d+%d over %d buckets", a, s - a, buckets)
        mod_a, mod_b = half_a[0][:, 0] % buckets, half_b[0][:, 0] % buckets
        total, rows = 0, 0
        for c in range(buckets):
            keys, counts = [], []
            for c1 in range(buckets):
                sel_a, sel_b = mod_a == c1, mod_b == (c - c1) % buckets
                if sel_a.any() and sel_b.any():
                    k, n = self._convolve((half_a[0][sel_a], half_a[1][sel_a]),
                                          (half_b[0][sel_b], half_b[1][sel_b]))
                    keys.append(k)
                    counts.append(n)
            if keys:
                _, n = reduce_rows(np.concatenate(keys), np.concatenate(counts))
                total += exact_dot(n, n)
                rows += len(n)
        return total, rows

    def _check_window_count(self, system):
        if len(system.windowed_forms) > 2:
            raise PreconditionError("at most two windowed forms are supported")

    def count_windowed(self, system):
        if not system.windowed_forms:
            raise PreconditionError("count_windowed needs at least one windowed form")
        self._check_window_count(system)
        return self._count_grouped(system)

    def count_bilinear(self, system):
        left, right = system.side_groups(LEFT), system.side_groups(RIGHT)
        if len(left) != 2 or len(right) != 2 or any(g.multiplicity != 2 for g in system.groups):
            raise PreconditionError("bilinear count needs two slot groups of multiplicity 2 per side")
        u1, u2 = sorted((g.interval for g in left), key=lambda u: u.lo)
        if u1.overlaps(u2):
            raise PreconditionError(f"slot intervals {u1} and {u2} are not separated")
        if not system.symmetric:
            raise PreconditionError("bilinear count needs the same intervals on both sides")
        self._check_window_count(system)
        return self._count_grouped(system)

    def count(self, system):
        """Dispatch to the engine suited to ``system``."""
        groups = system.side_groups(LEFT)
        if not system.windowed_forms and len(groups) == 1 and system.symmetric:
            return self.count_exact(system)
        self._check_window_count(system)
        return self._count_grouped(system)

    def _count_grouped(self, system):
        started = time.perf_counter()
        lanes = self.lanes(system)
        per_side = self._preflight(system)
        left, cached = self._side_records(system, LEFT, lanes)
        if system.symmetric:
            right = left
        else:
            right, cached_right = self._side_records(system, RIGHT, lanes)
            cached = cached and cached_right
        count = self._sweep(left, right, lanes)
        diagonal = exact_dot(left.weights, left.weights) if system.symmetric else None
        result = CountResult(count, system, per_side[LEFT] + (0 if system.symmetric else per_side[RIGHT]),
                             time.perf_counter() - started, "group_sweep",
                             tuple(l.scale_bits for l in lanes), diagonal, cached)
        self._record(result)
        return result

    def _sweep(self, left, right, lanes):
        group_l, group_r = joint_group_ids(left.keys, right.keys)
        binding = [i for i, lane in enumerate(lanes) if lane.binds]
        if not binding:
            zeros_l = np.zeros(len(left), dtype=np.int64)
            zeros_r = np.zeros(len(right), dtype=np.int64)
            hits = (window_prefix(group_r, zeros_r, right.weights, group_l, zeros_l, True)
                    - window_prefix(group_r, zeros_r, right.weights, group_l, zeros_l, False))
            return exact_dot(left.weights, hits)

        # narrowest window relative to its spread leads the sweep
        binding.sort(key=lambda i: lanes[i].form.tolerance / max(lanes[i].spread, 1e-300))
        p = binding[0]
        t = lanes[p].tolerance_units
        v_l, v_r = left.windows[:, p], right.windows[:, p]
        if len(binding) == 1:
            hits = (window_prefix(group_r, v_r, right.weights, group_l, v_l + t, True)
                    - window_prefix(group_r, v_r, right.weights, group_l, v_l - t, False))
            return exact_dot(left.weights, hits)

        ones = np.ones(len(right), dtype=np.int64)
        hi = window_prefix(group_r, v_r, ones, group_l, v_l + t, True)
        lo = window_prefix(group_r, v_r, ones, group_l, v_l - t, False)
        order = np.lexsort((v_r, group_r))
        q = binding[1]
        tq = lanes[q].tolerance_units
        u_l, u_r = left.windows[:, q], right.windows[order, q]
        w_r = right.weights[order]
        total = 0
        for rows, partners in expand_ranges(lo, hi):
            ok = np.abs(u_l[rows] - u_r[partners]) <= tq
            total += exact_dot(left.weights[rows][ok], w_r[partners][ok])
        return total

    def diagonal_count(self, system):
        """Sum of squared multiset weights: pairs whose right side permutes the left."""
        if not system.symmetric:
            raise PreconditionError("diagonal count needs identical slot structure on both sides")
        table = self.side_table(system, LEFT, self.lanes(system))
        return exact_dot(table.weights, table.weights)

    def brute_oracle(self, system):
        started = time.perf_counter()
        lanes = self.lanes(system)
        F = len(system.exact_forms)
        sides = {}
        for side in (LEFT, RIGHT):
            rows = 1
            for g in system.side_groups(side):
                rows *= g.interval.size ** g.multiplicity
            if rows * (F + len(lanes)) * 8 * 2 > self.memory_budget:
                raise OracleCeilingError(f"{rows} ordered tuples per side exceed the memory budget",
                                         budget=self.memory_budget, estimate=rows)
            sums = None
            for g in system.side_groups(side):
                tuples = ordered_tuples(self.columns(system, g.interval, lanes), g.multiplicity)
                ones = np.ones(len(tuples), dtype=np.int64)
                sums = tuples if sums is None else cartesian_combine((sums, np.ones(len(sums), dtype=np.int64)),
                                                                     (tuples, ones))[0]
            sides[side] = sums
        left, right = sides[LEFT], sides[RIGHT]
        group_l, group_r = joint_group_ids(left[:, :F], right[:, :F])
        per_group = np.bincount(group_r, minlength=int(max(group_l.max(), group_r.max())) + 1)
        candidates = exact_dot(np.ones(len(group_l), dtype=np.int64), per_group[group_l])
        if candidates > self.oracle_ceiling:
            raise OracleCeilingError(
                f"{candidates} candidate pairs exceed the oracle ceiling {self.oracle_ceiling}",
                budget=self.oracle_ceiling, estimate=candidates)
        checked = [(F + i, lane.tolerance_units) for i, lane in enumerate(lanes) if lane.form.binds]
        if not checked:
            count = candidates
        else:
            order = np.argsort(group_r, kind="stable")
            sorted_groups = group_r[order]
            lo = np.searchsorted(sorted_groups, group_l, side="left")
            hi = np.searchsorted(sorted_groups, group_l, side="right")
            count = 0
            for rows, partners in expand_ranges(lo, hi):
                partners = order[partners]
                ok = np.ones(len(rows), dtype=bool)
                for col, units in checked:
                    ok &= np.abs(left[rows, col] - right[partners, col]) <= units
                count += int(np.count_nonzero(ok))
        result = CountResult(count, system, 0, time.perf_counter() - started, "brute",
                             tuple(l.scale_bits for l in lanes))
        self._record(result)
        return result

    def _record(self, result):
        logger.info("%s count %d in %.3fs (N=%d, s=%d)", result.engine, result.count,
                    result.wall_time, result.system.N, result.system.s)
        if self.session is None:
            return
        self.session.add(CountRecord(fingerprint=result.system.fingerprint(self.scale_bits).hex(),
                                     engine=result.engine, count=str(result.count),
                                     enumerated_multisets=result.enumerated_multisets,
                                     wall_time=result.wall_time))
        self.session.commit()
