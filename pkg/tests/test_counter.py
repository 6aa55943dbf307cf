"""
Tests for the counting engines
"""
import logging
import math
import random

import pytest

from mvtlab.exceptions import CapacityError, PrecisionError, PreconditionError
from mvtlab.models import CountRecord
from mvtlab.presets import SystemTemplate
from mvtlab.services import CounterService
from mvtlab.systems import IntRange, LEFT, RIGHT, SlotGroup, WindowSystem


def random_systems(build_system, count=20, seed=20240611):
    rng = random.Random(seed)
    systems = []
    for _ in range(count):
        N = rng.choice([8, 10, 12])
        s = rng.choice([2, 3])
        exact = rng.choice([(), (1,), (2,), (1, 2)])
        n_windows = rng.choice([1, 2])
        powers = rng.sample(["1/2", "3/2", "5/2"], n_windows)
        windows = tuple((p, rng.choice([0.0, 0.001, 0.01, 0.05, 0.2]), True) for p in powers)
        systems.append(build_system(N, s, exact=exact, windows=windows))
    return systems


class TestExactCounts:
    """Test the convolution engine"""

    def test_single_slot(self, counter, build_system):
        """Test s=1 counts the diagonal n = m"""
        assert counter.count(build_system(16, 1)).count == 8

    def test_quadratic_system(self, counter, build_system):
        """Test n1+n2=n3+n4, n1^2+n2^2=n3^2+n4^2 has only diagonal solutions"""
        result = counter.count_exact(build_system(16, 2))
        assert result.count == 120
        assert result.engine == "convolution"

    def test_matches_oracle(self, counter, build_system):
        """Test convolution equals the brute-force oracle"""
        system = build_system(8, 2)
        assert counter.count_exact(system).count == counter.brute_oracle(system).count == 28

        system = build_system(16, 5, exact=(2, 4))
        assert counter.count_exact(system).count == counter.brute_oracle(system).count

    def test_meet_in_the_middle(self, counter, build_system):
        """Test the bucketed split agrees with the direct convolution"""
        system = build_system(16, 4)
        direct = counter.count_exact(system).count
        split = CounterService(workers=1, memory_budget=20000).count_exact(system).count
        assert split == direct == counter.brute_oracle(system).count

    def test_meet_in_the_middle_buckets(self, counter, build_system, caplog):
        """Test the bucket count follows the budget left after the half tables"""
        system = build_system(16, 4)
        with caplog.at_level(logging.INFO, logger="mvtlab.services.counter_service"):
            CounterService(workers=1, memory_budget=20000).count_exact(system)
        (message,) = [r.getMessage() for r in caplog.records if "buckets" in r.getMessage()]
        assert int(message.split()[-2]) >= 2

    def test_capacity(self, build_system):
        """Test a budget below the half tables raises CapacityError"""
        with pytest.raises(CapacityError) as exc:
            CounterService(workers=1, memory_budget=100).count_exact(build_system(16, 4))
        assert exc.value.budget == 100

    def test_rejects_windows(self, counter, n8_system):
        with pytest.raises(PreconditionError):
            counter.count_exact(n8_system)


class TestWindowedCounts:
    """Test the group sweep engine"""

    def test_random_systems_match_oracle(self, counter, build_system):
        """Test sweep and oracle agree on randomized mixed systems"""
        for system in random_systems(build_system):
            assert counter.count(system).count == counter.brute_oracle(system).count, system.describe()

    def test_n8_matches_oracle(self, counter, n8_system):
        """Test N_8(1/N) at N=32 against the oracle"""
        assert counter.count_windowed(n8_system).count == counter.brute_oracle(n8_system).count

    def test_two_windows_match_oracle(self, counter):
        """Test N_10 with both windows binding against the oracle"""
        system = SystemTemplate.build("n10", {"delta": "N^-1", "Delta": "N^-1/2"}).resolve(12)
        assert len(system.windowed_forms) == 2
        assert counter.count(system).count == counter.brute_oracle(system).count

    def test_infinite_window(self, counter, build_system):
        """Test T = inf reduces to the exact count"""
        system = build_system(16, 2, windows=(("3/2", math.inf, True),))
        assert counter.count_windowed(system).count == 120

    def test_zero_window_is_diagonal(self, counter, build_system):
        """Test T = 0 on (n/N)^(3/2) leaves only permutations"""
        system = build_system(16, 2, exact=(1,), windows=(("3/2", 0.0, True),))
        assert counter.count(system).count == counter.diagonal_count(system) == 120

    def test_diagonal_lower_bound(self, counter):
        """Test every count is at least the diagonal"""
        system = SystemTemplate.build("n10").resolve(24)
        result = counter.count(system)
        assert result.diagonal == counter.diagonal_count(system)
        assert result.count >= result.diagonal

    def test_monotone_in_tolerance(self, counter, build_system):
        """Test widening the window never lowers the count"""
        base = build_system(16, 4, windows=(("3/2", 0.0, True),))
        counts = [counter.count(base.with_tolerances([t])).count for t in (0.0, 1e-3, 1e-2, 1e-1, 1.0)]
        assert counts == sorted(counts)

    def test_workers_deterministic(self, n8_system):
        """Test counts do not depend on the thread count"""
        counts = {CounterService(workers=w).count(n8_system).count for w in (1, 4, 8)}
        assert len(counts) == 1

    def test_precision_error(self, counter, build_system):
        """Test windows below the fixed-point resolution are refused"""
        system = build_system(16, 2, windows=(("3/2", 1e-20, True),))
        with pytest.raises(PrecisionError):
            counter.count(system)

    def test_too_many_windows(self, counter, build_system):
        system = build_system(16, 2, exact=(), windows=(("1/2", 0.1, True), ("3/2", 0.1, True),
                                                        ("5/2", 0.1, True)))
        with pytest.raises(PreconditionError):
            counter.count(system)

    def test_memory_budget(self, n8_system):
        """Test the preflight estimate is compared with the budget"""
        with pytest.raises(CapacityError) as exc:
            CounterService(workers=1, memory_budget=1000).count(n8_system)
        assert exc.value.estimate > 1000


class TestBilinearCounts:
    """Test counts over separated slot groups"""

    def test_matches_oracle(self, counter):
        """Test the bilinear count at N=32 against the oracle"""
        system = SystemTemplate.build("bilinear-n3").resolve(32)
        assert counter.count_bilinear(system).count == counter.brute_oracle(system).count

    def test_group_order_irrelevant(self, counter):
        """Test listing the groups in another order gives the same count"""
        system = SystemTemplate.build("bilinear-n3").resolve(32)
        shuffled = WindowSystem(tuple(reversed(system.groups)), system.exact_forms, system.windowed_forms, 32)
        assert counter.count_bilinear(shuffled).count == counter.count_bilinear(system).count

    def test_needs_two_groups(self, counter, n8_system):
        with pytest.raises(PreconditionError):
            counter.count_bilinear(n8_system)

    def test_overlap_rejected(self):
        """Test U_1 = U_2 is rejected"""
        u = IntRange(17, 20)
        with pytest.raises(PreconditionError):
            WindowSystem(tuple(SlotGroup(u, 2, side) for side in (LEFT, RIGHT) for _ in range(2)), (1, 2), (), 32)


class TestCountRecords:
    """Test count persistence"""

    def test_records_saved(self, test_session, build_system):
        """Test each count leaves a CountRecord row"""
        counter = CounterService(session=test_session, workers=1)
        counter.count(build_system(16, 2))
        rows = test_session.query(CountRecord).all()
        assert len(rows) == 1
        assert rows[0].count_value() == 120
        assert rows[0].engine == "convolution"
