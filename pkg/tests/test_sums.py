"""
Tests for exponential sums, Monte Carlo moments and van der Corput partitions
"""
from fractions import Fraction

import numpy as np
import pytest
from sympy import nextprime

from mvtlab.exceptions import PreconditionError
from mvtlab.presets import SystemTemplate
from mvtlab.services import CounterService, SumsService
from mvtlab.services.sums_service import Phase, phase_from_law
from mvtlab.systems import MomentSpec, PhaseTerm

QUADRATIC = MomentSpec(16, 4, (PhaseTerm(1), PhaseTerm(2)))


class TestExpSum:
    """Test exponential sum evaluation"""

    def test_origin(self, sums):
        """Test x = 0 gives the number of terms"""
        value = sums.eval_exp_sum(QUADRATIC, [0.0, 0.0])
        assert value.real == 8.0
        assert value.imag == 0.0
        assert value.n_terms == 8

    def test_alternating(self, sums):
        """Test e(n/2) over an even number of terms cancels"""
        spec = MomentSpec(16, 2, (PhaseTerm(1),))
        assert abs(sums.eval_exp_sum(spec, [0.5])) < 1e-12

    def test_paths_agree(self, sums):
        """Test direct reduction and the recurrence path agree to 1e-9"""
        spec = SystemTemplate.build("n8").moment_spec(64)
        rng = np.random.default_rng(7)
        for x in rng.random((5, 3)):
            direct = sums.eval_exp_sum(spec, x)
            recurrence = sums.eval_exp_sum_recurrence(spec, x)
            assert abs(direct.value - recurrence.value) < 1e-9
            assert abs(direct) <= 32 + 1e-9

    @pytest.mark.parametrize("lam", ["N^0", "N^-3"])
    def test_paths_agree_i6_at_512(self, sums, lam):
        """Test the quartic sums at N=512 agree to 1e-9 on both paths"""
        spec = SystemTemplate.build("i6", {"lambda": lam}).moment_spec(512)
        rng = np.random.default_rng(11)
        for x in rng.random((5, 2)):
            direct = sums.eval_exp_sum(spec, x)
            recurrence = sums.eval_exp_sum_recurrence(spec, x)
            assert abs(direct.value - recurrence.value) < 1e-9

    def test_large_phase(self, sums):
        """Test n^4 near 2^56 still reduces exactly on both paths"""
        spec = MomentSpec(2 ** 14, 2, (PhaseTerm(4),))
        x = [0.3]
        direct = sums.eval_exp_sum(spec, x)
        recurrence = sums.eval_exp_sum_recurrence(spec, x)
        assert abs(direct.value - recurrence.value) < 1e-9

    def test_wrong_dimension(self, sums):
        with pytest.raises(PreconditionError):
            sums.eval_exp_sum(QUADRATIC, [0.1])


class TestMonteCarlo:
    """Test Monte Carlo moments against exact counts"""

    def test_parseval(self, sums):
        """Test the second moment equals the number of terms"""
        spec = MomentSpec(16, 2, (PhaseTerm(1), PhaseTerm(2)))
        estimate = sums.mc_moment(spec, 20000, seed=1)
        assert abs(estimate.mean - 8) <= 4 * estimate.stderr

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_exact_count(self, sums, seed):
        """Test the fourth moment of n, n^2 matches the count 120"""
        estimate = sums.mc_moment(QUADRATIC, 20000, seed=seed)
        assert abs(estimate.mean - 120) <= 4 * estimate.stderr

    def test_stderr_scaling(self, sums):
        """Test ten times the samples shrinks the error about sqrt(10) times"""
        spec = MomentSpec(16, 2, (PhaseTerm(1), PhaseTerm(2)))
        small = sums.mc_moment(spec, 2000, seed=3)
        large = sums.mc_moment(spec, 20000, seed=3)
        assert 2.5 < small.stderr / large.stderr < 4.0

    def test_workers_deterministic(self):
        """Test the estimate does not depend on the thread count"""
        a = SumsService(workers=1).mc_moment(QUADRATIC, 5000, seed=9)
        b = SumsService(workers=4).mc_moment(QUADRATIC, 5000, seed=9)
        assert a.mean == b.mean

    def test_too_few_samples(self, sums):
        with pytest.raises(PreconditionError):
            sums.mc_moment(QUADRATIC, 10)

    @pytest.mark.slow
    def test_window_count_comparable(self, sums):
        """Test the N_8 moment and its window count agree within a factor of 8"""
        template = SystemTemplate.build("n8", {"delta": "N^-1"})
        count = CounterService(workers=1).count(template.resolve(32)).count
        estimate = sums.mc_moment(template.moment_spec(32), 20000, seed=0)
        assert count / 8 <= estimate.mean <= 8 * count


class TestWeyl:
    """Test Weyl sums"""

    def test_trivial_modulus(self, sums):
        """Test q = 1 gives N"""
        assert sums.weyl_sum(0, 1, 100).real == 100

    def test_half(self, sums):
        """Test a/q = 1/2 alternates and cancels for even N"""
        assert abs(sums.weyl_sum(1, 2, 10)) < 1e-9

    def test_gcd(self, sums):
        with pytest.raises(PreconditionError):
            sums.weyl_sum(2, 4, 100)

    def test_scan_within_bound(self, sums):
        """Test |f_8(a/q; N)| stays under the bound for 50 moduli near N^4"""
        N = 2 ** 10
        moduli = [int(nextprime(2 ** 40 + i * 10 ** 6)) for i in range(10)]
        pairs = [(a, q) for q in moduli for a in (1, 2, 3, 5, 7)]
        rows = sums.weyl_scan(N, pairs, "sigma-56-3840")
        assert len(rows) == 50
        # near q = N^4 the bound sits below the trivial N
        assert all(r["rhs"] < N for r in rows)
        assert all(r["ratio"] <= 1 for r in rows)

    def test_sigma_names(self, sums):
        assert sums.resolve_sigma("sigma-3-256") == Fraction(3, 256)
        assert sums.resolve_sigma("1/84") == Fraction(1, 84)


class TestVanDerCorput:
    """Test partition sums and their bounds"""

    def test_zero_phase(self, sums):
        """Test f = 0 gives N*D/2 and is flagged degenerate"""
        report = sums.vdc_partition_sum(Phase(PhaseTerm(1), 0.0), 8, 64)
        assert report.partition_sum == pytest.approx(64 * 8 / 2)
        assert report.degenerate
        assert report.short_block_bound == 64

    def test_single_block(self, sums):
        """Test D = range length gives the full sum squared"""
        phase = phase_from_law("3/2", 1)
        report = sums.vdc_partition_sum(phase, 32, 64)
        assert report.intervals == 1
        assert report.partition_sum == pytest.approx(report.full_sum_sq)

    def test_cauchy_schwarz_floor(self, sums):
        """Test the partition sum is at least |full sum|^2 / number of blocks"""
        phase = phase_from_law("3/2", 1)
        for D in (4, 8, 16):
            report = sums.vdc_partition_sum(phase, D, 64)
            assert report.partition_sum >= report.full_sum_sq / report.intervals - 1e-6

    def test_within_audit(self, sums):
        """Test f(n) = N (n/N)^(3/2), D = sqrt(N) at N = 2^12 stays within the audit constant"""
        report = sums.vdc_partition_sum(phase_from_law("3/2", 1), 64, 2 ** 12)
        assert not report.degenerate
        assert not report.sign_warning
        assert report.within_audit

    def test_bad_D(self, sums):
        with pytest.raises(PreconditionError):
            sums.vdc_partition_sum(phase_from_law("3/2", 1), 0, 64)
