"""
Tests for SQLAlchemy models
"""
from datetime import datetime

from mvtlab.models import CachedTable, CountRecord, LadderRun


class TestCountRecord:
    """Test CountRecord model"""

    def test_large_count(self, test_session):
        """Test counts beyond 64 bits survive the round trip"""
        record = CountRecord(fingerprint="ab" * 32, engine="group_sweep", count=str(3 ** 50),
                             enumerated_multisets=10, wall_time=0.5)
        test_session.add(record)
        test_session.commit()

        loaded = test_session.query(CountRecord).one()
        assert loaded.count_value() == 3 ** 50
        assert isinstance(loaded.created_at, datetime)


class TestLadderRun:
    """Test LadderRun model"""

    def test_ladder_values(self, test_session):
        run = LadderRun(template="n8[delta=N^-2]", ladder="32,64,128", slope=4.0, intercept=1.0,
                        max_residual=0.01, claimed_exponent="4", verdict="consistent")
        test_session.add(run)
        test_session.commit()
        assert run.id is not None
        assert run.ladder_values() == [32, 64, 128]


class TestCachedTable:
    """Test CachedTable model"""

    def test_repr(self, test_session):
        row = CachedTable(fingerprint="cd" * 32, path="/tmp/x.mvt", record_count=12, scale_bits=48)
        test_session.add(row)
        test_session.commit()
        assert "cdcdcdcdcdcd" in repr(row)
        assert "records=12" in repr(row)
