from datetime import datetime

from sqlalchemy import Column, DateTime, Float, Integer, String, Text
from sqlalchemy.orm import declarative_base

Base = declarative_base()


class CachedTable(Base):
    __tablename__ = 'cached_tables'

    id = Column(Integer, primary_key=True)
    fingerprint = Column(String(64), unique=True, nullable=False)
    path = Column(String(500), nullable=False)
    record_count = Column(Integer, nullable=False)
    scale_bits = Column(Integer, nullable=False)
    created_at = Column(DateTime, default=datetime.utcnow)

    def __repr__(self):
        return f"<CachedTable {self.fingerprint[:12]} records={self.record_count}>"


class CountRecord(Base):
    __tablename__ = 'count_records'

    id = Column(Integer, primary_key=True)
    fingerprint = Column(String(64), nullable=False, index=True)
    engine = Column(String(20), nullable=False)
    # Counts reach ~10^21, beyond any SQL integer type
    count = Column(String(40), nullable=False)
    enumerated_multisets = Column(Integer, default=0)
    wall_time = Column(Float, default=0.0)
    created_at = Column(DateTime, default=datetime.utcnow)

    def count_value(self):
        return int(self.count)


class LadderRun(Base):
    __tablename__ = 'ladder_runs'

    id = Column(Integer, primary_key=True)
    template = Column(String(100), nullable=False)
    ladder = Column(String(200), nullable=False)
    slope = Column(Float, nullable=False)
    intercept = Column(Float, nullable=False)
    max_residual = Column(Float, nullable=False)
    claimed_exponent = Column(String(20))
    verdict = Column(String(20))
    report = Column(Text)
    created_at = Column(DateTime, default=datetime.utcnow)

    def ladder_values(self):
        return [int(v) for v in self.ladder.split(",")]
