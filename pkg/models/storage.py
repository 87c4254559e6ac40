from sqlalchemy import Column, Integer, BigInteger, String, Text, DateTime, Index
from sqlalchemy.sql import func
from models.database import Base


class MeterReadingRow(Base):
    """One row per reading (architectures I and II)"""
    __tablename__ = "meter_readings"

    household_serial = Column(BigInteger, primary_key=True)
    slot = Column(Integer, primary_key=True)
    day = Column(Integer, nullable=False)
    slot_of_day = Column(Integer, nullable=False)
    wh = Column(BigInteger, nullable=False)  # kWh x 1000

    __table_args__ = (
        Index('idx_reading_day_slot', 'day', 'slot_of_day'),
    )


class IngestBatch(Base):
    """Idempotency record: one row per (cn, day) ever ingested"""
    __tablename__ = "ingest_batches"

    cn = Column(Integer, primary_key=True)
    day = Column(Integer, primary_key=True)
    reading_count = Column(Integer, nullable=False)
    ingested_at = Column(DateTime, default=func.now())


class MonthlyBlob(Base):
    """Key-value row: household key -> appended XML reading string (architecture III)"""
    __tablename__ = "monthly_blobs"

    household_serial = Column(BigInteger, primary_key=True)
    month_key = Column(String(7), nullable=False, index=True)
    value = Column(Text, nullable=False, default="")
    entry_count = Column(Integer, nullable=False, default=0)


class StorageMonth(Base):
    """Months whose file layout has been built (architecture IV)"""
    __tablename__ = "storage_months"

    month_key = Column(String(7), primary_key=True)
    household_count = Column(Integer, nullable=False)
    root_path = Column(String(1024), nullable=False)
    created_at = Column(DateTime, default=func.now())


class HouseholdFile(Base):
    """Metadata pointers from a household to its month files (architecture IV)"""
    __tablename__ = "household_files"

    household_serial = Column(BigInteger, primary_key=True)
    month_key = Column(String(7), primary_key=True)
    timestamp_path = Column(String(1024), nullable=False)
    consumption_path = Column(String(1024), nullable=False)

    __table_args__ = (
        Index('idx_household_file_month', 'month_key'),
    )
