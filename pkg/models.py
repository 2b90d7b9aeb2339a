from sqlalchemy import Column, Integer, String, Float, DateTime, ForeignKey, Text
from sqlalchemy.orm import relationship
from database import Base
import datetime


class SweepRun(Base):
    __tablename__ = "sweep_runs"

    id = Column(Integer, primary_key=True, index=True)
    system = Column(String(50), index=True)
    output_dir = Column(String(500))
    manifest_path = Column(String(500))
    config_json = Column(Text)
    created_at = Column(DateTime, default=datetime.datetime.utcnow)

    records = relationship("SweepRecord", back_populates="run", order_by="SweepRecord.cell_index")


class SweepRecord(Base):
    __tablename__ = "sweep_records"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("sweep_runs.id"), index=True)
    cell_index = Column(Integer)
    a_index = Column(Integer)
    b_index = Column(Integer)
    a = Column(Float)
    b = Column(Float)
    b_rel = Column(Float)
    b_star = Column(Float)
    theta_star = Column(Float)
    colliding = Column(String(50))
    regime = Column(String(50))
    lyapunov = Column(Float)
    flat_fraction = Column(Float)
    area = Column(Float)
    lipschitz = Column(Float)
    capture_fraction = Column(Float)
    status = Column(String(50), default="ok", index=True)
    message = Column(Text)

    run = relationship("SweepRun", back_populates="records")
