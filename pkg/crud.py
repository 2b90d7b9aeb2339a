from typing import List
from sqlalchemy.orm import Session
from models import SweepRecord, SweepRun
from schemas import SweepConfig, SweepRow


def create_sweep_run(db: Session, config: SweepConfig, output_dir: str, manifest_path: str):
    db_run = SweepRun(system=config.system, output_dir=output_dir, manifest_path=manifest_path,
                      config_json=config.model_dump_json())
    db.add(db_run)
    db.commit()
    db.refresh(db_run)
    return db_run


def add_sweep_records(db: Session, run_id: int, rows: List[SweepRow]) -> int:
    for row in rows:
        db.add(SweepRecord(run_id=run_id, **row.model_dump()))
    db.commit()
    return len(rows)


def get_sweep_records(db: Session, run_id: int, status: str = None, skip: int = 0, limit: int = 1000):
    query = db.query(SweepRecord).filter(SweepRecord.run_id == run_id)
    if status:
        query = query.filter(SweepRecord.status == status)
    return query.order_by(SweepRecord.cell_index).offset(skip).limit(limit).all()


def get_sweep_runs(db: Session, system: str = None, skip: int = 0, limit: int = 100):
    query = db.query(SweepRun)
    if system:
        query = query.filter(SweepRun.system == system)
    return query.order_by(SweepRun.id).offset(skip).limit(limit).all()
