from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from solver_config import solver_config

DATABASE_URL = solver_config.database_url

# sqlite connections are shared with the sweep worker threads
connect_args = {"check_same_thread": False} if DATABASE_URL.startswith("sqlite") else {}

engine = create_engine(DATABASE_URL, connect_args=connect_args)
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)

Base = declarative_base()


def init_db(bind=None):
    import models  # noqa: F401  registers the tables on Base
    Base.metadata.create_all(bind=bind or engine)
