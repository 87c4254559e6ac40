from pathlib import Path
from typing import Sequence, Union

from sqlalchemy import Table, create_engine, event
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker

from config import settings

Base = declarative_base()


def sqlite_url(path: Union[str, Path]) -> str:
    return f"sqlite:///{Path(path).resolve()}"


def create_store_engine(url: str, tables: Sequence[Table]) -> Engine:
    """Engine for one embedded store holding only `tables`. Every backend owns its engines."""
    engine = create_engine(
        url,
        echo=settings.sqlite_echo,
        connect_args={
            "check_same_thread": False,
            "timeout": settings.sqlite_busy_timeout_seconds,
        },
    )

    @event.listens_for(engine, "connect")
    def _sqlite_pragmas(dbapi_connection, connection_record):
        cursor = dbapi_connection.cursor()
        cursor.execute("PRAGMA journal_mode=WAL")
        cursor.execute("PRAGMA synchronous=NORMAL")
        cursor.close()

    Base.metadata.create_all(bind=engine, tables=list(tables))
    return engine


def session_factory(engine: Engine) -> sessionmaker:
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)
