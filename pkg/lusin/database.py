from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from lusin.config import settings
from lusin.errors import ConfigError


Base = declarative_base()


def build_engine(url: str | None = None):
    url = url or settings.archive_url
    if not url:
        raise ConfigError("run archive is disabled (archive_url is empty)")
    connect_args = {}
    if url.startswith("sqlite"):
        connect_args = {"check_same_thread": False}
    return create_engine(url, pool_pre_ping=True, connect_args=connect_args)


def session_factory(url: str | None = None) -> sessionmaker:
    # models must be imported before create_all sees their tables
    from lusin import models  # noqa: F401

    engine = build_engine(url)
    Base.metadata.create_all(bind=engine)
    return sessionmaker(bind=engine, autoflush=False, autocommit=False, expire_on_commit=False)
