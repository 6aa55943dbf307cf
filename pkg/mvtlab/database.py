import logging

from sqlalchemy import create_engine
from sqlalchemy.orm import scoped_session, sessionmaker

from .config import Config
from .models import Base

logger = logging.getLogger(__name__)

engine = create_engine(Config.DATABASE_URL, echo=False)


def init_db(bind=None):
    Base.metadata.create_all(bind=bind or engine)
    logger.info("Database initialized at %s", Config.DATABASE_URL)


def get_scoped_session(bind=None):
    """Thread-local sessions, for services that count on worker threads."""
    return scoped_session(sessionmaker(autocommit=False, autoflush=False, bind=bind or engine))


def make_session(url):
    """Session on a separate database, e.g. ``sqlite://`` in tests."""
    other = create_engine(url, echo=False)
    Base.metadata.create_all(bind=other)
    return sessionmaker(autocommit=False, autoflush=False, bind=other)()
