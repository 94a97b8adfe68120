# -*- coding: utf-8 -*-

import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy_utils import create_database, database_exists, drop_database

from aircraft_fusion.catalog import Base
from aircraft_fusion.taxonomy import default_taxonomy

CATALOG_TEST_DB_URI = "CATALOG_TEST_DB_URI"


def pytest_addoption(parser):
    parser.addoption(
        "--catalog-test-db-uri",
        action="store",
        dest=CATALOG_TEST_DB_URI,
        default="sqlite+pysqlite:///test_aircraft_fusion.db",
        help=(
            "DB uri for testing the results catalog (e.g. "
            '"sqlite+pysqlite:///test_aircraft_fusion.db")'
        ),
    )


@pytest.fixture(scope="session")
def db_uri(request):
    return request.config.getoption(CATALOG_TEST_DB_URI)


@pytest.fixture(scope="session")
def connection(db_uri):
    create_db(db_uri)
    engine = create_engine(db_uri)
    Base.metadata.create_all(engine)
    connection = engine.connect()

    yield connection

    connection.close()
    Base.metadata.drop_all(engine)
    engine.dispose()
    destroy_database(db_uri)


@pytest.fixture()
def session(connection):
    Session = sessionmaker(bind=connection)
    db_session = Session()

    yield db_session

    db_session.rollback()
    for table in reversed(Base.metadata.sorted_tables):
        db_session.execute(table.delete())
    db_session.commit()
    db_session.close()


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


def create_db(uri):
    """Drop the database at ``uri`` and create a brand new one."""
    destroy_database(uri)
    create_database(uri)


def destroy_database(uri):
    """Destroy the database at ``uri``, if it exists."""
    if database_exists(uri):
        drop_database(uri)
