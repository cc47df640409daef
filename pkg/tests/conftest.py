import pytest

import eightloop as el


@pytest.fixture(scope="session")
def quad_cfg():
    return el.QuadratureConfig()


@pytest.fixture(scope="session")
def consts():
    """Fitted analytic constants (one fit for the whole session)."""
    return el.default_constants()


@pytest.fixture(scope="session")
def integ_cfg():
    return el.IntegratorConfig()
