import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from twomass.controllers import canonical_hinf_controller
from twomass.plant import PlantParams

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def plant():
    return PlantParams()


@pytest.fixture(scope="session")
def controllers():
    return canonical_hinf_controller()


def random_stable_ss(rng, n, m=1, p=1, margin=0.1):
    """Random Hurwitz realization with spectral abscissa at most ``-margin``."""
    from twomass.lti import StateSpaceModel
    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + margin + rng.random()) * np.eye(n)
    return StateSpaceModel(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)), np.zeros((p, m)))


# -- acceptance reporting ----------------------------------------------------

_ACCEPTANCE: list[str] = []


@pytest.fixture
def record():
    """Log one PASS/FAIL line per criterion and assert it."""
    def _record(criterion: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
