import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sppa.geometry import Euclidean, Hyperboloid, Product, Spider

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SPACES = {
    "euclidean3": Euclidean(3),
    "hyperboloid2": Hyperboloid(2),
    "hyperboloid4": Hyperboloid(4),
    "spider3": Spider(3),
    "product": Product((Euclidean(2), Spider(3))),
}

# criterion label -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


@pytest.fixture(params=sorted(SPACES), ids=sorted(SPACES))
def space(request):
    return SPACES[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0])):
        ok, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}")
