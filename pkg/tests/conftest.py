import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from arlda import InexactSnapshot, OuterFunction

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

H_CASES = [
    OuterFunction("zero"),
    OuterFunction("l1"),
    OuterFunction("weighted-l1", 0.3),
    OuterFunction("l2", 1.5),
    OuterFunction("linf", 2.0),
]


def random_instance(rng, n, m, scale=1.0):
    g = scale * rng.standard_normal(n)
    c = scale * rng.standard_normal(m)
    J = scale * rng.standard_normal((m, n))
    return InexactSnapshot.from_arrays(g, c, J)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    RESULTS = getattr(module, "RESULTS", None)
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in RESULTS.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
