import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from helpers import ACCEPTANCE

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



_ACCEPTANCE_ID = re.compile(r"test_acceptance\.py::test_c(\d+)_")


def pytest_terminal_summary(terminalreporter):
    status = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = _ACCEPTANCE_ID.search(getattr(rep, "nodeid", ""))
            if not m:
                continue
            n = int(m.group(1))
            if outcome != "passed" or rep.when == "call":
                status[n] = status.get(n, True) and outcome == "passed"
    if not status:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(status):
        detail = ACCEPTANCE.get(n, "no result recorded")
        verdict = "PASS" if status[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {detail}")
