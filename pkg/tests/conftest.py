import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# Property tests: fixed master seed (derandomized) and at least 200 cases each.
settings.register_profile(
    "pegamp",
    max_examples=200,
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("pegamp")

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "property: randomized invariant checks (hypothesis)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[report.nodeid] = (report.outcome, detail, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_criterion_")[1].split("_")[0])):
        outcome, detail, duration = _ACCEPTANCE[nodeid]
        name = nodeid.split("::")[-1].replace("test_", "")
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}  ({duration:.1f}s)  {detail}")
