import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the summary lists them after the run."""
    results = request.config.stash[_RESULTS]

    def record(number: int, name: str, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
        results.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, [])
    if results:
        terminalreporter.section("acceptance criteria")
        for line in sorted(results, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
