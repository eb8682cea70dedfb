import pytest
from hypothesis import settings

from tvcsim import sim
from tvcsim.defaults import default_vehicle

# fixed example sequence so the suite is reproducible run to run
settings.register_profile("repro", derandomize=True, print_blob=True)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def vehicle():
    return default_vehicle()


@pytest.fixture(scope="session")
def build():
    """Nominal feedforward flight, operating points and gain schedule."""
    return sim.run_nominal_and_build(sim.ScenarioConfig())


@pytest.fixture(scope="session")
def points(build):
    return build.points


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record and print the one-line verdict of an acceptance criterion."""
    results = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        results[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
