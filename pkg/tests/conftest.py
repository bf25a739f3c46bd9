import pytest

from insidertc.fbode import TimeGrid, solve_equilibrium
from insidertc.kernels import available_backends
from insidertc.params import MarketParams

FIG3 = MarketParams(A=1.0, c=0.2, sigma=1.0, Sigma0v=0.5, T=1.0)
RISK_NEUTRAL = MarketParams(A=0.0, c=0.5, sigma=1.0, Sigma0v=1.0, T=1.0)
BACKENDS = sorted(available_backends())


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running Monte Carlo or sweep")


@pytest.fixture(scope="session")
def fig3_profiles():
    return solve_equilibrium(FIG3, TimeGrid(1.0, 2000))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
