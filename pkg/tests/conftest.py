import numpy as np
import pytest

from dmwsim.config import GROUP1_PMF, GROUP2_PMF
from dmwsim.model import ArrivalSpec, ChannelSpec
from dmwsim.sim import SimConfig

RATES = (1, 2, 3, 4, 5)


def paper_channel(n_users=20):
    return ChannelSpec.grouped(RATES, (GROUP1_PMF, GROUP2_PMF), n_users)


def paper_config(total, policy="mw", n_users=20, slots=20_000, seed=1, **kw):
    return SimConfig(
        channel=paper_channel(n_users),
        arrivals=ArrivalSpec.uniform(total, n_users),
        slots=slots,
        policy=policy,
        seed=seed,
        **kw,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance results, printed as one line per criterion at the end of the run.
ACCEPTANCE = []


def record(criterion, passed, detail):
    ACCEPTANCE.append((criterion, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
