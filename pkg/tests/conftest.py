import warnings
from dataclasses import replace

import pytest

from hetcache.config import default_config

ACCEPTANCE_LINES = []


def record(criterion: str, ok: bool, detail: str = ""):
    """Log one acceptance criterion; printed in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}"
    if detail:
        line += f": {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cfg():
    return default_config(1.0)


@pytest.fixture(scope="session")
def cfg_asym(cfg):
    """Same tiers with a smaller MBS path-loss exponent."""
    return replace(cfg, mbs=replace(cfg.mbs, pathloss_exponent=3.5))


@pytest.fixture(scope="session")
def fig2_T():
    from hetcache.analytic import CachingDistribution
    return CachingDistribution([0.9, 0.8, 0.3] + [0.0] * 7, 2)


@pytest.fixture(scope="session")
def fig2_a():
    from hetcache.policies import zipf
    return zipf(10, 0.8)
