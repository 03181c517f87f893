"""Shared fixtures: small simulated path sets reused across test modules."""

import numpy as np
import pytest

import ehf


@pytest.fixture(scope="session")
def gbm_small():
    """64 GBM paths, sigma 0.2, 30 daily steps."""
    cfg = ehf.SimConfig(n_paths=64, seed=11)
    return ehf.simulate_gbm(ehf.GBMParams(mu=0.0, sigma=0.2), cfg)


@pytest.fixture(scope="session")
def heston_small():
    """256 high-vol Heston paths, 30 daily steps."""
    cfg = ehf.SimConfig(n_paths=256, seed=11)
    return ehf.simulate_heston(ehf.HIGH_VOL, cfg)


@pytest.fixture(scope="session")
def heston_wide():
    """Larger high-vol set for statistics that need more paths."""
    cfg = ehf.SimConfig(n_paths=4096, seed=29)
    return ehf.simulate_heston(ehf.HIGH_VOL, cfg)


@pytest.fixture
def contract():
    return ehf.ContractSpec(strike=100.0, maturity_steps=30)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance verdict lines collected by test_acceptance.py."""
    lines = getattr(config, "_criterion_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
