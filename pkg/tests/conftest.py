import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fpheom.polefit import FitConfig, fit_decomposition
from fpheom.spectrum import SubohmicParams, SubohmicSpectrum, build_domain, sample

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FLAGSHIP = SubohmicParams(s=0.5, alpha=0.05, omega_c=20.0)


@pytest.fixture(scope="session")
def flagship_samples():
    return sample(SubohmicSpectrum(FLAGSHIP), 0.0, build_domain(1e-4, 1e3, 100).grid)


@pytest.fixture(scope="session")
def flagship_fit(flagship_samples):
    return fit_decomposition(flagship_samples, FitConfig(1e-8))


@pytest.fixture(scope="session")
def fine_fit(flagship_samples):
    return fit_decomposition(flagship_samples, FitConfig(1e-9))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance(request, capsys):
    """Record and echo one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash[_LINES]

    def report(tag: str, passed, detail: str):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        line = f"{tag} {status}: {detail}"
        lines.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return passed

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
