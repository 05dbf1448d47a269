import hypothesis
import numpy as np
import pytest

from phobs import compute_parameter_bounds, enumerate_vertices
from phobs.config import load_config

hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.load_profile("ci")

CONFIG_PATH = "configs/dea.cfg"


@pytest.fixture(scope="session")
def cfg():
    return load_config(CONFIG_PATH)


@pytest.fixture(scope="session")
def dea(cfg):
    return cfg.system()


@pytest.fixture(scope="session")
def frozen_domain(cfg):
    return cfg.frozen_domain


@pytest.fixture(scope="session")
def bounds(dea, frozen_domain):
    return compute_parameter_bounds(dea, frozen_domain)


@pytest.fixture(scope="session")
def vertices(dea, bounds):
    return enumerate_vertices(dea, bounds)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260809)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None) if mod else None
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
