import numpy as np
import pytest
from hypothesis import settings

from blankopt.config import Config
from blankopt.fields import GridSpec
from blankopt.geometry import build_reference

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def config():
    return Config.default()


@pytest.fixture(scope="session")
def ref(config):
    return build_reference(config)


@pytest.fixture(scope="session")
def desk_spec(config, ref):
    return GridSpec.around(ref.bbox, config.get_int("grid", "height"), config.get_int("grid", "width"),
                           config.get_float("grid", "margin"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from test_acceptance import ACCEPTANCE_KEY

    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
