import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("rydgen", max_examples=40, deadline=None)
settings.load_profile("rydgen")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = [l for name, mod in list(sys.modules.items()) if name.endswith("test_acceptance") for l in getattr(mod, "RESULTS", [])]
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
