import shutil
import sys

import pytest

from adcompliance.schema import default_attribute_suite
from adcompliance.toy import bundled_toy


@pytest.fixture
def suite():
    return default_attribute_suite()


@pytest.fixture
def toy_dir(tmp_path):
    """A private copy of the bundled toy workspace."""
    dest = tmp_path / "toy"
    shutil.copytree(bundled_toy(), dest)
    return dest


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
