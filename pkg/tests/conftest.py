import os
import sys

import pytest
from hypothesis import settings

from coxql.dataset import bundled_split, released_split

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def train():
    return bundled_split("train")


@pytest.fixture(scope="session")
def test_split():
    return bundled_split("test")


@pytest.fixture(scope="session")
def released():
    """(train, test) from $COXQL_DATA_DIR, or None."""
    data_dir = os.environ.get("COXQL_DATA_DIR")
    tr, te = released_split("train", data_dir), released_split("test", data_dir)
    return (tr, te) if tr is not None and te is not None else None


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
