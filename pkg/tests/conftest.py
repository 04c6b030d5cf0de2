import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "scripts"))

from make_text_corpus import stdlib_text  # noqa: E402


@pytest.fixture(scope="session")
def text_1mb(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "text1m.txt"
    path.write_bytes(stdlib_text(1_000_000))
    return str(path)


@pytest.fixture(scope="session")
def text_small(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "small.txt"
    path.write_bytes(stdlib_text(60_000))
    return str(path)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
