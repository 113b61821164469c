from pathlib import Path

import pytest

from pshape import treefile
from pshape.fec import load_bundled_code

DATA = Path(__file__).resolve().parents[1] / "src" / "pshape" / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def small_codec():
    return treefile.load_codec(DATA / "small_tree.spec")


@pytest.fixture(scope="session")
def hidm320():
    return treefile.load_codec(DATA / "hidm_320.spec")


@pytest.fixture(scope="session")
def bundled_code():
    return load_bundled_code()


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture
def acceptance(request):
    """report(number, ok, detail): record one criterion line, then fail the test if not ok."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
