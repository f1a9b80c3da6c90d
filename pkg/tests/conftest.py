import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
sys.path.insert(0, str(TESTS))

PHOTOS = TESTS / "data" / "photos"


@pytest.fixture(scope="session")
def photo_paths():
    paths = sorted(PHOTOS.glob("*.png"))
    assert len(paths) >= 20
    return paths


@pytest.fixture(scope="session")
def synthetic_fixture(tmp_path_factory):
    """The generated end-to-end corpus, built once per session."""
    from imgspread.fixtures import make_synthetic_fixture

    root = tmp_path_factory.mktemp("e2e")
    truth = make_synthetic_fixture(root, seed=0)
    return root, truth


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
