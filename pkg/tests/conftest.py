import json
from pathlib import Path

import pytest

from tautocontrol import load_system

DATA = Path(__file__).parent / "data"

# filled by test_acceptance: criterion number -> (passed, detail)
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def example_path() -> Path:
    return DATA / "example.json"


@pytest.fixture(scope="session")
def example(example_path):
    return load_system(example_path.read_bytes())


def make_system(doc: dict):
    return load_system(json.dumps(doc))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
