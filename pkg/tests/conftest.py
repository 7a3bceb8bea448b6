from __future__ import annotations

from importlib import resources

import pytest

from apxsym.parse import parse_problem


def fixture_text(name: str) -> str:
    return (resources.files("apxsym") / "fixtures" / f"{name}.apx").read_text()


@pytest.fixture(scope="session")
def rdc():
    return parse_problem(fixture_text("rdc"))


@pytest.fixture(scope="session")
def telegraph():
    return parse_problem(fixture_text("telegraph"))


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
