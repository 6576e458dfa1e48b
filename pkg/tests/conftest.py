"""Shared fixtures and the acceptance-summary reporting hook."""

from __future__ import annotations

import pathlib

import pytest

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

# nodeid -> (criterion number, short label); filled at collection time.
_ACCEPTANCE_ITEMS: dict[str, tuple[int, str]] = {}


@pytest.fixture(scope="session")
def simple_path() -> pathlib.Path:
    return FIXTURES / "simple.ocp"


@pytest.fixture(scope="session")
def rocket_path() -> pathlib.Path:
    return FIXTURES / "rocket.ocp"


@pytest.fixture(scope="session")
def simple_problem(simple_path):
    from symoc import load_problem

    return load_problem(simple_path)


@pytest.fixture(scope="session")
def rocket_problem(rocket_path):
    from symoc import load_problem

    return load_problem(rocket_path)


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(num, label): ties a test to a numbered acceptance check "
        "so the terminal summary can print one verdict line per check",
    )


def pytest_collection_modifyitems(config, items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker is not None:
            _ACCEPTANCE_ITEMS[item.nodeid] = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_ITEMS:
        return
    # criterion number -> {outcome category -> [reports]}
    grouped: dict[int, dict[str, list]] = {}
    labels: dict[int, str] = {}
    for category in ("passed", "failed", "error", "xfailed", "xpassed", "skipped"):
        for rep in terminalreporter.stats.get(category, []):
            info = _ACCEPTANCE_ITEMS.get(getattr(rep, "nodeid", None))
            if info is None:
                continue
            num, label = info
            labels.setdefault(num, label)
            grouped.setdefault(num, {}).setdefault(category, []).append(rep)
    if not grouped:
        return
    lines = []
    for num in sorted(grouped):
        cats = grouped[num]
        n_pass = len(cats.get("passed", []))
        n_fail = len(cats.get("failed", [])) + len(cats.get("error", [])) + len(cats.get("xpassed", []))
        xfails = cats.get("xfailed", [])
        total = n_pass + n_fail + len(xfails)
        if n_fail:
            verdict = f"FAIL ({n_fail} of {total} checks failed)"
        elif xfails:
            reason = getattr(xfails[0], "wasxfail", "").removeprefix("reason: ")
            verdict = f"FAIL (expected: {len(xfails)} of {total} checks cannot pass; {reason})"
        else:
            verdict = "PASS" if total == 1 else f"PASS ({total} checks)"
        lines.append(f"acceptance {num:>2} {labels[num]}: {verdict}")
    terminalreporter.write_sep("-", "acceptance summary")
    for line in lines:
        terminalreporter.write_line(line)
