"""Per-criterion summary for tests tagged ``@pytest.mark.criterion(id, title)``.

A criterion passes when every test tagged with its id passes; it is skipped
when all of them are skipped and fails otherwise.
"""
import re

import pytest

_CRITERIA: dict[str, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when != "call" and not rep.passed):
        cid, title = mark.args
        entry = _CRITERIA.setdefault(cid, {"title": title, "outcomes": []})
        entry["outcomes"].append(rep.outcome)


def _order(cid: str):
    m = re.match(r"([A-Za-z]*)(\d+)", cid)
    return (m.group(1), int(m.group(2))) if m else (cid, 0)


def _status(outcomes) -> str:
    if "failed" in outcomes:
        return "FAIL"
    if all(o == "skipped" for o in outcomes):
        return "SKIP"
    return "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=_order):
        entry = _CRITERIA[cid]
        terminalreporter.write_line(f"ACCEPTANCE {cid:<4} {_status(entry['outcomes']):<4} {entry['title']}")
