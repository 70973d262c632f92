import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(cid, title): test backs one acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            cid, title = m.args
            _criteria.setdefault(cid, {"title": title, "ok": True, "ran": 0})
            item.user_properties.append(("acceptance", cid))


def pytest_runtest_logreport(report):
    cid = dict(report.user_properties).get("acceptance")
    if cid is None:
        return
    entry = _criteria[cid]
    if report.when == "call" or report.failed:
        if report.when == "call":
            entry["ran"] += 1
        if report.failed or report.skipped:
            entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_criteria, key=lambda c: int(c[2:])):
        e = _criteria[cid]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        terminalreporter.write_line(f"{status} {cid}: {e['title']}")


@pytest.fixture
def world():
    from pisim.world import build_world

    return build_world()
