"""Shared pytest configuration: per-criterion reporting for the acceptance suite."""

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(number, title): acceptance criterion checked by this test"
    )


def pytest_runtest_logreport(report):
    marker = dict(report.user_properties).get("criterion")
    if marker is None:
        return
    number, title = marker
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "seconds": 0.0, "detail": ""})
    if report.failed:
        entry["ok"] = False
    if report.when == "call":
        entry["seconds"] += report.duration
        entry["detail"] = dict(report.user_properties).get("detail", "")


def pytest_runtest_setup(item):
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        item.user_properties.append(("criterion", tuple(mark.args)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["ok"] else "FAIL"
        line = f"[{status}] criterion {number:>2}: {e['title']} ({e['seconds']:.1f} s)"
        if e["detail"]:
            line += f"  {e['detail']}"
        tr.write_line(line)
