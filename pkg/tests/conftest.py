import pytest
from hypothesis import settings

# fixed example sequence so every run of the suite checks the same cases
settings.register_profile("repro", derandomize=True, deadline=None, print_blob=True)
settings.load_profile("repro")

_verdicts: dict[int, tuple[str, bool]] = {}
_notes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.passed):
        return
    number, title = mark.args
    ok = _verdicts.get(number, (title, True))[1] and report.passed
    _verdicts[number] = (title, ok)
    notes = _notes.setdefault(number, [])
    notes += [v for k, v in item.user_properties if k == "note" and v not in notes]


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_verdicts):
        title, ok = _verdicts[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}")
        for note in _notes.get(number, []):
            terminalreporter.write_line(f"              {note}")
