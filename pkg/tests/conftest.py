from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from ternfuse import native

# numba compiles on first call, so the first example of a property can be slow
settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

BACKENDS = ["portable"] + (["native"] if native.available() else [])

_criteria: dict[tuple, list] = {}


@pytest.fixture(scope="session", params=BACKENDS)
def backend(request):
    return request.param


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    key = tuple(mark.args)
    if rep.when == "setup" and rep.skipped:
        status = "SKIP"
    elif rep.when == "call":
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    elif rep.failed:
        status = "FAIL"
    else:
        return
    detail = ""
    if rep.skipped and isinstance(rep.longrepr, tuple):
        detail = rep.longrepr[2]
    else:
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _criteria.setdefault(key, []).append((item.name, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: (int(str(k[0]).rstrip("ab")), str(k[0]))):
        for name, status, detail in _criteria[key]:
            number, title = key
            line = f"criterion {number:<3} {status:<4}  {title}"
            if detail:
                line += f"  [{detail}]"
            tr.write_line(line)
