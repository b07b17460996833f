import pytest

from voicearc.envelope import TimestampAuthority
from voicearc.harness import ManualClock, TrafficProfile, generate_call, record_call
from voicearc.pki import make_test_pki


@pytest.fixture(scope="session")
def pki():
    return make_test_pki(0)


@pytest.fixture(scope="session")
def other_pki():
    return make_test_pki("other", name="elsewhere")


def record(pki, profile=TrafficProfile(duration_s=4.0), seed=0, **kw):
    clock = ManualClock()
    tsa = TimestampAuthority(pki.tsa, clock)
    call = generate_call(profile, seed, clock.now)
    return record_call(call, pki.recorder, tsa, clock, seed=seed, **kw)


@pytest.fixture(scope="session")
def clean_call(pki):
    """A 4 s two-way call: Initial, 8 voice intervals, Final."""
    return record(pki)


# --- acceptance summary ---------------------------------------------------------

_criteria: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n = marker.args[0]
    title = (item.function.__doc__ or item.name).strip().splitlines()[0]
    detail = "; ".join(str(v) for k, v in rep.user_properties if k == "detail")
    _criteria[n] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, title, detail = _criteria[n]
        line = f"criterion {n:>2}: {status}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
