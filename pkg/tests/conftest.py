import pytest

from privbc.ingest import parse_document
from privbc.refmodel import make_document
from privbc import synth

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = marker.args
    _ACCEPTANCE[number] = ("PASS" if report.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        verdict, title = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{verdict}] criterion {number:2d}: {title}")


@pytest.fixture
def abc_docs():
    """The three-document toy corpus used across modules."""
    return [
        make_document("A", ["a", "b", "c"]),
        make_document("B", ["a", "b", "d"]),
        make_document("C", ["c", "d", "e"]),
    ]


@pytest.fixture(scope="session")
def desk_corpus():
    """1,000 documents, 10-50 refs, 20,000-key pool, 10 planted pairs."""
    sc = synth.generate(seed=7)
    docs = [parse_document(r) for r in sc.records]
    return docs, sc.planted


@pytest.fixture(scope="session")
def small_corpus():
    sc = synth.generate(n_docs=150, refs_min=5, refs_max=25, pool_size=2_000, n_planted=3, seed=11)
    return [parse_document(r) for r in sc.records]
