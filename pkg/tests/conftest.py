import os

import pytest

from demoforge.codec import write_demo
from demoforge.corpus import synthetic_documents
from demoforge.matchgen import GenConfig, generate_match
from demoforge.parser import parse_demo
from demoforge.winprob.features import build_dataset

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")
_ACCEPTANCE = pytest.StashKey[dict]()


class AcceptanceRecorder:
    """Collects one verdict per acceptance criterion for the terminal summary."""

    def __init__(self, results: dict):
        self.results = results

    def __call__(self, number: int, title: str):
        return _Verdict(self.results, number, title)


class _Verdict:
    def __init__(self, results, number, title):
        self.results, self.number, self.title = results, number, title
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = exc_type is None
        if not ok and not self.detail:
            self.detail = f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        self.results[self.number] = (ok, self.title, self.detail)
        return False


@pytest.fixture
def acceptance(request):
    return AcceptanceRecorder(request.config.stash.setdefault(_ACCEPTANCE, {}))


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, title, detail = results[number]
        terminalreporter.write_line(f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})")


@pytest.fixture(scope="session")
def small_match():
    """(header, events, truth, demo bytes, parsed document) for a 6-round generator match."""
    header, events, truth = generate_match(GenConfig(seed=11, rounds=6))
    data = write_demo(header, events)
    return header, events, truth, data, parse_demo(data)


@pytest.fixture(scope="session")
def small_doc(small_match):
    return small_match[4]


@pytest.fixture(scope="session")
def benchmark_splits():
    """Train/val/test samples from a 5000-round generator corpus (about three minutes to build)."""
    return build_dataset(synthetic_documents(5000, seed=7), seed=7)


def golden(name: str, text: str) -> str:
    """Return the recorded golden text; set DEMOFORGE_RECORD_GOLDEN=1 to (re)record it."""
    path = os.path.join(GOLDEN_DIR, name)
    if os.environ.get("DEMOFORGE_RECORD_GOLDEN") == "1":
        os.makedirs(GOLDEN_DIR, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    with open(path, encoding="utf-8", newline="") as fh:
        return fh.read()
