import numpy as np
import pytest

from geokernel import _backend


@pytest.fixture(params=sorted(_backend.backends()))
def core(request, monkeypatch):
    """Run the test once per available numerical core."""
    mod = _backend.backends()[request.param]
    monkeypatch.setattr(_backend, "core", mod)
    return mod


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """record(n, ok, detail): one PASS/FAIL line per acceptance criterion."""
    def record(n, ok, detail=""):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[n] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
