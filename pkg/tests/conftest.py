import numpy as np
import pytest

from mtload import _backend


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=_backend.available())
def kernels(request, monkeypatch):
    """Run a test once per available kernel backend."""
    rls, fuse = _backend.kernels(request.param)
    monkeypatch.setattr(_backend, "rls_update", rls)
    monkeypatch.setattr(_backend, "fuse_step", fuse)
    return request.param


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""
    def record(criterion, ok, detail):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"[{status}] {criterion}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
