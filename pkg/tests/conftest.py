import numpy as np
import pytest
from hypothesis import settings

from semistab.core import SequenceState, SpectralField

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

# default comparison tolerances
ABS = 1e-10
REL = 1e-8


def brute_force_product(a: SpectralField, b: SpectralField) -> np.ndarray:
    """Coefficients of a*b for |n| <= N by direct double sum over modes."""
    N = a.n_modes
    out = np.zeros(N + 1, dtype=complex)
    for n in range(N + 1):
        for k in range(-N, N + 1):
            m = n - k
            if -N <= m <= N:
                out[n] += a.coefficient(k) * b.coefficient(m)
    return out


def random_field(rng, n_modes, decay=1.0, mean=None):
    c = (rng.standard_normal(n_modes + 1) + 1j * rng.standard_normal(n_modes + 1))
    c /= np.arange(1, n_modes + 2) ** decay
    c[0] = rng.standard_normal() if mean is None else mean
    return SpectralField(c)


def random_sequence(rng, size=20, max_index=50):
    idx = rng.choice(np.arange(1, max_index + 1), size=size, replace=False)
    return SequenceState.from_arrays(idx, rng.standard_normal(size))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_acceptance_lines = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    if "acceptance" not in report.keywords:
        return
    doc = dict(report.user_properties).get("criterion", report.nodeid)
    status = "PASS" if report.passed else "FAIL"
    _acceptance_lines.append(f"[{status}] {doc} ({report.duration:.2f}s)")


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
