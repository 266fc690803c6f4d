import numpy as np
import pytest
from scipy.stats import unitary_group

from pawlab.hilbert import Operator


def random_hermitian(rng, n, scale=1.0):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return Operator(scale * (A + A.conj().T) / 2)


def random_density(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = A @ A.conj().T
    return Operator(rho / np.trace(rho).real)


def random_unit(rng, n):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def lattice_hamiltonian(rng, labels, T):
    """Random-basis Hamiltonian whose energies sit on the lattice 2 pi r / T."""
    n = len(labels)
    V = unitary_group.rvs(n, random_state=rng) if n > 1 else np.eye(1)
    E = np.asarray(labels, dtype=float) * 2 * np.pi / T
    return Operator((V * E) @ V.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting -------------------------------------------------------

_ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    label = getattr(item.function, "acceptance_label", None)
    if label is None or report.when != "call":
        return
    if hasattr(report, "wasxfail"):
        status = "FAIL (expected, see decisions ledger)"
    else:
        status = "PASS" if report.passed else "FAIL"
    detail = item.user_properties and dict(item.user_properties).get("detail", "")
    _ACCEPTANCE_LINES[item.nodeid] = f"{label}: {status}" + (f"  [{detail}]" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES.values(), key=lambda s: (int(s.split()[1].rstrip(":").rstrip("abc")), s)):
        terminalreporter.write_line(line)
