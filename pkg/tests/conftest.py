import numpy as np
import pytest

from modent.model import SystemParams

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, ok, detail in sorted(ACCEPTANCE, key=lambda r: _order(r[0])):
        terminalreporter.write_line(f"{cid:<4} {'PASS' if ok else 'FAIL'}  {detail}")


def _order(cid):
    num = "".join(ch for ch in cid if ch.isdigit())
    return (int(num or 0), cid)


@pytest.fixture
def criterion():
    """Record a criterion outcome, then assert it."""

    def check(cid, ok, detail):
        ok = bool(ok)
        ACCEPTANCE.append((cid, ok, detail))
        print(f"{cid} {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {cid}: {detail}"

    return check


@pytest.fixture(scope="session")
def ref_params():
    """Reference set used for the (g1, Omega) map."""
    return SystemParams(g0=0.2, gamma_ba=0.05, gamma_th=0.0025, eta=0.5, q=0.1, phi=np.pi)


@pytest.fixture(scope="session")
def working_point(ref_params):
    return ref_params.replace(g1=0.17, omega_mod=2.7)
