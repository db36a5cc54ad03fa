import sys
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lamlab import laminate, potential  # noqa: E402
from lamlab.potential import Hamiltonian, HamiltonianFamily  # noqa: E402


def ising():
    return potential.disagreement()


def ising_field(mu=Fraction(1, 10)):
    return Hamiltonian.combine([potential.disagreement(), potential.field([0, 1])], [1, mu])


def antiferro():
    return potential.agreement()


TEST_MODELS = {"ising": ising, "ising_field": ising_field, "antiferro": antiferro}


def ising_laminate(lam=1.5, l=2, beta=0.7, rbar=1.5):
    fam = HamiltonianFamily(potential.disagreement(), [], [])
    return laminate.build_laminated(fam, lam, l, rbar, beta)


@pytest.fixture
def ising_model():
    return ising_laminate()


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one pass/fail line for the terminal summary, then assert it."""
    def record(number, passed, detail):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        print(ACCEPTANCE_LINES[-1])
        assert passed, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
