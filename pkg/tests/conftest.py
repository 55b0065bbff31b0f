import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bbrates.geometry import linear_lattice
from bbrates.golden_rule import PhysicalConstants
from bbrates.pauli import parse_hamiltonian_text, spectrum_from_terms

HEISENBERG_3 = """
# open 3-site Heisenberg chain
1 X1 X2
1 Y1 Y2
1 Z1 Z2
1 X2 X3
1 Y2 Y3
1 Z2 Z3
"""

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def unit():
    return PhysicalConstants.dimensionless()


@pytest.fixture
def heisenberg3():
    return spectrum_from_terms(parse_hamiltonian_text(HEISENBERG_3), 3)


@pytest.fixture
def chain_geometry():
    # nearest-neighbour phases between 1 and 3: neither limit applies
    return linear_lattice(3, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class Criterion:
    def __init__(self, label: str):
        self.label = label
        self.details: list[str] = []

    def note(self, text: str):
        self.details.append(text)


@pytest.fixture
def criterion():
    """Records one pass/fail line per acceptance criterion for the terminal summary."""

    @contextmanager
    def run(label: str):
        c = Criterion(label)
        t0 = time.perf_counter()
        ok = False
        try:
            yield c
            ok = True
        finally:
            c.note(f"{time.perf_counter() - t0:.2f}s")
            _ACCEPTANCE.append((label, ok, "; ".join(c.details)))

    return run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, details in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  [{details}]")
