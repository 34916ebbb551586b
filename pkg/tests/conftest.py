import numpy as np
import pytest

import qcheat  # noqa: F401  (enables float64 in jax)
from qcheat.models import QhTorus, Sphere7


@pytest.fixture(scope="session")
def torus():
    return QhTorus()


@pytest.fixture(scope="session")
def sphere():
    return Sphere7()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def torus_points(rng, count):
    return rng.uniform(0.0, 1.0, size=(count, 7))


def symbolic_qh_frame():
    """Chart symbols and the seven frame vector fields of the Heisenberg model in sympy."""
    import sympy as sp

    from qcheat.models import SIGMA

    x = sp.symbols("x1:5")
    w = sp.symbols("w1:4")
    q = sp.Quaternion(*x)
    rows = []
    for a in range(4):
        e = [0] * 4
        e[a] = 1
        im = q.conjugate() * sp.Quaternion(*e)
        sig = int(SIGMA[a])
        rows.append([sig * (b == a) for b in range(4)] + [sig * 2 * c for c in (im.b, im.c, im.d)])
    for s in range(3):
        rows.append([0] * 4 + [2 * (t == s) for t in range(3)])
    return list(x) + list(w), rows


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
