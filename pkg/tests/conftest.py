from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from pcsvd import PuiseuxMatrix, load_matrix

DATA = Path(__file__).parent / "data"

settings.register_profile("pcsvd", max_examples=40, deadline=None)
settings.load_profile("pcsvd")


def data_path(name):
    return DATA / name


def load(name) -> PuiseuxMatrix:
    return load_matrix(DATA / name)


def paired_sigmas(omega):
    """Closed-form analytic singular values of the 4x4 orbit example."""
    omega = np.asarray(omega)
    return np.stack(
        [
            4 * np.cos(omega / 4),
            4 * np.sin(omega / 4),
            4 + 4 * np.cos(omega / 2),
            4 - 4 * np.cos(omega / 2),
        ]
    )


def signed_pair_factors(omega):
    """Closed-form U, V and sigma for the 2x3 signed-multiplexed example."""
    w = np.asarray(omega)[:, None, None]
    a, b = np.exp(-2j * w), np.exp(1j * w / 2)
    U = -0.5 * np.block([[1j * (a + b), 1j * (a - b)], [a - b, a + b]])
    q, t = np.exp(-1j * w / 4), np.exp(-3j * w / 4)
    s2 = np.sqrt(2)
    zero = np.zeros_like(q)
    V = 0.5 * np.block(
        [
            [s2 * q, -s2 * 1j * q, zero],
            [t, 1j * t, zero + s2],
            [t, 1j * t, zero - s2],
        ]
    )
    sig = np.stack([2 * np.cos(np.asarray(omega) / 4), -2 * np.sin(np.asarray(omega) / 4)])
    return U, sig, V


def direct_eval(A: PuiseuxMatrix, omega):
    """Term-by-term evaluation written independently of the library evaluators."""
    omega = np.atleast_1d(omega)
    out = np.zeros((omega.size, A.rows, A.cols), complex)
    for n, c in A.terms.items():
        for m, w in enumerate(omega):
            out[m] += c * np.exp(1j * w * n / A.index_L)
    return out


def random_matrix(rng, rows, cols, lo=-3, hi=3, L=1):
    terms = {
        n: (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / 4
        for n in range(lo, hi + 1)
    }
    return PuiseuxMatrix.from_terms(terms, L, (rows, cols))


@pytest.fixture
def paired4x4():
    return load("paired4x4.json")


@pytest.fixture
def signed2x3():
    return load("signed2x3.json")


@pytest.fixture
def one_plus_z():
    return load("one_plus_z.json")


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = []


def record_acceptance(number, title, ok, detail):
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
