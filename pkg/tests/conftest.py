import math

import numpy as np
import pytest

from niplab import GeneratorFunction, TimeGrid

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def expm_series(a, terms: int = 40) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a truncated Taylor series.

    Kept independent of the library so propagators can be checked against it.
    """
    a = np.asarray(a, dtype=complex)
    norm = np.linalg.norm(a, 1)
    s = max(0, math.ceil(math.log2(norm))) + 1 if norm > 0 else 0
    b = a / 2**s
    result = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ b / k
        result = result + term
    for _ in range(s):
        result = result @ result
    return result


def toy_gain(t):
    return 0.3 + 0.2 * np.sin(t)


def toy_g(t):
    g = toy_gain(t)
    return np.array([[1j * g, 1.0], [1.0, -1j * g]])


@pytest.fixture
def toy_fn():
    """PT-symmetric 2x2 toy with driven gain/loss; spectrum stays real."""
    return GeneratorFunction(toy_g, 2, name="toy")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


def random_pd(rng, n, shift=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    m = a @ a.conj().T + shift * np.eye(n)
    return (m + m.conj().T) / 2


def grid(t_end, dt, stride=1, t_start=0.0):
    return TimeGrid(t_start, t_end, dt, stride)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
