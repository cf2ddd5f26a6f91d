import numpy as np
import pytest

from skewpsk.constellation import make_skewed_mpsk


def grid(n: int = 4096) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


def brute_force_circular_convolution(p: np.ndarray, sigma: float, wraps: int = 6) -> np.ndarray:
    """Direct O(N^2) circular convolution of a grid density with a wrapped
    Gaussian evaluated straight from its definition."""
    n = p.size
    th = grid(n)
    step = 2 * np.pi / n
    out = np.empty(n)
    ls = np.arange(-wraps, wraps + 1)
    for start in range(0, n, 256):
        rows = th[start:start + 256]
        diff = rows[:, None] - th[None, :]
        kern = np.zeros_like(diff)
        for l in ls:
            kern += np.exp(-0.5 * ((diff - 2 * np.pi * l) / sigma) ** 2)
        kern /= np.sqrt(2 * np.pi) * sigma
        out[start:start + 256] = kern @ p * step
    return out


@pytest.fixture
def sqpsk():
    return make_skewed_mpsk(4, 0.7)


@pytest.fixture
def qpsk():
    return make_skewed_mpsk(4, 0.0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
