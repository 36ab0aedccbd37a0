import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sparsegp import SparsityKernelSpec  # noqa: E402


def random_spec(rng, dim=2, n_sums=2, n_bumps=2, r_range=(0.1, 0.5), base_radius=None):
    """Random valid kernel spec with bumps centred inside the unit box."""
    return SparsityKernelSpec(
        amplitude=rng.uniform(0.2, 2.0, (n_sums, n_bumps)),
        shape=rng.uniform(0.2, 3.0, (n_sums, n_bumps)),
        radius=rng.uniform(*r_range, (n_sums, n_bumps)),
        centers=rng.uniform(0.0, 1.0, (n_sums, n_bumps, dim)),
        base_radius=rng.uniform(0.2, 0.8) if base_radius is None else base_radius,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n, density=0.03, extra=(1.0, 3.0), log_extra=False):
    """Sparse symmetric strictly diagonally dominant matrix as a dense array.

    ``extra`` is the margin added on top of the absolute row sum; with
    ``log_extra`` it is drawn log-uniformly, which spreads the diagonal.
    """
    mask = rng.random((n, n)) < density
    B = np.where(mask, rng.uniform(-1, 1, (n, n)), 0.0)
    B = np.triu(B, 1)
    B = B + B.T
    lo, hi = extra
    margin = np.exp(rng.uniform(np.log(lo), np.log(hi), n)) if log_extra else rng.uniform(lo, hi, n)
    return B + np.diag(np.abs(B).sum(axis=1) + margin)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
