import numpy as np
import pytest

from matcomp import LowRankFactors, SparseObserved
from matcomp.grassmann import GrassmannPair


def random_sparse(rng, m, n, nnz):
    lin = rng.choice(m * n, size=nnz, replace=False)
    rows, cols = np.divmod(lin, n)
    return SparseObserved(m, n, rows, cols, rng.standard_normal(nnz))


def random_frame(rng, n, r):
    q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return q * np.sqrt(n)


def random_orthogonal(rng, r):
    q, rr = np.linalg.qr(rng.standard_normal((r, r)))
    return q * np.sign(np.diag(rr))


def random_pair(rng, m, n, r):
    return GrassmannPair(random_frame(rng, m, r), random_frame(rng, n, r))


def factors_of(rng, m, n, r, sigma=None):
    sigma = np.sort(rng.uniform(0.5, 2.0, r))[::-1] if sigma is None else np.asarray(sigma)
    return LowRankFactors(random_frame(rng, m, r), sigma, random_frame(rng, n, r))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(criterion, passed, detail, seconds):
    """Record one acceptance verdict; printed again in the terminal summary."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail} [{seconds:.1f} s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
