import numpy as np
import pytest
import scipy.sparse as sp

from decoupling.blockalg import BlockOperator, BlockVector, Metric
from decoupling.fem import assemble_problem, triangulate_unit_square


def random_spd_system(seed, sizes=(3, 4, 2), identity_metric=False, shift=0.1):
    """Dense SPD block operator, SPD block-diagonal metric and a start vector."""
    rng = np.random.default_rng(seed)
    n = sum(sizes)
    G = rng.standard_normal((n, n))
    A = G @ G.T / n + shift * np.eye(n)
    offs = np.concatenate(([0], np.cumsum(sizes)))
    blocks = {(a, b): sp.csr_matrix(A[offs[a]:offs[a + 1], offs[b]:offs[b + 1]])
              for a in range(len(sizes)) for b in range(len(sizes))}
    K = BlockOperator(sizes, blocks, symmetric=True)
    if identity_metric:
        metric = Metric.identity(sizes)
    else:
        mats = []
        for s in sizes:
            H = rng.standard_normal((s, s))
            mats.append(sp.csr_matrix(H @ H.T / s + np.eye(s)))
        metric = Metric(mats)
    y0 = BlockVector.from_flat(rng.standard_normal(n), sizes)
    return K, metric, y0


def dense_metric(metric):
    return metric.to_sparse().toarray()


@pytest.fixture(scope="session")
def cross8():
    return assemble_problem(triangulate_unit_square(8))


@pytest.fixture(scope="session")
def cross16():
    return assemble_problem(triangulate_unit_square(16))


@pytest.fixture(scope="session")
def cross4():
    return assemble_problem(triangulate_unit_square(4))


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the terminal summary, then assert."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def report(label, ok, detail):
        line = f"{label}: {'PASS' if ok else 'FAIL'} ({detail})"
        lines.append(line)
        print(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
