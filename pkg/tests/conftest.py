import numpy as np
import pytest

from koopnnm.koopman import compute_identity_modes
from koopnnm.models import TwoDofParams, build_2dof_cubic
from koopnnm.polyfield import jacobian_at_origin
from koopnnm.spectral import decompose


def field_terms(field):
    return [(l, tuple(t.index), t.coefficient) for l, t in field.terms()]


@pytest.fixture(scope="session")
def two_dof():
    """k_b -> (field, decomposition, order-50 in-phase table)."""
    cache = {}

    def get(k_b, order=50, pair=(0, 1)):
        key = (k_b, order, pair)
        if key not in cache:
            field = build_2dof_cubic(TwoDofParams(k_b=k_b))
            dec = decompose(jacobian_at_origin(field))
            cache[key] = (field, dec, compute_identity_modes(field, dec, pair, order))
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def random_stable_matrix(rng, n_pairs=2):
    """Real block matrix with complex pairs, conjugated by a random basis."""
    blocks = []
    for _ in range(n_pairs):
        s, w = rng.uniform(0.05, 1.0), rng.uniform(0.5, 4.0)
        blocks.append(np.array([[-s, w], [-w, -s]]))
    D = np.zeros((2 * n_pairs, 2 * n_pairs))
    for i, B in enumerate(blocks):
        D[2 * i:2 * i + 2, 2 * i:2 * i + 2] = B
    Q = rng.normal(size=D.shape) + 2 * np.eye(len(D))
    return Q @ D @ np.linalg.inv(Q)


ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Collects one verdict line per acceptance criterion."""

    def put(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return put


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
