import numpy as np
import pytest
from hypothesis import settings

from ngram_bdp.counts import CountsDatabase, Vocabulary
from ngram_bdp.transforms import decay_weights, log_normalize

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def make_vocab(size, n=1):
    return Vocabulary([f"w{i}" if n == 1 else " ".join([f"w{i}"] * n)
                       for i in range(size)], n)


def make_db(rows, user_ids=None):
    rows = np.asarray(rows, dtype=np.int64)
    return CountsDatabase.from_dense(make_vocab(rows.shape[1]), rows, user_ids)


def f_mean(c, N, S, C):
    """Weighted centred log counts, recomputed from scratch."""
    return decay_weights(N, S, C) * log_normalize(c)


def naive_sensitivity(db, S, C):
    dense = db.matrix.toarray()
    c = dense.sum(axis=0)
    N = (dense > 0).sum(axis=0)
    base = f_mean(c, N, S, C)
    best = 0.0
    for row in dense:
        other = f_mean(c - row, N - (row > 0), S, C)
        best = max(best, float(np.linalg.norm(base - other)))
    return best


def random_instance(rng, max_users=50, max_vocab=20, max_count=5):
    U = int(rng.integers(1, max_users + 1))
    V = int(rng.integers(2, max_vocab + 1))
    dense = rng.integers(0, max_count + 1, size=(U, V))
    dense *= rng.random((U, V)) < 0.5
    S = float(10 ** rng.uniform(-2, 2))
    C = int(rng.integers(1, 6))
    return make_db(dense).limited(C=C), S, C


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary -----------------------------------------------------------------

ACCEPTANCE_LINES = {}


def record_criterion(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
