import numpy as np
import pytest


def random_block(rng, d1, d0, scale=1.0):
    return scale * (rng.normal(size=(d1, d0)) + 1j * rng.normal(size=(d1, d0)))


def random_unitary(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def gapped_block(rng, n, below, above, n_below):
    """``n x n`` block whose squared singular values split into ``below`` / ``above`` ranges."""
    s2 = np.concatenate([rng.uniform(*below, size=n_below), rng.uniform(*above, size=n - n_below)])
    return random_unitary(rng, n) @ np.diag(np.sqrt(s2)) @ random_unitary(rng, n).conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
