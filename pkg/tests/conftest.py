import numpy as np
import pytest


def rand_herm(rng, dim, scale=1.0):
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * (m + m.conj().T) / 2


def rand_ket(rng, dim):
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def expm_taylor(m, terms=60, squarings=8):
    """Scaling-and-squaring Taylor exponential, independent of scipy/eigh."""
    a = m / 2.0 ** squarings
    out = np.eye(m.shape[0], dtype=complex)
    term = np.eye(m.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


SQ = 1 / np.sqrt(2)
PLUS = np.array([SQ, SQ], dtype=complex)
ANOMALOUS_POST = np.array([np.cos(np.pi / 8), -np.sin(np.pi / 8)], dtype=complex)
MINUS_I = np.array([SQ, -1j * SQ], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
