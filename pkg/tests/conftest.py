"""Shared fixtures and independent oracles for the test suite.

Oracles deliberately go through numpy/scipy directly (not through the
package's own wrappers) so that each check pits two independent routes
against each other.
"""

import numpy as np
import pytest

from mmwsketch import SeededRng


def expm_dense(a):
    """Dense matrix exponential through the eigendecomposition."""
    w, v = np.linalg.eigh(np.asarray(a, dtype=float))
    return (v * np.exp(w)) @ v.T


def trace_norm(m):
    """Schatten-1 norm from dense eigenvalues."""
    return float(np.abs(np.linalg.eigvalsh(m)).sum())


def random_symmetric(rng, n, op_norm=None):
    a = rng.standard_normal((n, n))
    a = 0.5 * (a + a.T)
    if op_norm is not None:
        lam = np.linalg.eigvalsh(a)
        a *= op_norm / max(abs(lam[0]), abs(lam[-1]))
    return a


def haar_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


@pytest.fixture
def rng():
    return SeededRng(20260809)
