"""Symmetric linear algebra, seeded randomness, and spectrum utilities.

Everything downstream (Krylov exponentials, spectrahedron projections, the
online game, the SDP solver) builds on the types and samplers defined here.
Dense work is delegated to LAPACK through numpy; only the operator-form
plumbing and the samplers are hand-rolled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Largest dimension for which dense eigendecompositions are allowed.
DENSE_LIMIT = 2048


class LinalgError(Exception):
    """Base class for numerical failures raised by this package."""


class ConvergenceError(LinalgError):
    """An iterative or direct solver failed to converge."""


def sym_array(a, atol_scale=1e-8):
    """Coerce ``a`` to an exactly symmetric float ndarray.

    Accepts a :class:`SymmetricMatrix` or any square array-like whose
    asymmetry is below ``atol_scale`` relative to its magnitude.  The result
    satisfies ``out[i, j] == out[j, i]`` bitwise.
    """
    if isinstance(a, SymmetricMatrix):
        return a.mat
    arr = np.array(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    scale = 1.0 + np.abs(arr).max() if arr.size else 1.0
    if np.abs(arr - arr.T).max() > atol_scale * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (arr + arr.T)


class SymmetricMatrix:
    """Dense symmetric n-by-n matrix; storage is exactly symmetric.

    Construction averages the input with its transpose, so
    ``entries[i][j] == entries[j][i]`` holds bitwise.  Inputs whose asymmetry
    exceeds roundoff scale are rejected.
    """

    __slots__ = ("mat",)

    def __init__(self, entries):
        self.mat = sym_array(entries)
        if self.n < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def n(self):
        return self.mat.shape[0]

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros((n, n)))

    @classmethod
    def diagonal(cls, diag):
        return cls(np.diag(np.asarray(diag, dtype=float)))

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.mat.astype(dtype)
        return self.mat

    def __repr__(self):
        return f"SymmetricMatrix(n={self.n})"


class SparseSymOperator:
    """Symmetric linear operator exposed only through matrix-vector products.

    ``matvec_count`` tallies every application.  Derived operators made via
    :meth:`scaled` and :meth:`shifted` delegate to the parent's ``matvec``,
    so cost accounting accrues to the base operator as well.
    """

    def __init__(self, n, apply_fn, nnz_hint=None):
        if n < 1:
            raise ValueError("dimension must be >= 1")
        self.n = int(n)
        self._apply = apply_fn
        self.nnz_hint = int(nnz_hint) if nnz_hint is not None else self.n * self.n
        self.matvec_count = 0

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got shape {v.shape}")
        self.matvec_count += 1
        return self._apply(v)

    @classmethod
    def from_dense(cls, a):
        arr = sym_array(a)
        return cls(arr.shape[0], lambda v: arr @ v, nnz_hint=np.count_nonzero(arr))

    @classmethod
    def from_sparse(cls, m):
        import scipy.sparse as sp

        csr = sp.csr_matrix(m, dtype=float)
        if csr.shape[0] != csr.shape[1]:
            raise ValueError("operator matrix must be square")
        csr = 0.5 * (csr + csr.T)
        return cls(csr.shape[0], lambda v: csr @ v, nnz_hint=csr.nnz)

    @classmethod
    def from_matrices(cls, mats, weights=None):
        """Lazy weighted sum of symmetric matrices or operators."""
        mats = list(mats)
        if not mats:
            raise ValueError("need at least one matrix")
        terms = []
        nnz = 0
        n = None
        for m in mats:
            if isinstance(m, SparseSymOperator):
                terms.append(m.matvec)
                nnz += m.nnz_hint
                dim = m.n
            else:
                arr = sym_array(m)
                terms.append(lambda v, a=arr: a @ v)
                nnz += np.count_nonzero(arr)
                dim = arr.shape[0]
            if n is None:
                n = dim
            elif n != dim:
                raise ValueError("dimension mismatch in operator sum")
        w = np.ones(len(terms)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(terms),):
            raise ValueError("one weight per matrix required")

        def apply_sum(v):
            out = np.zeros_like(v)
            for wi, term in zip(w, terms):
                if wi != 0.0:
                    out += wi * term(v)
            return out

        return cls(n, apply_sum, nnz_hint=nnz)

    def scaled(self, c):
        """Operator computing ``c * (self v)``; applications also count on self."""
        return SparseSymOperator(self.n, lambda v: c * self.matvec(v), nnz_hint=self.nnz_hint)

    def shifted(self, c):
        """Operator computing ``self v + c v``; applications also count on self."""
        return SparseSymOperator(
            self.n, lambda v: self.matvec(v) + c * v, nnz_hint=self.nnz_hint + self.n
        )

    def negated(self):
        return self.scaled(-1.0)


def as_operator(a):
    """Coerce dense/sparse symmetric input to a :class:`SparseSymOperator`."""
    if isinstance(a, SparseSymOperator):
        return a
    if isinstance(a, SymmetricMatrix) or isinstance(a, np.ndarray):
        return SparseSymOperator.from_dense(a)
    import scipy.sparse as sp

    if sp.issparse(a):
        return SparseSymOperator.from_sparse(a)
    return SparseSymOperator.from_dense(np.asarray(a, dtype=float))


def symmetry_defect(op, rng, probes=8):
    """Largest normalized asymmetry ``|a'(Op b) - b'(Op a)|`` over random probes.

    The defect is normalized by ``|a| |b| |Op|``, with the operator norm
    estimated from the probe images, so a well-formed operator scores at
    roundoff level (<= 1e-8 is the library-wide contract).
    """
    worst = 0.0
    op_scale = 0.0
    for _ in range(probes):
        a = rng.standard_normal(op.n)
        b = rng.standard_normal(op.n)
        opa = op.matvec(a)
        opb = op.matvec(b)
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        op_scale = max(op_scale, np.linalg.norm(opa) / na, np.linalg.norm(opb) / nb)
        defect = abs(a @ opb - b @ opa)
        worst = max(worst, defect / (na * nb))
    return worst / max(op_scale, 1e-300)


@dataclass
class EigenDecomposition:
    """Eigenvalues (descending) and orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def dense_eigh(a, dense_limit=DENSE_LIMIT):
    """Full symmetric eigendecomposition with eigenvalues sorted descending.

    Raises :class:`ConvergenceError` naming the matrix size if the LAPACK
    driver fails, and ``ValueError`` above the dense size limit.
    """
    arr = sym_array(a)
    n = arr.shape[0]
    if n > dense_limit:
        raise ValueError(f"dense eigendecomposition refused for n={n} > limit {dense_limit}")
    try:
        lam, q = np.linalg.eigh(arr)
    except np.linalg.LinAlgError as err:
        raise ConvergenceError(f"eigendecomposition failed for n={n}: {err}") from err
    return EigenDecomposition(lam[::-1].copy(), q[:, ::-1].copy())


class SeededRng:
    """Deterministic random stream: counter-based generator, spawnable substreams.

    Identical seed plus identical call sequence reproduces the output stream
    bitwise.  :meth:`spawn` derives independent child streams for parallel
    seed sweeps.
    """

    def __init__(self, seed, _sequence=None):
        self.seed = int(seed)
        self._sequence = (
            np.random.SeedSequence(self.seed) if _sequence is None else _sequence
        )
        self.gen = np.random.Generator(np.random.Philox(self._sequence))

    def standard_normal(self, size=None):
        return self.gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def spawn(self, n):
        return [SeededRng(self.seed, _sequence=s) for s in self._sequence.spawn(n)]

    def __repr__(self):
        return f"SeededRng(seed={self.seed})"


def sample_unit_sphere(n, rng, size=None):
    """Uniform draw(s) from the unit sphere in R^n.

    Realized by normalizing i.i.d. standard Gaussian vectors, which has the
    same distribution.  With ``size=None`` returns one vector; otherwise an
    array of shape ``(size, n)`` with unit rows.  All-zero Gaussian draws
    (probability zero) are redrawn internally.
    """
    if n < 1:
        raise ValueError("dimension must be >= 1")
    if size is None:
        g = rng.standard_normal(n)
        nrm = np.linalg.norm(g)
        while nrm == 0.0:
            g = rng.standard_normal(n)
            nrm = np.linalg.norm(g)
        return g / nrm
    g = rng.standard_normal((size, n))
    nrm = np.linalg.norm(g, axis=1)
    while np.any(nrm == 0.0):
        bad = nrm == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), n))
        nrm = np.linalg.norm(g, axis=1)
    return g / nrm[:, None]


def sample_dirichlet_half(n, rng, size=None):
    """Dirichlet(1/2, ..., 1/2) draw(s): squared coordinates of a sphere draw."""
    if n < 2:
        raise ValueError("dimension must be >= 2")
    u = sample_unit_sphere(n, rng, size=size)
    return u * u


@dataclass
class SpectrumBounds:
    """Extremal eigenvalue estimates of an operator, with convergence status."""

    lam_min: float
    lam_max: float
    converged: bool
    iterations: int
    tol: float


def op_norm_bounds(a, tol, rng=None, max_k=None):
    """Estimate the extreme eigenvalues of a symmetric operator.

    Runs Krylov tridiagonalization from a random start, doubling the subspace
    dimension until the extremal Ritz values stabilize within ``tol`` relative
    accuracy (or the subspace exhausts the full dimension, which is exact).
    Returns best estimates with ``converged=False`` if the ``max_k`` cap is
    reached first.
    """
    from .lanczos import lanczos_decompose, ritz_values

    if not 0.0 < tol < 1.0:
        raise ValueError("tol must lie in (0, 1)")
    op = as_operator(a)
    if rng is None:
        rng = SeededRng(0x5EED_0B0B)
    cap = op.n if max_k is None else min(max_k, op.n)
    k = min(cap, max(8, 2 * int(np.ceil(np.log(max(op.n, 2))))))
    b = sample_unit_sphere(op.n, rng)
    prev = None
    iterations = 0
    converged = False
    est = (0.0, 0.0)
    while True:
        dec = lanczos_decompose(op, b, k, reorthogonalize=True)
        iterations += dec.iterations
        theta = ritz_values(dec)
        est = (float(theta.min()), float(theta.max()))
        if dec.terminated_early or dec.iterations >= op.n:
            converged = True  # Krylov space exhausted: extremes exact for this start
            break
        if prev is not None:
            stable = all(
                abs(e - p) <= 0.5 * tol * max(1.0, abs(e)) for e, p in zip(est, prev)
            )
            if stable:
                converged = True
                break
        if k >= cap:
            break
        prev = est
        k = min(2 * k, cap)
    return SpectrumBounds(est[0], est[1], converged, iterations, tol)
