"""Mirror projections onto the spectrahedron and simplex.

Implements the exact matrix-multiplicative-weights projection
``Y -> exp(Y)/tr exp(Y)``, its rank-1 randomized sketch
``Y, u -> v v' / (v'v)`` with ``v = exp(Y/2) u`` (exact via the eigenbasis,
or approximate via Krylov iterations), Monte-Carlo estimators for the
sphere-averaged projection and its potential, and the Bregman-divergence
estimator used by the curvature tests.  Every exponential is evaluated after
subtracting the top eigenvalue; all projections here are invariant to that
shift, so it is loss-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lanczos import expm_multiply
from .linalg import (
    DENSE_LIMIT,
    SparseSymOperator,
    dense_eigh,
    sample_unit_sphere,
    sym_array,
)

#: Default Monte-Carlo sample counts: heavy for oracle use, light for smoke tests.
MC_SAMPLES_ORACLE = 100_000
MC_SAMPLES_SMOKE = 1_000

_CHUNK = 20_000


def lse(v):
    """log-sum-exp with max-shift stability."""
    v = np.asarray(v, dtype=float)
    m = v.max()
    return float(m + np.log(np.exp(v - m).sum()))


def softmax_grad(c):
    """Gradient of log-sum-exp: the multiplicative-weights simplex projection."""
    c = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c)):
        raise ValueError("entries must be finite")
    return SimplexWeights(c)


class SimplexWeights:
    """Simplex vector stored in the log domain.

    Materialization is invariant to adding a constant to the log weights, so
    very negative accumulated costs cannot underflow the normalization.
    """

    __slots__ = ("log_weights",)

    def __init__(self, log_weights):
        self.log_weights = np.asarray(log_weights, dtype=float).copy()
        if self.log_weights.ndim != 1 or len(self.log_weights) < 1:
            raise ValueError("log weights must be a nonempty vector")

    @property
    def m(self):
        return len(self.log_weights)

    @property
    def weights(self):
        t = np.exp(self.log_weights - self.log_weights.max())
        return t / t.sum()

    def __len__(self):
        return self.m


class SpectrahedronAction:
    """A point of the spectrahedron: either a rank-1 unit factor or dense PSD.

    Rank-1 actions store the unit factor with canonical sign (first nonzero
    coordinate positive); all downstream quantities depend only on the outer
    product, so the sign convention is observable only through equality tests.
    """

    __slots__ = ("factor", "matrix")

    def __init__(self, factor=None, matrix=None):
        if (factor is None) == (matrix is None):
            raise ValueError("exactly one of factor/matrix must be given")
        self.factor = factor
        self.matrix = matrix

    @classmethod
    def rank1(cls, x):
        x = np.asarray(x, dtype=float).copy()
        nrm = np.linalg.norm(x)
        if not np.isfinite(nrm) or abs(nrm - 1.0) > 1e-9:
            raise ValueError("rank-1 factor must be a unit vector")
        x /= nrm
        nz = np.nonzero(x)[0]
        if len(nz) and x[nz[0]] < 0:
            x = -x
        return cls(factor=x)

    @classmethod
    def dense(cls, x):
        return cls(matrix=sym_array(x))

    @property
    def is_rank1(self):
        return self.factor is not None

    @property
    def n(self):
        return len(self.factor) if self.is_rank1 else self.matrix.shape[0]

    def densify(self):
        if self.is_rank1:
            return np.outer(self.factor, self.factor)
        return self.matrix

    def inner(self, g):
        """Frobenius inner product <g, X>."""
        g = np.asarray(g, dtype=float)
        if self.is_rank1:
            return float(self.factor @ (g @ self.factor))
        return float(np.vdot(g, self.matrix))

    def trace(self):
        if self.is_rank1:
            return float(self.factor @ self.factor)
        return float(np.trace(self.matrix))

    def validate(self, psd_tol=1e-9, trace_tol=1e-9):
        """Check the spectrahedron membership invariants; raises on violation."""
        if self.is_rank1:
            if abs(np.linalg.norm(self.factor) - 1.0) > 1e-12:
                raise ValueError("rank-1 factor is not unit norm")
            return
        lam = np.linalg.eigvalsh(self.matrix)
        if lam.min() < -psd_tol:
            raise ValueError(f"matrix has eigenvalue {lam.min():.3e} below -{psd_tol}")
        if abs(np.trace(self.matrix) - 1.0) > trace_tol:
            raise ValueError("matrix trace differs from 1")


@dataclass
class DualState:
    """Accumulated dual point of the online game: eta times the gain sum."""

    y: object  # ndarray or SparseSymOperator
    eta: float
    t: int

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")


@dataclass
class MatrixEstimate:
    """Monte-Carlo matrix mean with entrywise standard errors."""

    action: SpectrahedronAction
    stderr: np.ndarray
    samples: int


@dataclass
class ScalarEstimate:
    """Monte-Carlo scalar mean with its standard error."""

    value: float
    stderr: float
    samples: int


def mmw_projection(y, dense_limit=DENSE_LIMIT):
    """Exact multiplicative-weights projection ``exp(Y)/tr exp(Y)``."""
    dec = dense_eigh(y, dense_limit=dense_limit)
    lam = dec.eigenvalues
    e = np.exp(lam - lam[0])
    s = e / e.sum()
    x = (dec.eigenvectors * s) @ dec.eigenvectors.T
    return SpectrahedronAction.dense(x)


def rank1_projection(y, u, dense_limit=DENSE_LIMIT):
    """Exact rank-1 sketch ``v v'/(v'v)`` with ``v = exp(Y/2) u``.

    Reference implementation through the shifted eigenbasis; requires dense
    scale.  A vanishing ``v`` is impossible for symmetric Y (the exponential
    is nonsingular), so an underflow here signals a shifting bug and raises.
    """
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("u must be a unit vector")
    dec = dense_eigh(y, dense_limit=dense_limit)
    lam = dec.eigenvalues
    a = dec.eigenvectors.T @ u
    v = dec.eigenvectors @ (np.exp(0.5 * (lam - lam[0])) * a)
    nrm = np.linalg.norm(v)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise ArithmeticError("exp(Y/2) u underflowed after shifting")
    return SpectrahedronAction.rank1(v / nrm)


def rank1_projection_lanczos(y, u, k):
    """Approximate rank-1 sketch with a k-step Krylov exponential."""
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("u must be a unit vector")
    if not isinstance(y, SparseSymOperator):
        y = SparseSymOperator.from_dense(y)
    v = expm_multiply(y.scaled(0.5), u, k, normalized=True)
    nrm = np.linalg.norm(v)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise ArithmeticError("Krylov exponential returned a zero vector")
    return SpectrahedronAction.rank1(v / nrm)


def trace_norm_distance(x1, x2):
    """Schatten-1 distance between two spectrahedron actions.

    For a rank-1 pair the difference has eigenvalues plus/minus
    ``sqrt(1 - (x1'x2)^2)``, so the closed form ``2 sqrt(1 - (x1'x2)^2)`` is
    used; otherwise the dense eigenvalues of the difference are summed.
    """
    if x1.n != x2.n:
        raise ValueError("dimension mismatch")
    if x1.is_rank1 and x2.is_rank1:
        c = float(np.clip(x1.factor @ x2.factor, -1.0, 1.0))
        return 2.0 * np.sqrt(max(1.0 - c * c, 0.0))
    diff = x1.densify() - x2.densify()
    return float(np.abs(np.linalg.eigvalsh(diff)).sum())


def _accumulate_moments(batches):
    """Entrywise mean and standard error from a stream of sample batches."""
    total = 0
    s1 = None
    s2 = None
    for batch in batches:
        total += batch.shape[0]
        b1 = batch.sum(axis=0)
        b2 = (batch * batch).sum(axis=0)
        s1 = b1 if s1 is None else s1 + b1
        s2 = b2 if s2 is None else s2 + b2
    mean = s1 / total
    var = np.maximum(s2 - total * mean * mean, 0.0) / max(total - 1, 1)
    return mean, np.sqrt(var / total), total


def estimate_avg_projection_direct(y, samples, rng, dense_limit=DENSE_LIMIT):
    """Sphere-average of the rank-1 sketch: the empirical mean of ``P_u(Y)``.

    Draws i.i.d. uniform sphere vectors and averages the exact rank-1
    projections, which is unbiased for the averaged projection.  Returns the
    mean action together with entrywise standard errors.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    dec = dense_eigh(y, dense_limit=dense_limit)
    lam, q = dec.eigenvalues, dec.eigenvectors
    half = np.exp(0.5 * (lam - lam[0]))

    def batches():
        left = samples
        while left > 0:
            size = min(left, _CHUNK)
            u = sample_unit_sphere(len(lam), rng, size=size)
            w = u * half  # rows: exp((Y - lam_max I)/2) u in the eigenbasis
            s2 = (w * w).sum(axis=1)
            outer = np.einsum("si,sj->sij", w, w) / s2[:, None, None]
            yield np.einsum("ip,spq,jq->sij", q, outer, q, optimize=True)
            left -= size

    mean, stderr, total = _accumulate_moments(batches())
    mean = 0.5 * (mean + mean.T)
    return MatrixEstimate(SpectrahedronAction.dense(mean), stderr, total)


def estimate_avg_projection_dirichlet(y, samples, rng, dense_limit=DENSE_LIMIT):
    """Averaged projection via its eigenbasis characterization.

    In the eigenbasis of Y the averaged projection is diagonal with entries
    ``E_w grad-lse(lambda + log w)`` for Dirichlet(1/2,...,1/2) weights ``w``;
    this estimator averages those diagonals and rotates back.  Off-diagonal
    entries in the eigenbasis are exactly zero by construction, which makes
    it an independent cross-check of the direct sphere average.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    dec = dense_eigh(y, dense_limit=dense_limit)
    lam, q = dec.eigenvalues, dec.eigenvectors
    boost = np.exp(lam - lam[0])

    def batches():
        left = samples
        while left > 0:
            size = min(left, _CHUNK)
            u = sample_unit_sphere(len(lam), rng, size=size)
            t = (u * u) * boost  # w_i exp(lambda_i - lam_max): softmax numerators
            d = t / t.sum(axis=1)[:, None]
            yield np.einsum("ip,sp,jp->sij", q, d, q, optimize=True)
            left -= size

    mean, stderr, total = _accumulate_moments(batches())
    mean = 0.5 * (mean + mean.T)
    return MatrixEstimate(SpectrahedronAction.dense(mean), stderr, total)


def estimate_potential(y, samples, rng, dense_limit=DENSE_LIMIT):
    """Monte-Carlo estimate of the averaged potential ``E_u log(u' exp(Y) u)``.

    Each sample evaluates ``lse(lambda + log w)`` for a Dirichlet(1/2) draw
    ``w`` with max-shift stability.
    """
    if samples < 2:
        raise ValueError("need at least two samples for a standard error")
    dec = dense_eigh(y, dense_limit=dense_limit)
    lam = dec.eigenvalues
    boost = np.exp(lam - lam[0])
    vals = np.empty(samples)
    done = 0
    while done < samples:
        size = min(samples - done, _CHUNK)
        u = sample_unit_sphere(len(lam), rng, size=size)
        t = (u * u) * boost
        vals[done : done + size] = lam[0] + np.log(t.sum(axis=1))
        done += size
    return ScalarEstimate(
        float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples)), samples
    )


def estimate_bregman(y, yp, samples, rng, dense_limit=DENSE_LIMIT):
    """Bregman divergence of the averaged potential between two dual points.

    Estimates ``p(Y') - p(Y) - <Y' - Y, avg-projection(Y)>`` using common
    random numbers: one stream of sphere draws feeds all three terms, so the
    estimator is pointwise zero when ``Y' = Y`` (or differs by a multiple of
    the identity) and has far lower variance than independent streams.
    """
    if samples < 2:
        raise ValueError("need at least two samples for a standard error")
    ya = sym_array(y)
    ypa = sym_array(yp)
    if ya.shape != ypa.shape:
        raise ValueError("dimension mismatch")
    delta = ypa - ya
    dec = dense_eigh(ya, dense_limit=dense_limit)
    decp = dense_eigh(ypa, dense_limit=dense_limit)
    lam, q = dec.eigenvalues, dec.eigenvectors
    lamp, qp = decp.eigenvalues, decp.eigenvectors
    half = np.exp(0.5 * (lam - lam[0]))
    boost = half * half
    boostp = np.exp(lamp - lamp[0])
    n = len(lam)
    vals = np.empty(samples)
    done = 0
    while done < samples:
        size = min(samples - done, _CHUNK)
        u = sample_unit_sphere(n, rng, size=size)
        a = u @ q
        ap = u @ qp
        log_quad = lam[0] + np.log(((a * a) * boost).sum(axis=1))
        log_quad_p = lamp[0] + np.log(((ap * ap) * boostp).sum(axis=1))
        v = (a * half) @ q.T  # rows: exp((Y - lam_max I)/2) u
        quad_delta = np.einsum("si,ij,sj->s", v, delta, v) / (v * v).sum(axis=1)
        vals[done : done + size] = log_quad_p - log_quad - quad_delta
        done += size
    return ScalarEstimate(
        float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples)), samples
    )
