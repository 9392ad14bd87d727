"""The online eigenvector game over the spectrahedron.

An adversary supplies symmetric gain matrices before seeing the current
action; the player projects the running gain sum through one of four
strategies (exact multiplicative weights, the exact rank-1 sketch, its
Krylov approximation, or a Monte-Carlo mean of the averaged projection,
the last being test-only).  The engine enforces the information order
structurally: the gain for step t is requested before the sphere vector
for step t is drawn.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .lanczos import DEFAULT_K0
from .linalg import (
    DENSE_LIMIT,
    SparseSymOperator,
    op_norm_bounds,
    sample_unit_sphere,
)
from .projections import (
    estimate_avg_projection_dirichlet,
    mmw_projection,
    rank1_projection,
    rank1_projection_lanczos,
)

STRATEGIES = ("exact_mmw", "rank1_exact", "rank1_lanczos", "averaged_mc")
GAIN_CLASSES = ("bounded_inf_norm_1", "psd_unit")

#: Step size at or below which the refined (PSD-gain) regret bound applies.
REFINED_ETA_MAX = 1.0 / 6.0


class GainValidationError(Exception):
    """An adversary emitted a gain outside its declared class."""


class Adversary:
    """Source of symmetric gain matrices, oblivious to the current action.

    Subclasses set ``n`` and ``gain_class`` (one of ``bounded_inf_norm_1``,
    ``psd_unit``) and implement :meth:`next_gain`, which may depend only on
    the played history and the adversary's own random stream.
    """

    n: int
    gain_class: str

    def next_gain(self, history):
        raise NotImplementedError


def _haar_orthogonal(n, rng):
    g = rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def _sym(a):
    return 0.5 * (a + a.T)


class FixedMatrixAdversary(Adversary):
    """Returns the same gain matrix every step."""

    def __init__(self, matrix, gain_class="bounded_inf_norm_1"):
        self.matrix = _sym(np.asarray(matrix, dtype=float))
        self.n = self.matrix.shape[0]
        self.gain_class = gain_class

    def next_gain(self, history):
        return self.matrix


class RandomRotationAdversary(Adversary):
    """A fixed random spectrum re-rotated by a fresh Haar rotation each step.

    The seed matrix is normalized to unit operator norm once, so every gain
    satisfies the unit-norm class exactly (rotations preserve the spectrum).
    """

    gain_class = "bounded_inf_norm_1"

    def __init__(self, n, rng):
        self.n = n
        self._rng = rng
        seed_matrix = _sym(rng.standard_normal((n, n)))
        lam = np.linalg.eigvalsh(seed_matrix)
        self._spectrum = lam / max(abs(lam[0]), abs(lam[-1]))

    def next_gain(self, history):
        q = _haar_orthogonal(self.n, self._rng)
        return _sym((q * self._spectrum) @ q.T)


class PsdRandomAdversary(Adversary):
    """Random PSD gains with spectrum in [0, 1]."""

    gain_class = "psd_unit"

    def __init__(self, n, rng):
        self.n = n
        self._rng = rng

    def next_gain(self, history):
        q = _haar_orthogonal(self.n, self._rng)
        d = self._rng.uniform(0.0, 1.0, self.n)
        return _sym((q * d) @ q.T)


class StreamingPcaAdversary(Adversary):
    """Rank-1 unit-trace gains ``a a'`` from fresh unit vectors."""

    gain_class = "psd_unit"

    def __init__(self, n, rng):
        self.n = n
        self._rng = rng

    def next_gain(self, history):
        a = sample_unit_sphere(self.n, self._rng)
        return np.outer(a, a)


ADVERSARY_KINDS = ("random_rotation", "fixed_matrix", "psd_random", "streaming_pca")


def builtin_adversaries(kind, n, rng, matrix=None):
    """Construct one of the built-in oblivious adversaries by name."""
    if kind == "random_rotation":
        return RandomRotationAdversary(n, rng)
    if kind == "fixed_matrix":
        if matrix is None:
            seed_matrix = _sym(rng.standard_normal((n, n)))
            lam = np.linalg.eigvalsh(seed_matrix)
            matrix = seed_matrix / max(abs(lam[0]), abs(lam[-1]))
        return FixedMatrixAdversary(matrix)
    if kind == "psd_random":
        return PsdRandomAdversary(n, rng)
    if kind == "streaming_pca":
        return StreamingPcaAdversary(n, rng)
    raise ValueError(f"unknown adversary kind {kind!r}")


def default_eta(n, T):
    """Step size ``sqrt(2 log(4n) / (3T))`` tuned for unit-norm gains."""
    if T < 1:
        raise ValueError("horizon must be >= 1")
    return math.sqrt(2.0 * math.log(4.0 * n) / (3.0 * T))


def kt_schedule(n, T, eta, delta, k0=DEFAULT_K0):
    """Per-step Krylov depth rule ``t -> ceil(k0 sqrt(1 + eta t) log(nT/delta))``.

    Nondecreasing in t; at this depth the approximate plays lose at most one
    unit of cumulative gain relative to the exact sketch, with probability at
    least 1 - delta over the whole run.
    """
    if min(n, T) < 1 or eta < 0 or k0 <= 0:
        raise ValueError("n, T must be positive, eta >= 0, k0 > 0")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    log_term = math.log(n * T / delta)

    def rule(t):
        return max(1, math.ceil(k0 * math.sqrt(1.0 + eta * t) * log_term))

    return rule


@dataclass
class Schedule:
    """Run parameters: step size, horizon, confidence, and Krylov depth rule."""

    eta: float
    T: int
    delta: float = 0.1
    kt_rule: object = None

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.T < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")


@dataclass
class RegretTrace:
    """Per-step records and summary statistics of one online run."""

    n: int
    strategy: str
    eta: float
    T: int
    step_gain: np.ndarray = field(repr=False)
    cum_gain: np.ndarray = field(repr=False)
    lam_max_running: np.ndarray = field(repr=False)
    k_used: np.ndarray = field(repr=False)
    matvecs: np.ndarray = field(repr=False)
    wall_ns: np.ndarray = field(repr=False)
    lam_max_final: float = 0.0
    lam_max_tol: float = 0.0
    total_regret: float = 0.0
    avg_regret: float = 0.0

    def validate(self, tol=1e-9):
        """Check that cumulative fields are prefix sums of the per-step fields."""
        recomputed = np.cumsum(self.step_gain)
        if np.abs(recomputed - self.cum_gain).max() > tol:
            raise ValueError("cumulative gain is not the prefix sum of step gains")
        regret = self.lam_max_final - self.cum_gain[-1]
        if abs(regret - self.total_regret) > tol:
            raise ValueError("total regret does not match per-step records")
        if abs(self.total_regret / self.T - self.avg_regret) > tol:
            raise ValueError("average regret does not match total")

    def rows(self, include_timing=True):
        """Per-step rows for CSV emission (timing column optional)."""
        for i in range(self.T):
            row = [
                i + 1,
                repr(float(self.step_gain[i])),
                repr(float(self.cum_gain[i])),
                repr(float(self.lam_max_running[i])),
                int(self.k_used[i]),
                int(self.matvecs[i]),
            ]
            if include_timing:
                row.append(int(self.wall_ns[i]))
            yield row

    @staticmethod
    def columns(include_timing=True):
        cols = ["t", "step_gain", "cum_gain", "lam_max_running", "k_used", "matvecs"]
        if include_timing:
            cols.append("wall_ns")
        return cols


def _validate_gain(g, gain_class, t, n):
    if g.shape != (n, n):
        raise GainValidationError(f"step {t}: gain has shape {g.shape}, expected ({n}, {n})")
    scale = 1.0 + np.abs(g).max()
    if np.abs(g - g.T).max() > 1e-12 * scale:
        raise GainValidationError(f"step {t}: gain matrix is not symmetric")
    lam = np.linalg.eigvalsh(g)
    if gain_class == "bounded_inf_norm_1":
        if max(abs(lam[0]), abs(lam[-1])) > 1.0 + 1e-9:
            raise GainValidationError(
                f"step {t}: gain operator norm {max(abs(lam[0]), abs(lam[-1])):.6g} exceeds 1"
            )
    elif gain_class == "psd_unit":
        if lam[0] < -1e-9 or lam[-1] > 1.0 + 1e-9:
            raise GainValidationError(
                f"step {t}: gain spectrum [{lam[0]:.6g}, {lam[-1]:.6g}] outside [0, 1]"
            )
    else:
        raise GainValidationError(f"step {t}: unknown gain class {gain_class!r}")


def run_online(
    adversary,
    strategy,
    schedule,
    rng,
    dense_limit=DENSE_LIMIT,
    mc_samples=2000,
    validate_gains=True,
    lam_tol=1e-6,
):
    """Play the online game for ``schedule.T`` steps and return the trace.

    At each step the engine (1) requests the gain from the adversary using
    only the past history, (2) draws the sphere vector for sketch strategies,
    (3) projects the scaled gain sum accumulated strictly before this step,
    and (4) records the earned inner product.  Total regret compares the
    cumulative gain against the top eigenvalue of the realized gain sum
    (exact at dense scale, certified within a recorded tolerance above it).
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    n = adversary.n
    T = schedule.T
    eta = schedule.eta
    dense_mode = n <= dense_limit
    if strategy in ("exact_mmw", "averaged_mc", "rank1_exact") and not dense_mode:
        raise ValueError(f"strategy {strategy!r} requires n <= dense limit {dense_limit}")
    kt_rule = schedule.kt_rule
    if strategy == "rank1_lanczos" and kt_rule is None:
        kt_rule = kt_schedule(n, T, eta, schedule.delta)

    step_gain = np.zeros(T)
    cum_gain = np.zeros(T)
    lam_running = np.zeros(T)
    k_used = np.zeros(T, dtype=np.int64)
    matvecs = np.zeros(T, dtype=np.int64)
    wall_ns = np.zeros(T, dtype=np.int64)

    history = []
    gain_sum = np.zeros((n, n)) if dense_mode else None
    gain_list = None if dense_mode else []
    running_total = 0.0
    lam_tol_abs = 0.0

    for t in range(1, T + 1):
        gain = np.asarray(adversary.next_gain(tuple(history)), dtype=float)
        if validate_gains:
            _validate_gain(gain, adversary.gain_class, t, n)
        t0 = time.perf_counter_ns()
        if strategy == "exact_mmw":
            action = mmw_projection(eta * gain_sum, dense_limit=dense_limit)
        elif strategy == "rank1_exact":
            u = sample_unit_sphere(n, rng)
            action = rank1_projection(eta * gain_sum, u, dense_limit=dense_limit)
        elif strategy == "averaged_mc":
            est = estimate_avg_projection_dirichlet(
                eta * gain_sum, mc_samples, rng, dense_limit=dense_limit
            )
            action = est.action
        else:  # rank1_lanczos
            u = sample_unit_sphere(n, rng)
            base_op = (
                SparseSymOperator.from_dense(gain_sum)
                if dense_mode
                else SparseSymOperator.from_matrices(gain_list)
                if gain_list
                else SparseSymOperator(n, lambda v: np.zeros_like(v), nnz_hint=0)
            )
            k = min(kt_rule(t), n)
            action = rank1_projection_lanczos(base_op.scaled(eta), u, k)
            k_used[t - 1] = k
            matvecs[t - 1] = base_op.matvec_count
        wall_ns[t - 1] = time.perf_counter_ns() - t0

        earned = action.inner(gain)
        running_total += earned
        step_gain[t - 1] = earned
        cum_gain[t - 1] = running_total

        if dense_mode:
            gain_sum += gain
            lam_running[t - 1] = np.linalg.eigvalsh(gain_sum)[-1]
        else:
            gain_list.append(gain)
            bounds = op_norm_bounds(SparseSymOperator.from_matrices(gain_list), lam_tol)
            lam_running[t - 1] = bounds.lam_max
            lam_tol_abs = lam_tol * max(1.0, abs(bounds.lam_max))
        history.append((gain, action))

    lam_final = float(lam_running[-1])
    total_regret = lam_final - running_total
    return RegretTrace(
        n=n,
        strategy=strategy,
        eta=eta,
        T=T,
        step_gain=step_gain,
        cum_gain=cum_gain,
        lam_max_running=lam_running,
        k_used=k_used,
        matvecs=matvecs,
        wall_ns=wall_ns,
        lam_max_final=lam_final,
        lam_max_tol=lam_tol_abs,
        total_regret=float(total_regret),
        avg_regret=float(total_regret / T),
    )


def expected_regret_bound(n, eta, T):
    """Expected-regret bound for unit-operator-norm gains: log(4n)/eta + 1.5 eta T."""
    return math.log(4.0 * n) / eta + 1.5 * eta * T


def high_probability_regret_bound(n, eta, T, delta):
    """High-probability regret bound: the expected bound plus sqrt(2 T log(1/delta))."""
    return expected_regret_bound(n, eta, T) + math.sqrt(2.0 * T * math.log(1.0 / delta))


def refined_regret_bound(n, eta, lam_max):
    """Refined bound for PSD gains with spectrum in [0,1] and eta <= 1/6."""
    return math.log(4.0 * n) / eta + 3.0 * eta * lam_max
