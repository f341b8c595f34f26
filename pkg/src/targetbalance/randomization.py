"""Balanced assignments, balance statistics, and rerandomization loops.

An assignment is a vector z in {-1, +1}^n with exactly n/2 entries of each
sign (z = 2a - 1 for the 0/1 treatment indicator a). Balance of a candidate
assignment is scored by the Mahalanobis statistic of the weighted mean
difference

    M = z' xw C^{-1} xw' z,   C = Cov(xw' Z) = (n xw'xw - s s') / (n - 1)

with s the column sums of xw; weights are the importance weights for the
target criterion, all ones for the source criterion. The alternate criterion
skips the covariance normalization and uses ||(2/n) xw' z||^2 directly.

Rerandomization either rejects draws until M falls below a fixed threshold
or draws a candidate pool and keeps the smallest-M fraction (the quantile
rule). Candidate pools come from a pluggable backend (compiled kernel or
NumPy fallback); per-candidate cost is O(nd + d^2) after a single Cholesky
factorization per dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.linalg import solve_triangular

from ._backend import backend
from .errors import AcceptanceFailureError, SingularCovarianceError

CONDITION_LIMIT = 1e12
RIDGE_SCALE = 1e-10
_POOL_BLOCK = 8192

CRITERIA = ("none", "source", "target", "alternate")


@dataclass(frozen=True, eq=False)
class AssignmentVector:
    """Signed balanced assignment z in {-1, +1}^n with zero sum."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.int8)
        object.__setattr__(self, "z", z)
        if z.ndim != 1:
            raise ValueError(f"z must be 1-D, got shape {z.shape}")
        n = z.shape[0]
        if n < 2 or n % 2:
            raise ValueError(f"n must be even and >= 2, got {n}")
        if not np.all((z == 1) | (z == -1)):
            raise ValueError("z entries must be -1 or +1")
        if int(z.sum()) != 0:
            raise ValueError("z must have exactly n/2 entries of each sign")

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def a(self) -> np.ndarray:
        """0/1 treatment indicator, a_i = (z_i + 1) / 2."""
        return ((self.z + 1) // 2).astype(np.int8)


@dataclass(frozen=True)
class ThresholdRule:
    """Accept the first draw with M < a."""

    a: float

    def __post_init__(self):
        if not (self.a >= 0.0):
            raise ValueError(f"threshold must be >= 0, got {self.a}")


@dataclass(frozen=True)
class QuantileRule:
    """Draw ceil(pool/(1-alpha)) candidates, keep the ``pool`` smallest M.

    alpha = 0 is admitted as the degenerate no-rejection case: the pool
    covers every candidate and selection reduces to complete randomization.
    """

    alpha: float
    pool: int = 100

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.pool < 1:
            raise ValueError(f"pool must be >= 1, got {self.pool}")


@dataclass(frozen=True)
class BalanceSpec:
    """Which balance criterion to score and which acceptance rule to apply."""

    criterion: str
    rule: ThresholdRule | QuantileRule
    max_draws: int = 1_000_000

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(
                f"criterion must be one of {CRITERIA}, got {self.criterion!r}"
            )
        if not isinstance(self.rule, (ThresholdRule, QuantileRule)):
            raise ValueError("rule must be a ThresholdRule or QuantileRule")
        if self.max_draws < 1:
            raise ValueError(f"max_draws must be >= 1, got {self.max_draws}")


@dataclass(frozen=True)
class BalanceStatistic:
    value: float
    criterion: str
    covariance_condition_number: float

    def __post_init__(self):
        if self.value < 0.0:
            raise ValueError(f"balance statistic must be >= 0, got {self.value}")


class _BalanceMetric:
    """Cholesky factor of the balance covariance, reused across candidates."""

    def __init__(self, cols: np.ndarray, normalized: bool, ridge: bool):
        self.cols = np.ascontiguousarray(cols, dtype=np.float64)
        self.n = cols.shape[0]
        self.normalized = normalized
        if not normalized:
            # Alternate criterion: squared norm of (2/n) cols' z, no whitening.
            self.condition_number = 1.0
            self._chol = None
            return
        cov = weighted_mean_covariance_from_columns(self.cols)
        cond = float(np.linalg.cond(cov))
        if ridge:
            eps = RIDGE_SCALE * np.trace(cov) / cov.shape[0]
            cov = cov + eps * np.eye(cov.shape[0])
            cond = float(np.linalg.cond(cov))
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise SingularCovarianceError(cond)
        try:
            self._chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as err:
            raise SingularCovarianceError(cond, str(err)) from err
        self.condition_number = cond

    def value(self, z: np.ndarray) -> float:
        u = self.cols.T @ z.astype(np.float64)
        return self.values_from_u(u[None, :])[0]

    def values_from_u(self, u: np.ndarray) -> np.ndarray:
        """M for a block of candidates, u[c] = z[c] @ cols."""
        if not self.normalized:
            scaled = (2.0 / self.n) * u
            return np.einsum("ij,ij->i", scaled, scaled)
        y = solve_triangular(self._chol, u.T, lower=True, check_finite=False)
        return np.einsum("ji,ji->i", y, y)


@dataclass(frozen=True, eq=False)
class WeightedCovariates:
    """Covariate matrix with positive unit weights and cached row-scaling.

    Arrays are treated as immutable after construction; balance-metric
    factorizations are computed once per (criterion, ridge) and reused
    across all candidate evaluations on this dataset.
    """

    x: np.ndarray
    w: np.ndarray
    x_w: np.ndarray = field(init=False, repr=False)
    _metrics: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"x must be n x d, got shape {x.shape}")
        if w.shape != (x.shape[0],):
            raise ValueError(
                f"w must have length {x.shape[0]}, got shape {w.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError("x must be finite")
        if not np.all(w > 0.0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive and finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x_w", w[:, None] * x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def metric(self, criterion: str, ridge: bool = False) -> _BalanceMetric:
        if criterion not in ("source", "target", "alternate"):
            raise ValueError(
                f"no balance statistic for criterion {criterion!r}"
            )
        key = (criterion, ridge)
        if key not in self._metrics:
            cols = self.x if criterion == "source" else self.x_w
            self._metrics[key] = _BalanceMetric(
                cols, normalized=criterion != "alternate", ridge=ridge
            )
        return self._metrics[key]


def draw_balanced_assignment(n: int, rng: np.random.Generator) -> AssignmentVector:
    """Uniform draw over the C(n, n/2) balanced assignments.

    Implemented as an unbiased (Fisher-Yates) shuffle of the fixed multiset
    of n/2 plus-ones and n/2 minus-ones.
    """
    if n < 2 or n % 2:
        raise ValueError(f"n must be even and >= 2, got {n}")
    base = np.empty(n, dtype=np.int8)
    base[: n // 2] = 1
    base[n // 2 :] = -1
    return AssignmentVector(rng.permutation(base))


def enumerate_balanced_assignments(n: int) -> np.ndarray:
    """All balanced assignments as a (C(n, n/2), n) array of +/-1 rows.

    Enumeration oracles stay at n <= 12 (C(12,6) = 924) to bound runtime;
    rows are emitted in lexicographic order of the treated index set.
    """
    if n < 2 or n % 2:
        raise ValueError(f"n must be even and >= 2, got {n}")
    if n > 12:
        raise ValueError(f"enumeration is capped at n = 12, got {n}")
    count = math.comb(n, n // 2)
    out = np.full((count, n), -1, dtype=np.int8)
    for row, treated in enumerate(combinations(range(n), n // 2)):
        out[row, list(treated)] = 1
    return out


def _as_z(z) -> np.ndarray:
    return z.z if isinstance(z, AssignmentVector) else np.asarray(z)


def weighted_mean_difference(wc: WeightedCovariates, z) -> np.ndarray:
    """Treatment-minus-control mean of the weighted covariates, (2/n) xw' z."""
    zv = _as_z(z)
    if zv.shape[0] != wc.n:
        raise ValueError(f"z has length {zv.shape[0]}, expected {wc.n}")
    return (2.0 / wc.n) * (wc.x_w.T @ zv.astype(np.float64))


def weighted_mean_covariance_from_columns(cols: np.ndarray) -> np.ndarray:
    """Cov(cols' Z) = (n cols'cols - s s') / (n - 1) without any n x n matrix."""
    n = cols.shape[0]
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    s = cols.sum(axis=0)
    cov = (n * (cols.T @ cols) - np.outer(s, s)) / (n - 1)
    return 0.5 * (cov + cov.T)


def weighted_mean_covariance(wc: WeightedCovariates) -> np.ndarray:
    """Design covariance of xw' Z under uniform balanced assignment."""
    return weighted_mean_covariance_from_columns(wc.x_w)


def mahalanobis_statistic(
    wc: WeightedCovariates, z, criterion: str = "target", ridge: bool = False
) -> BalanceStatistic:
    """Balance statistic of one assignment under the given criterion.

    The (2/n) scaling of the mean difference cancels against its covariance,
    so target/source values are z' cols C^{-1} cols' z computed through one
    cached Cholesky factorization (never an explicit inverse). Raises
    SingularCovarianceError when cond(C) > 1e12 and ridge is not enabled.
    """
    zv = _as_z(z)
    if zv.shape[0] != wc.n:
        raise ValueError(f"z has length {zv.shape[0]}, expected {wc.n}")
    metric = wc.metric(criterion, ridge=ridge)
    return BalanceStatistic(
        value=float(metric.value(zv)),
        criterion=criterion,
        covariance_condition_number=metric.condition_number,
    )


def rerandomize_threshold(
    wc: WeightedCovariates,
    spec: BalanceSpec,
    rng: np.random.Generator,
    ridge: bool = False,
) -> tuple[AssignmentVector, int]:
    """Redraw until M < a; returns the accepted assignment and draws used.

    The accepted assignment follows the uniform balanced law conditioned on
    {M < a}. A ``none`` criterion accepts the first draw.
    """
    if not isinstance(spec.rule, ThresholdRule):
        raise ValueError("rerandomize_threshold requires a ThresholdRule")
    if spec.criterion == "none":
        return draw_balanced_assignment(wc.n, rng), 1
    metric = wc.metric(spec.criterion, ridge=ridge)
    for draws in range(1, spec.max_draws + 1):
        z = draw_balanced_assignment(wc.n, rng)
        if metric.value(z.z) < spec.rule.a:
            return z, draws
    raise AcceptanceFailureError(spec.max_draws)


def quantile_candidate_count(rule: QuantileRule) -> int:
    """K = ceil(pool / (1 - alpha)) candidates drawn by the quantile rule."""
    return math.ceil(rule.pool / (1.0 - rule.alpha))


def _pool_m_values(
    metric: _BalanceMetric, k: int, rng: np.random.Generator
) -> np.ndarray:
    """M for k fresh candidates, discarding the assignments themselves."""
    state = backend.make_state(int(rng.integers(0, 2**64, dtype=np.uint64)))
    out = np.empty(k, dtype=np.float64)
    done = 0
    while done < k:
        block = min(_POOL_BLOCK, k - done)
        _, u = backend.candidate_block(metric.cols, block, state)
        out[done : done + block] = metric.values_from_u(u)
        done += block
    return out


def rerandomize_quantile(
    wc: WeightedCovariates,
    spec: BalanceSpec,
    rng: np.random.Generator,
    ridge: bool = False,
) -> tuple[AssignmentVector, float]:
    """Pool-based rerandomization: keep the ``pool`` smallest-M candidates.

    Draws K = ceil(pool / (1 - alpha)) candidates, retains the pool smallest
    M (ties broken by draw order), and returns one retained assignment chosen
    uniformly, together with the largest retained M value. Candidates are
    generated sequentially from a seed drawn before selection, so the
    candidate list is reproducible and block evaluation order-free.
    """
    if not isinstance(spec.rule, QuantileRule):
        raise ValueError("rerandomize_quantile requires a QuantileRule")
    if spec.criterion == "none":
        raise ValueError("quantile rerandomization needs a balance criterion")
    k = quantile_candidate_count(spec.rule)
    if k > spec.max_draws:
        raise ValueError(
            f"candidate count {k} exceeds max_draws {spec.max_draws}"
        )
    pool = min(spec.rule.pool, k)
    metric = wc.metric(spec.criterion, ridge=ridge)

    state = backend.make_state(int(rng.integers(0, 2**64, dtype=np.uint64)))
    kept_m = np.empty(0, dtype=np.float64)
    kept_order = np.empty(0, dtype=np.int64)
    kept_z = np.empty((0, wc.n), dtype=np.int8)
    done = 0
    while done < k:
        block = min(_POOL_BLOCK, k - done)
        z, u = backend.candidate_block(metric.cols, block, state)
        m = metric.values_from_u(u)
        # prune inside the block before touching the big z array
        local = np.lexsort((np.arange(block), m))[:pool]
        cand_m = np.concatenate([kept_m, m[local]])
        cand_order = np.concatenate(
            [kept_order, (done + local).astype(np.int64)]
        )
        cand_z = np.concatenate([kept_z, z[local]], axis=0)
        take = np.lexsort((cand_order, cand_m))[:pool]
        kept_m, kept_order, kept_z = cand_m[take], cand_order[take], cand_z[take]
        done += block

    pick = int(rng.integers(0, pool))
    realized = float(kept_m.max())
    return AssignmentVector(kept_z[pick]), realized


def estimate_threshold(
    wc: WeightedCovariates,
    criterion: str,
    alpha: float,
    n_mc: int,
    rng: np.random.Generator,
    ridge: bool = False,
) -> float:
    """Empirical (1 - alpha) quantile of M over n_mc independent draws.

    Uses lower interpolation, so the returned value is an attained M and the
    acceptance region {M < a} has empirical mass at most 1 - alpha.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if n_mc < 100:
        raise ValueError(f"n_mc must be >= 100, got {n_mc}")
    metric = wc.metric(criterion, ridge=ridge)
    values = _pool_m_values(metric, n_mc, rng)
    return float(np.quantile(values, 1.0 - alpha, method="lower"))
