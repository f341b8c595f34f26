"""Difference-in-means ATE estimators and the Horvitz-Thompson identity.

With equal arm sizes the importance-weighted estimator collapses to a
single inner product:

    tau_hat = (1/n1) sum_{z=+1} w y - (1/n0) sum_{z=-1} w y = (2/n) (w*y)' z

and subtracting its assignment-mean (1/n) sum w (y1 - y0) leaves
(2/n) c~' z with c~ = w * (y1 + y0) / 2, the identity behind the variance
decompositions. Estimators accept arbitrary positive weights, so clipped
weights flow through unchanged; clipping bias is measured downstream, not
corrected here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .randomization import AssignmentVector

METHODS = ("weighted", "unweighted")
BALANCES = ("cr", "sb", "tb")


@dataclass(frozen=True)
class EstimateRecord:
    estimate: float
    method: str
    balance: str
    n: int
    clip_threshold: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.estimate):
            raise ValueError(f"estimate must be finite, got {self.estimate}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.balance not in BALANCES:
            raise ValueError(f"balance must be one of {BALANCES}, got {self.balance!r}")
        if self.n < 2 or self.n % 2:
            raise ValueError(f"n must be even and >= 2, got {self.n}")


def _as_z(z) -> np.ndarray:
    zv = z.z if isinstance(z, AssignmentVector) else np.asarray(z)
    if zv.ndim != 1:
        raise ValueError(f"z must be 1-D, got shape {zv.shape}")
    return zv


def weighted_estimator(y_obs: np.ndarray, z, w: np.ndarray) -> float:
    """Importance-weighted difference of arm means, (2/n) (w*y)' z."""
    y = np.asarray(y_obs, dtype=np.float64)
    zv = _as_z(z)
    w = np.asarray(w, dtype=np.float64)
    if not (y.shape == zv.shape == w.shape):
        raise ValueError(
            f"length mismatch: y {y.shape}, z {zv.shape}, w {w.shape}"
        )
    n = y.shape[0]
    return float((2.0 / n) * np.dot(w * y, zv.astype(np.float64)))


def unweighted_estimator(y_obs: np.ndarray, z) -> float:
    """Plain difference of arm means (unit weights)."""
    y = np.asarray(y_obs, dtype=np.float64)
    return weighted_estimator(y, z, np.ones_like(y))


def observed_outcomes(y0: np.ndarray, y1: np.ndarray, z) -> np.ndarray:
    """y1 where treated, y0 where control."""
    zv = _as_z(z)
    return np.where(zv == 1, np.asarray(y1, float), np.asarray(y0, float))


def ht_decomposition_check(
    y0: np.ndarray, y1: np.ndarray, w: np.ndarray, z
) -> tuple[float, float]:
    """Both sides of the centered-estimator identity; they agree to 1e-10.

    lhs: estimator on observed outcomes minus (1/n) sum w (y1 - y0).
    rhs: (2/n) c~' z with c~ = w (y1 + y0) / 2.
    """
    y0 = np.asarray(y0, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    zv = _as_z(z)
    n = y0.shape[0]
    lhs = weighted_estimator(observed_outcomes(y0, y1, zv), zv, w) - float(
        np.dot(w, y1 - y0) / n
    )
    c_tilde = w * (y1 + y0) / 2.0
    rhs = float((2.0 / n) * np.dot(c_tilde, zv.astype(np.float64)))
    return lhs, rhs
