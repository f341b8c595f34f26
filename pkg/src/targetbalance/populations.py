"""Source/target population pairs, importance weights, and outcome models.

Both populations are multivariate normals with identity covariance; the
target mean is shifted by delta. Under that model the density ratio has the
closed form

    log pT(x) - log pS(x) = delta' (x - mu_source) - ||delta||^2 / 2

and importance weights are its exponential. The nested-trial formula covers
designs where selection probabilities are known instead.

Outcome models follow the simulation protocol: linear has y0 = sum_j x_j + e
and y1 = 3 sum_j x_j + e', nonlinear has y0 = x'x + e and y1 = 2 x'x + e',
with independent standard normal noise per unit per arm. The scalar outcome
reading of the vector-covariate model (coordinate sum, i.e. a coefficient
vector of ones) is the only one consistent with a scalar y.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

OUTCOME_KINDS = ("linear", "nonlinear")


@dataclass(frozen=True, eq=False)
class GaussianPopulationPair:
    """Source N(mu_source, I) and target N(mu_target, I); delta is derived."""

    mu_source: np.ndarray
    mu_target: np.ndarray
    identity_covariance: bool = True

    def __post_init__(self):
        mu_s = np.atleast_1d(np.asarray(self.mu_source, dtype=np.float64))
        mu_t = np.atleast_1d(np.asarray(self.mu_target, dtype=np.float64))
        if mu_s.ndim != 1 or mu_s.shape != mu_t.shape:
            raise ValueError(
                f"means must be equal-length vectors, got {mu_s.shape} and {mu_t.shape}"
            )
        if not (np.all(np.isfinite(mu_s)) and np.all(np.isfinite(mu_t))):
            raise ValueError("population means must be finite")
        if not self.identity_covariance:
            raise ValueError("only identity-covariance populations are supported")
        object.__setattr__(self, "mu_source", mu_s)
        object.__setattr__(self, "mu_target", mu_t)

    @property
    def d(self) -> int:
        return self.mu_source.shape[0]

    @property
    def delta(self) -> np.ndarray:
        return self.mu_target - self.mu_source

    @classmethod
    def isotropic_shift(cls, d: int, delta: float) -> "GaussianPopulationPair":
        """The simulation default: mu_source = 1, mu_target = 1 + delta."""
        ones = np.ones(d)
        return cls(ones, ones + float(delta))


@dataclass(frozen=True)
class OutcomeModel:
    kind: str
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.kind not in OUTCOME_KINDS:
            raise ValueError(f"kind must be one of {OUTCOME_KINDS}, got {self.kind!r}")
        if not (self.noise_sd >= 0.0):
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")


@dataclass(frozen=True)
class WeightPolicy:
    clip_threshold: float | None = None

    def __post_init__(self):
        if self.clip_threshold is not None and not (self.clip_threshold > 0.0):
            raise ValueError(
                f"clip_threshold must be positive, got {self.clip_threshold}"
            )


def standard_normals(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normals via Box-Muller with a fixed stream consumption.

    Always consumes 2 * ceil(m / 2) uniforms for m variates, so the stream
    position after a call depends only on the requested shape.
    """
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    m = int(np.prod(shape)) if shape else 1
    pairs = (m + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # in (0, 1], keeps log finite
    u2 = rng.random(pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:m]
    return z.reshape(shape)


def log_density_ratio(pop: GaussianPopulationPair, x: np.ndarray):
    """log pT(x) - log pS(x) for a single point (d,) or batch (n, d)."""
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    pts = np.atleast_2d(x)
    if pts.shape[1] != pop.d:
        raise ValueError(f"x has dimension {pts.shape[1]}, expected {pop.d}")
    delta = pop.delta
    out = (pts - pop.mu_source) @ delta - 0.5 * float(delta @ delta)
    return out if batched else float(out[0])


def importance_weights(pop: GaussianPopulationPair, x: np.ndarray) -> np.ndarray:
    """pT(x)/pS(x) per row, computed in log space."""
    return np.exp(log_density_ratio(pop, np.atleast_2d(x)))


def nested_trial_weight(p_select_given_x: float, p_select: float) -> float:
    """Density ratio from known selection probabilities.

    Returns ((1 - p_select_given_x) / p_select_given_x) * (p_select / (1 - p_select)).
    Probabilities at 0 or 1 violate overlap and are rejected.
    """
    for name, p in (("p_select_given_x", p_select_given_x), ("p_select", p_select)):
        if not (0.0 < p < 1.0):
            raise ValueError(f"{name} must be strictly inside (0, 1), got {p}")
    return ((1.0 - p_select_given_x) / p_select_given_x) * (
        p_select / (1.0 - p_select)
    )


def clip_weights(w: np.ndarray, policy: WeightPolicy) -> np.ndarray:
    """Elementwise min(w, threshold); identity when no threshold is set."""
    w = np.asarray(w, dtype=np.float64)
    if not np.all(w > 0.0):
        raise ValueError("weights must be positive")
    if policy.clip_threshold is None:
        return w
    return np.minimum(w, policy.clip_threshold)


def sample_covariates(
    pop: GaussianPopulationPair, which: str, n: int, rng: np.random.Generator
) -> np.ndarray:
    """n i.i.d. draws from the selected population, as an (n, d) matrix."""
    if which not in ("source", "target"):
        raise ValueError(f"which must be 'source' or 'target', got {which!r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    mu = pop.mu_source if which == "source" else pop.mu_target
    return mu + standard_normals(rng, (n, pop.d))


def generate_outcomes(
    model: OutcomeModel, x: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Potential outcome pair (y0, y1) with independent noise per arm."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if model.kind == "linear":
        base0 = x.sum(axis=1)
        base1 = 3.0 * base0
    else:
        q = np.einsum("ij,ij->i", x, x)
        base0, base1 = q, 2.0 * q
    n = x.shape[0]
    eps0 = standard_normals(rng, n)
    eps1 = standard_normals(rng, n)
    return base0 + model.noise_sd * eps0, base1 + model.noise_sd * eps1


def true_target_ate(model: OutcomeModel, pop: GaussianPopulationPair) -> float:
    """Closed-form target ATE under identity covariance.

    Linear: E_T[3 sum X - sum X] = 2 sum_j mu_target_j.
    Nonlinear: E_T[2 X'X - X'X] = sum_j (mu_target_j^2 + 1).
    """
    mu = pop.mu_target
    if model.kind == "linear":
        return float(2.0 * mu.sum())
    return float(np.sum(mu**2 + 1.0))


def read_covariates_csv(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read an ``x1,...,xd[,w]`` CSV into (x, w-or-None)."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataFormatError(f"{path}: empty covariate file") from None
            header = [h.strip() for h in header]
            has_w = header and header[-1] == "w"
            d = len(header) - (1 if has_w else 0)
            expected = [f"x{j + 1}" for j in range(d)] + (["w"] if has_w else [])
            if header != expected or d < 1:
                raise DataFormatError(
                    f"{path}: expected header x1,...,xd[,w], got {','.join(header)}"
                )
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataFormatError(
                        f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}"
                    )
                try:
                    rows.append([float(c) for c in row])
                except ValueError as err:
                    raise DataFormatError(f"{path}:{lineno}: {err}") from None
    except OSError as err:
        raise DataFormatError(f"{path}: {err}") from None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    if has_w:
        return data[:, :-1], data[:, -1]
    return data, None


def write_covariates_csv(path, x: np.ndarray, w: np.ndarray | None = None) -> None:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    header = [f"x{j + 1}" for j in range(x.shape[1])]
    cols = [x]
    if w is not None:
        header.append("w")
        cols.append(np.asarray(w, dtype=np.float64)[:, None])
    body = np.concatenate(cols, axis=1)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in body:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
