"""Self-check suites behind the ``validate`` CLI subcommand.

Two suites: ``enumeration`` holds exact small-n facts (brute force over all
balanced assignments), ``mc`` holds seeded Monte Carlo checks with explicit
tolerances. Every check returns a CheckResult; a failing check is reported,
not raised, so a corrupted build yields a nonzero exit with the full list.

Checks call through the module namespaces (``randomization.<op>``) so that
instrumentation or monkeypatching of a single operation is visible here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import estimators, populations, randomization, theory


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _instance(seed=101, n=8, d=2):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    w = np.exp(0.4 * rng.standard_normal(n))
    return randomization.WeightedCovariates(x, w)


def check_marginal_preservation() -> CheckResult:
    wc = _instance()
    z_all = randomization.enumerate_balanced_assignments(wc.n)
    m = np.array(
        [randomization.mahalanobis_statistic(wc, z).value for z in z_all]
    )
    worst = 0.0
    for a in [*np.quantile(m, [0.25, 0.5, 0.75]), np.inf]:
        mask = m < a
        if not mask.any():
            continue
        frac = ((z_all[mask] + 1) / 2.0).mean(axis=0)
        worst = max(worst, float(np.abs(frac - 0.5).max()))
    return CheckResult(
        "marginal_preservation", worst == 0.0, f"max|E[A_i|accept]-1/2|={worst:.3e}"
    )


def check_conditional_mean() -> CheckResult:
    rng = np.random.default_rng(11)
    wc = _instance()
    n = wc.n
    y0 = rng.standard_normal(n)
    y1 = rng.standard_normal(n) + 1.0
    z_all = randomization.enumerate_balanced_assignments(n)
    m = np.array(
        [randomization.mahalanobis_statistic(wc, z).value for z in z_all]
    )
    target = float(np.dot(wc.w, y1 - y0)) / n
    worst = 0.0
    for a in [*np.quantile(m, [0.3, 0.7]), np.inf]:
        mask = m < a
        ests = [
            estimators.weighted_estimator(
                estimators.observed_outcomes(y0, y1, z), z, wc.w
            )
            for z in z_all[mask]
        ]
        worst = max(worst, abs(float(np.mean(ests)) - target))
    return CheckResult(
        "conditional_mean_identity", worst <= 1e-12, f"max dev={worst:.3e} tol=1e-12"
    )


def check_sign_symmetry() -> CheckResult:
    wc = _instance(seed=7)
    z_all = randomization.enumerate_balanced_assignments(wc.n)
    for criterion in ("target", "source", "alternate"):
        for z in z_all:
            a = randomization.mahalanobis_statistic(wc, z, criterion).value
            b = randomization.mahalanobis_statistic(wc, -z, criterion).value
            if a != b:
                return CheckResult(
                    "m_sign_symmetry", False, f"{criterion}: {a!r} != {b!r}"
                )
    return CheckResult("m_sign_symmetry", True, "bitwise equal on all pairs")


def check_design_covariance() -> CheckResult:
    wc = _instance(seed=23, n=10, d=2)
    z_all = randomization.enumerate_balanced_assignments(wc.n).astype(np.float64)
    samples = z_all @ wc.x_w
    brute = samples.T @ samples / len(samples)
    dev = float(
        np.abs(randomization.weighted_mean_covariance(wc) - brute).max()
    )
    return CheckResult("design_covariance", dev <= 1e-10, f"max dev={dev:.3e}")


def check_ht_identity() -> CheckResult:
    rng = np.random.default_rng(31)
    worst = 0.0
    for _ in range(50):
        n = 2 * int(rng.integers(2, 26))
        y0 = rng.standard_normal(n)
        y1 = rng.standard_normal(n)
        w = np.exp(0.5 * rng.standard_normal(n))
        z = randomization.draw_balanced_assignment(n, rng)
        lhs, rhs = estimators.ht_decomposition_check(y0, y1, w, z)
        worst = max(worst, abs(lhs - rhs) / (1.0 + abs(rhs)))
    return CheckResult("ht_identity", worst <= 1e-10, f"max rel dev={worst:.3e}")


def check_tail_optimality() -> CheckResult:
    rng = np.random.default_rng(43)
    z_all = randomization.enumerate_balanced_assignments(8).astype(np.float64)
    for _ in range(10):
        xw = rng.standard_normal(8)
        v = z_all @ xw
        value, idx = theory.truncation_oracle_1d(v, 0.5)
        k = len(idx)
        for _ in range(200):
            subset = rng.choice(len(v), size=k, replace=False)
            if value > float(np.mean(v[subset] ** 2)) + 1e-12:
                return CheckResult(
                    "tail_truncation_optimality", False, "beaten by random subset"
                )
    return CheckResult(
        "tail_truncation_optimality", True, "200 adversaries x 10 instances"
    )


def check_uniformity(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    z_all = randomization.enumerate_balanced_assignments(4)
    keys = {tuple(row): i for i, row in enumerate(z_all)}
    counts = np.zeros(6)
    for _ in range(60_000):
        counts[keys[tuple(randomization.draw_balanced_assignment(4, rng).z)]] += 1
    expected = 60_000 / 6
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return CheckResult("assignment_uniformity", chi2 < 20.515, f"chi2={chi2:.2f}")


def check_acceptance_rate(seed: int) -> CheckResult:
    wc = _instance(seed=3, n=8, d=1)
    z_all = randomization.enumerate_balanced_assignments(8)
    m = np.array(
        [randomization.mahalanobis_statistic(wc, z).value for z in z_all]
    )
    a = float(np.quantile(m, 0.4, method="lower"))
    frac = float(np.mean(m < a))
    spec = randomization.BalanceSpec(
        "target", randomization.ThresholdRule(a), max_draws=10_000
    )
    rng = np.random.default_rng(seed)
    runs = 20_000
    total_draws = sum(
        randomization.rerandomize_threshold(wc, spec, rng)[1] for _ in range(runs)
    )
    rate = runs / total_draws
    se = math.sqrt(frac * (1 - frac) / total_draws)
    return CheckResult(
        "acceptance_rate",
        abs(rate - frac) <= 3 * se,
        f"rate={rate:.4f} target={frac:.4f} band={3 * se:.4f}",
    )


def check_truncated_covariance(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    d = 3
    a = theory.threshold_for_alpha(d, 0.4)
    cov = theory.truncated_identity_covariance(d, a, 400_000, rng)
    v = theory.variance_reduction_factor(d, a)
    dev = float(np.abs(cov - v * np.eye(d)).max())
    return CheckResult(
        "truncated_covariance", dev <= 0.02, f"max|cov - v I|={dev:.4f} tol=0.02"
    )


def check_change_of_measure(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    pop = populations.GaussianPopulationPair.isotropic_shift(3, 0.4)
    n = 100_000
    xs = populations.sample_covariates(pop, "source", n, rng)
    xt = populations.sample_covariates(pop, "target", n, rng)
    w = populations.importance_weights(pop, xs)
    src = w * np.einsum("ij,ij->i", xs, xs)
    tgt = np.einsum("ij,ij->i", xt, xt)
    se = math.hypot(src.std() / math.sqrt(n), tgt.std() / math.sqrt(n))
    dev = abs(float(src.mean() - tgt.mean()))
    return CheckResult(
        "change_of_measure", dev <= 4 * se, f"dev={dev:.4f} band={4 * se:.4f}"
    )


ENUMERATION_CHECKS = (
    check_marginal_preservation,
    check_conditional_mean,
    check_sign_symmetry,
    check_design_covariance,
    check_ht_identity,
    check_tail_optimality,
)

MC_CHECKS = (
    check_uniformity,
    check_acceptance_rate,
    check_truncated_covariance,
    check_change_of_measure,
)


def run_suite(suite: str, seed: int = 0) -> list[CheckResult]:
    if suite not in ("enumeration", "mc", "all"):
        raise ValueError(f"unknown suite {suite!r}")
    results = []
    if suite in ("enumeration", "all"):
        results.extend(check() for check in ENUMERATION_CHECKS)
    if suite in ("mc", "all"):
        results.extend(check(seed) for check in MC_CHECKS)
    return results
