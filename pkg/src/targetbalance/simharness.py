"""Declarative Monte Carlo sweeps over the six design/estimator methods.

A scenario fixes the outcome model, dimension, population shift delta, the
quantile rerandomization rule, optional weight clipping, and a replication
count; an optional sweep varies one of {n, delta, clip_threshold} over a
value list. Methods combine an estimator (WE weighted, UE unweighted) with
an assignment rule (CR complete randomization, SB source balance, TB target
balance), e.g. "WE-TB".

Within one replication every method shares the same covariate draw, the
same potential outcomes, and the same candidate pool per balance criterion,
so method contrasts are paired; sweep values reuse the per-replication
streams as well, pairing sweep contrasts. Replications are embarrassingly
parallel (each owns a substream derived from base_seed, scenario id, and
replication index) and aggregation runs in replication order, so results
are byte-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ScenarioError
from .estimators import observed_outcomes, unweighted_estimator, weighted_estimator
from .populations import (
    GaussianPopulationPair,
    OutcomeModel,
    WeightPolicy,
    clip_weights,
    generate_outcomes,
    importance_weights,
    sample_covariates,
    true_target_ate,
)
from .randomization import (
    BalanceSpec,
    QuantileRule,
    WeightedCovariates,
    draw_balanced_assignment,
    rerandomize_quantile,
)

ALL_METHODS = ("UE-CR", "UE-SB", "UE-TB", "WE-CR", "WE-SB", "WE-TB")
SWEEP_PARAMS = ("n", "delta", "clip_threshold")

RESULTS_HEADER = (
    "scenario_id,sweep_param,sweep_value,method,reps,base_seed,"
    "true_ate,mean_estimate,bias,variance,mse"
)

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(z: int) -> int:
    z &= _MASK64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_substream_seed(base_seed: int, scenario_id: str, rep_index: int) -> int:
    """Per-replication 64-bit seed.

    SplitMix64 finalizer applied twice: once over base_seed XOR a 64-bit
    hash of the scenario id, then again after mixing in the replication
    index through the SplitMix64 increment (a bijection, so consecutive
    replication indices cannot collide).
    """
    s = _splitmix64((base_seed & _MASK64) ^ _fnv1a64(scenario_id))
    s = _splitmix64((s + (rep_index + 1) * 0x9E3779B97F4A7C15) & _MASK64)
    return s


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    model: str
    d: int
    delta: float
    n: int
    alpha: float
    reps: int
    base_seed: int
    pool: int = 100
    clip_threshold: float | None = None
    methods: tuple[str, ...] = ALL_METHODS
    sweep: tuple[str, tuple[float, ...]] | None = None

    def __post_init__(self):
        if not self.scenario_id:
            raise ScenarioError("scenario_id must be nonempty")
        try:
            OutcomeModel(self.model)
        except ValueError as err:
            raise ScenarioError(str(err)) from None
        if self.d < 1:
            raise ScenarioError(f"d must be >= 1, got {self.d}")
        if self.n < 2 or self.n % 2:
            raise ScenarioError(f"n must be even and >= 2, got {self.n}")
        if not (0.0 <= self.alpha < 1.0):
            raise ScenarioError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.pool < 1:
            raise ScenarioError(f"pool must be >= 1, got {self.pool}")
        if self.reps < 1:
            raise ScenarioError(f"reps must be >= 1, got {self.reps}")
        if not (0 <= self.base_seed <= _MASK64):
            raise ScenarioError("base_seed must fit in 64 bits")
        if self.clip_threshold is not None and not (self.clip_threshold > 0):
            raise ScenarioError("clip_threshold must be positive when set")
        if not self.methods:
            raise ScenarioError("methods must be nonempty")
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad:
            raise ScenarioError(f"unknown methods {bad}; choose from {ALL_METHODS}")
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.sweep is not None:
            param, values = self.sweep
            if param not in SWEEP_PARAMS:
                raise ScenarioError(
                    f"sweep parameter must be one of {SWEEP_PARAMS}, got {param!r}"
                )
            values = tuple(values)
            if not values:
                raise ScenarioError("sweep value list must be nonempty")
            for v in values:
                self._check_sweep_value(param, v)
            object.__setattr__(self, "sweep", (param, values))

    @staticmethod
    def _check_sweep_value(param: str, value) -> None:
        if param == "n":
            if int(value) != value or int(value) % 2 or int(value) < 2:
                raise ScenarioError(f"sweep n values must be even integers, got {value}")
        elif param == "clip_threshold":
            if not (float(value) > 0.0):
                raise ScenarioError(
                    f"sweep clip_threshold values must be positive, got {value}"
                )
        else:
            float(value)

    def at_sweep_value(self, param: str, value) -> "ScenarioConfig":
        if param == "n":
            return replace(self, n=int(value), sweep=None)
        if param == "delta":
            return replace(self, delta=float(value), sweep=None)
        return replace(self, clip_threshold=float(value), sweep=None)


@dataclass(frozen=True)
class SweepResult:
    scenario_id: str
    sweep_param: str
    sweep_value: float
    method: str
    bias: float
    variance: float
    mse: float
    mean_estimate: float
    true_ate: float
    reps: int
    base_seed: int


def run_replication(cfg: ScenarioConfig, rep_index: int) -> dict[str, float]:
    """One replication: shared (x, y, weights), paired assignments, estimates.

    Draw order is fixed (covariates, outcomes, then CR/SB/TB assignments for
    whichever criteria the method set needs), so a given (cfg, rep_index)
    always maps to the same estimates.
    """
    if not (0 <= rep_index < cfg.reps):
        raise ValueError(f"rep_index must be in [0, {cfg.reps}), got {rep_index}")
    seed = derive_substream_seed(cfg.base_seed, cfg.scenario_id, rep_index)
    rng = np.random.default_rng(seed)

    pop = GaussianPopulationPair.isotropic_shift(cfg.d, cfg.delta)
    model = OutcomeModel(cfg.model)
    x = sample_covariates(pop, "source", cfg.n, rng)
    w_clip = clip_weights(
        importance_weights(pop, x), WeightPolicy(cfg.clip_threshold)
    )
    y0, y1 = generate_outcomes(model, x, rng)

    needed = {m.split("-")[1] for m in cfg.methods}
    k = math.ceil(cfg.pool / (1.0 - cfg.alpha))
    rule = QuantileRule(alpha=cfg.alpha, pool=cfg.pool)
    max_draws = max(1_000_000, k)
    assignments = {}
    if "CR" in needed:
        assignments["CR"] = draw_balanced_assignment(cfg.n, rng)
    if "SB" in needed:
        wc_unit = WeightedCovariates(x, np.ones(cfg.n))
        spec = BalanceSpec(criterion="source", rule=rule, max_draws=max_draws)
        assignments["SB"], _ = rerandomize_quantile(wc_unit, spec, rng)
    if "TB" in needed:
        wc_target = WeightedCovariates(x, w_clip)
        spec = BalanceSpec(criterion="target", rule=rule, max_draws=max_draws)
        assignments["TB"], _ = rerandomize_quantile(wc_target, spec, rng)

    out = {}
    for method in sorted(cfg.methods):
        est, bal = method.split("-")
        z = assignments[bal]
        y_obs = observed_outcomes(y0, y1, z)
        if est == "WE":
            out[method] = weighted_estimator(y_obs, z, w_clip)
        else:
            out[method] = unweighted_estimator(y_obs, z)
    return out


def _run_point(cfg: ScenarioConfig, threads: int) -> dict[str, np.ndarray]:
    methods = sorted(cfg.methods)
    estimates = {m: np.empty(cfg.reps) for m in methods}
    if threads <= 1:
        results = (run_replication(cfg, r) for r in range(cfg.reps))
    else:
        executor = ThreadPoolExecutor(max_workers=threads)
        results = executor.map(lambda r: run_replication(cfg, r), range(cfg.reps))
    for r, rep_out in enumerate(results):
        for m in methods:
            estimates[m][r] = rep_out[m]
    if threads > 1:
        executor.shutdown()
    return estimates


def run_sweep(cfg: ScenarioConfig, threads: int = 1) -> list[SweepResult]:
    """All sweep points, aggregated to bias/variance/MSE rows.

    Uses the biased 1/R variance normalizer so mse = variance + bias^2 holds
    as a floating-point identity. Rows are ordered by (sweep_value, method).
    """
    if cfg.sweep is None:
        points = [("none", 0.0, cfg)]
    else:
        param, values = cfg.sweep
        points = [
            (param, float(v), cfg.at_sweep_value(param, v))
            for v in sorted(values)
        ]
    rows = []
    for param, value, point_cfg in points:
        pop = GaussianPopulationPair.isotropic_shift(point_cfg.d, point_cfg.delta)
        tau = true_target_ate(OutcomeModel(point_cfg.model), pop)
        estimates = _run_point(point_cfg, threads)
        for method in sorted(estimates):
            e = estimates[method]
            mean_est = float(e.mean())
            bias = mean_est - tau
            variance = float(np.mean((e - mean_est) ** 2))
            mse = float(np.mean((e - tau) ** 2))
            rows.append(
                SweepResult(
                    scenario_id=cfg.scenario_id,
                    sweep_param=param,
                    sweep_value=value,
                    method=method,
                    bias=bias,
                    variance=variance,
                    mse=mse,
                    mean_estimate=mean_est,
                    true_ate=tau,
                    reps=point_cfg.reps,
                    base_seed=point_cfg.base_seed,
                )
            )
    return rows


def fixed_dataset_conditional_variance(
    wc: WeightedCovariates,
    y0: np.ndarray,
    y1: np.ndarray,
    threshold: float,
    n_accepted: int,
    rng: np.random.Generator,
    criterion: str = "target",
) -> dict:
    """Conditional vs. unconditional estimator variance on one fixed dataset.

    Draws uniform balanced assignments in blocks until ``n_accepted`` fall
    inside {M < threshold}; the estimator is evaluated on every candidate,
    giving var(tau_hat) over all draws and var(tau_hat | accept) over the
    accepted subset. This is the fixed-(x, y) mode of the harness: only the
    assignment is random.
    """
    from ._backend import backend  # local import to honor backend override

    y0 = np.asarray(y0, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    metric = wc.metric(criterion)
    n = wc.n
    c_tilde = wc.w * (y1 + y0) / 2.0
    offset = float(np.dot(wc.w, y1 - y0) / n)
    cols = np.ascontiguousarray(np.column_stack([metric.cols, c_tilde]))

    state = backend.make_state(int(rng.integers(0, 2**64, dtype=np.uint64)))
    all_est, acc_est = [], []
    accepted = 0
    block = 8192
    max_blocks = 10_000
    for _ in range(max_blocks):
        _, u = backend.candidate_block(cols, block, state)
        m = metric.values_from_u(u[:, :-1])
        tau = (2.0 / n) * u[:, -1] + offset
        all_est.append(tau)
        acc_est.append(tau[m < threshold])
        accepted += int((m < threshold).sum())
        if accepted >= n_accepted:
            break
    else:
        raise RuntimeError("acceptance region too small for requested count")
    everything = np.concatenate(all_est)
    accepted_arr = np.concatenate(acc_est)
    return {
        "var_unconditional": float(everything.var()),
        "var_conditional": float(accepted_arr.var()),
        "ratio": float(accepted_arr.var() / everything.var()),
        "n_total": int(everything.size),
        "n_accepted": int(accepted_arr.size),
    }


def format_float(v: float) -> str:
    return f"{v:.17g}"


def results_to_csv_text(rows: list[SweepResult]) -> str:
    lines = [RESULTS_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.scenario_id,
                    r.sweep_param,
                    format_float(r.sweep_value),
                    r.method,
                    str(r.reps),
                    str(r.base_seed),
                    format_float(r.true_ate),
                    format_float(r.mean_estimate),
                    format_float(r.bias),
                    format_float(r.variance),
                    format_float(r.mse),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def write_results_csv(rows: list[SweepResult], path) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(results_to_csv_text(rows))


_SCENARIO_KEYS = {
    "scenario_id",
    "model",
    "d",
    "delta",
    "n",
    "alpha",
    "pool",
    "clip_threshold",
    "reps",
    "base_seed",
    "methods",
    "sweep_param",
    "sweep_values",
}


def parse_scenario_text(text: str, default_id: str = "scenario") -> ScenarioConfig:
    """Parse the flat key = value scenario format.

    Blank lines and '#' comments are ignored; lists are comma-separated;
    unknown or duplicate keys are errors.
    """
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCENARIO_KEYS:
            raise ScenarioError(f"line {lineno}: unknown key {key!r}")
        if key in kv:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r}")
        kv[key] = value

    required = {"model", "d", "delta", "n", "alpha", "reps", "base_seed"}
    missing = sorted(required - kv.keys())
    if missing:
        raise ScenarioError(f"missing required keys: {', '.join(missing)}")

    def parse_num(key, conv):
        try:
            return conv(kv[key])
        except ValueError as err:
            raise ScenarioError(f"key {key!r}: {err}") from None

    sweep = None
    if ("sweep_param" in kv) != ("sweep_values" in kv):
        raise ScenarioError("sweep_param and sweep_values must be given together")
    if "sweep_param" in kv:
        values = tuple(
            float(v.strip()) for v in kv["sweep_values"].split(",") if v.strip()
        )
        sweep = (kv["sweep_param"], values)

    clip = None
    if "clip_threshold" in kv and kv["clip_threshold"].lower() != "none":
        clip = parse_num("clip_threshold", float)

    methods = ALL_METHODS
    if "methods" in kv:
        methods = tuple(m.strip() for m in kv["methods"].split(",") if m.strip())

    return ScenarioConfig(
        scenario_id=kv.get("scenario_id", default_id),
        model=kv["model"],
        d=parse_num("d", int),
        delta=parse_num("delta", float),
        n=parse_num("n", int),
        alpha=parse_num("alpha", float),
        pool=parse_num("pool", int) if "pool" in kv else 100,
        clip_threshold=clip,
        reps=parse_num("reps", int),
        base_seed=parse_num("base_seed", int),
        methods=methods,
        sweep=sweep,
    )


def load_scenario(path) -> ScenarioConfig:
    from pathlib import Path

    p = Path(path)
    return parse_scenario_text(p.read_text(encoding="utf-8"), default_id=p.stem)
