"""Assignment-pool backends: compiled kernel with a NumPy fallback.

Both backends implement the same contract:

    make_state(seed)             -> opaque stream state for one pool
    candidate_block(cols, k, st) -> (z, u), advancing the state in place,
                                    z: (k, n) int8 balanced +/-1 rows,
                                    u: (k, m) float64 with u[c] = z[c] @ cols

Each backend is fully deterministic given the pool seed, and block sizes do
not change the candidate sequence. The two backends draw from different bit
streams (xoshiro256++ vs. NumPy's PCG64), so pools differ realization by
realization while agreeing in distribution; ``benchmarks/bench_backends.py``
compares their throughput.

Selection: the compiled kernel is used when importable, unless overridden
with TARGETBALANCE_BACKEND={auto,compiled,python}.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from . import _kernel
except ImportError:  # extension not built; NumPy path below
    _kernel = None


class PythonBackend:
    """Pure NumPy backend: per-row Fisher-Yates via Generator.permuted."""

    name = "python"

    @staticmethod
    def make_state(seed: int) -> np.random.Generator:
        return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)

    @staticmethod
    def candidate_block(cols: np.ndarray, k: int, state: np.random.Generator):
        n = cols.shape[0]
        if n < 2 or n % 2:
            raise ValueError(f"n must be even and >= 2, got {n}")
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        base = np.empty(n, dtype=np.int8)
        base[: n // 2] = 1
        base[n // 2 :] = -1
        z = np.tile(base, (k, 1))
        state.permuted(z, axis=1, out=z)
        u = z.astype(np.float64) @ cols
        return z, u


class CompiledBackend:
    """Cython kernel wrapper (xoshiro256++, partial Fisher-Yates)."""

    name = "compiled"

    @staticmethod
    def make_state(seed: int) -> np.ndarray:
        return _kernel.make_state(seed)

    @staticmethod
    def candidate_block(cols: np.ndarray, k: int, state: np.ndarray):
        cols = np.ascontiguousarray(cols, dtype=np.float64)
        return _kernel.candidate_block(cols, int(k), state)


def available_backends() -> dict:
    out = {"python": PythonBackend()}
    if _kernel is not None:
        out["compiled"] = CompiledBackend()
    return out


def _select():
    choice = os.environ.get("TARGETBALANCE_BACKEND", "auto").lower()
    backends = available_backends()
    if choice in ("auto", ""):
        return backends.get("compiled", backends["python"])
    if choice not in backends:
        raise ImportError(
            f"TARGETBALANCE_BACKEND={choice!r} requested but only "
            f"{sorted(backends)} are available"
        )
    return backends[choice]


backend = _select()
