# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loop: batched generation of balanced assignment candidates.

Each candidate is a uniform draw over the C(n, n/2) assignments with equal
arm sizes, produced by a partial Fisher-Yates shuffle of the unit indices
(selecting the treated half), together with the running cross products
U = Z @ cols needed by the balance statistic and the estimators.

The generator is xoshiro256++ seeded through SplitMix64; its state is a
4-element uint64 array owned by the caller and advanced in place, so a pool
split into blocks yields the same candidates as a single call.
"""

from libc.stdint cimport int8_t, uint64_t

import numpy as np

cdef extern from *:
    """
    #include <stdint.h>

    static inline uint64_t tb_splitmix64(uint64_t *s) {
        uint64_t z = (*s += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static inline uint64_t tb_rotl64(uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    static inline uint64_t tb_next(uint64_t *s) {
        uint64_t result = tb_rotl64(s[0] + s[3], 23) + s[0];
        uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = tb_rotl64(s[3], 45);
        return result;
    }

    /* Lemire's unbiased bounded sampler: uniform on [0, bound). */
    static inline uint64_t tb_below(uint64_t *s, uint64_t bound) {
        uint64_t x = tb_next(s);
        __uint128_t m = (__uint128_t)x * (__uint128_t)bound;
        uint64_t l = (uint64_t)m;
        if (l < bound) {
            uint64_t t = (0 - bound) % bound;
            while (l < t) {
                x = tb_next(s);
                m = (__uint128_t)x * (__uint128_t)bound;
                l = (uint64_t)m;
            }
        }
        return (uint64_t)(m >> 64);
    }
    """
    uint64_t tb_splitmix64(uint64_t *s) nogil
    uint64_t tb_below(uint64_t *s, uint64_t bound) nogil


BACKEND_NAME = "compiled"


def make_state(seed):
    """Expand a uint64 seed into an xoshiro256++ state vector."""
    cdef uint64_t sm = <uint64_t> (int(seed) & 0xFFFFFFFFFFFFFFFF)
    state = np.empty(4, dtype=np.uint64)
    cdef uint64_t[::1] st = state
    cdef int i
    for i in range(4):
        st[i] = tb_splitmix64(&sm)
    return state


def candidate_block(double[:, ::1] cols, Py_ssize_t k, uint64_t[::1] state):
    """Draw ``k`` balanced assignments and their column cross products.

    Returns ``(z, u)`` where ``z`` is (k, n) with entries in {-1, +1} and
    exactly n/2 of each sign per row, and ``u[c] = z[c] @ cols``. The state
    array is advanced in place.
    """
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t m = cols.shape[1]
    cdef Py_ssize_t half = n // 2
    if n < 2 or n % 2 != 0:
        raise ValueError(f"n must be even and >= 2, got {n}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    z_arr = np.empty((k, n), dtype=np.int8)
    u_arr = np.empty((k, m), dtype=np.float64)
    doubled = 2.0 * np.asarray(cols)
    colsum = np.asarray(cols).sum(axis=0)
    idx_arr = np.empty(n, dtype=np.intp)

    cdef int8_t[:, ::1] z = z_arr
    cdef double[:, ::1] u = u_arr
    cdef double[:, ::1] c2 = doubled
    cdef double[::1] cs = colsum
    cdef Py_ssize_t[::1] idx = idx_arr
    cdef uint64_t st[4]
    cdef Py_ssize_t c, i, j, t, row

    st[0] = state[0]; st[1] = state[1]; st[2] = state[2]; st[3] = state[3]
    with nogil:
        for c in range(k):
            for i in range(n):
                idx[i] = i
            for i in range(half):
                j = i + <Py_ssize_t> tb_below(st, <uint64_t> (n - i))
                t = idx[i]; idx[i] = idx[j]; idx[j] = t
            for i in range(n):
                z[c, i] = -1
            for j in range(m):
                u[c, j] = -cs[j]
            for i in range(half):
                row = idx[i]
                z[c, row] = 1
                for j in range(m):
                    u[c, j] += c2[row, j]
    state[0] = st[0]; state[1] = st[1]; state[2] = st[2]; state[3] = st[3]
    return z_arr, u_arr
