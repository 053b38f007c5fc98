# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Every function here has a bit-for-bit twin in ``_kernels_py``; the two are
selected between in ``phaselock.kernels``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos

cnp.import_array()

ctypedef unsigned long long u64

cdef u64 GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline u64 _mix(u64 z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(u64* state) nogil:
    state[0] += GOLDEN
    return <double>(_mix(state[0]) >> 11) * (1.0 / 9007199254740992.0)


def fourier_coupling_sum(const cnp.int64_t[::1] indptr,
                         const cnp.int64_t[::1] indices,
                         const double[::1] phase,
                         const double[::1] cos_coef,
                         const double[::1] sin_coef):
    """out[v] = sum over u in N(v) of H(phase[u] - phase[v]).

    H(x) = sum_k cos_coef[k] cos(k x) + sin_coef[k] sin(k x), k = 0..K-1.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t nk = cos_coef.shape[0]
    cdef Py_ssize_t v, e, k
    cdef double x, acc
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for v in range(n):
            acc = 0.0
            for e in range(indptr[v], indptr[v + 1]):
                x = phase[indices[e]] - phase[v]
                for k in range(nk):
                    if cos_coef[k] != 0.0:
                        acc = acc + cos_coef[k] * cos(k * x)
                    if sin_coef[k] != 0.0:
                        acc = acc + sin_coef[k] * sin(k * x)
            res[v] = acc
    return out


def walk_seeds(u64 master_seed, cnp.int64_t first, Py_ssize_t count):
    out = np.empty(count, dtype=np.uint64)
    cdef cnp.uint64_t[::1] s = out
    cdef u64 base = _mix(master_seed + GOLDEN)
    cdef Py_ssize_t i
    for i in range(count):
        s[i] = _mix(base ^ (<u64>(first + i) * GOLDEN))
    return out


def ctrw_endpoints(const cnp.int64_t[::1] indptr,
                   const cnp.int64_t[::1] indices,
                   const double[::1] cumprob,
                   const cnp.int64_t[::1] starts,
                   const cnp.uint64_t[::1] seeds,
                   const double[::1] chunk_weights,
                   double chunk_rate):
    """Uniformized continuous-time walks, one RNG stream per walk.

    The jump count is the sum of ``len(chunk_weights)`` Poisson(chunk_rate)
    draws by CDF inversion; ``chunk_weights[0]`` is exp(-chunk_rate).
    """
    cdef Py_ssize_t n_walks = starts.shape[0]
    cdef Py_ssize_t n_chunks = chunk_weights.shape[0]
    cdef Py_ssize_t w, c, e, lo, hi
    cdef long long jumps, k, j
    cdef double u, p, cdf
    cdef u64 state
    cdef cnp.int64_t v
    out = np.empty(n_walks, dtype=np.int64)
    cdef cnp.int64_t[::1] res = out
    with nogil:
        for w in range(n_walks):
            state = seeds[w]
            jumps = 0
            for c in range(n_chunks):
                u = _uniform(&state)
                p = chunk_weights[0]
                cdf = p
                k = 0
                while cdf < u and p > 0.0:
                    k += 1
                    p = p * chunk_rate / k
                    cdf = cdf + p
                jumps += k
            v = starts[w]
            for j in range(jumps):
                u = _uniform(&state)
                lo = indptr[v]
                hi = indptr[v + 1] - 1
                e = lo
                while e < hi and cumprob[e] <= u:
                    e += 1
                v = indices[e]
            res[w] = v
    return out


def bfs_distances(const cnp.int64_t[::1] indptr,
                  const cnp.int64_t[::1] indices,
                  cnp.int64_t source,
                  cnp.int64_t max_depth):
    """Hop distances from ``source``; -1 for unreached. max_depth < 0: no limit."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] d = dist
    queue = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] q = queue
    cdef Py_ssize_t head = 0, tail = 0, e
    cdef cnp.int64_t v, u
    d[source] = 0
    q[tail] = source
    tail += 1
    with nogil:
        while head < tail:
            v = q[head]
            head += 1
            if max_depth >= 0 and d[v] >= max_depth:
                continue
            for e in range(indptr[v], indptr[v + 1]):
                u = indices[e]
                if d[u] < 0:
                    d[u] = d[v] + 1
                    q[tail] = u
                    tail += 1
    return dist
