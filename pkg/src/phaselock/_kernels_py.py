"""Pure-numpy twins of the compiled kernels in ``_kernels.pyx``.

The walk sampler reproduces the compiled one bit for bit: both use the same
splitmix64 streams and the same floating-point operation order.
"""
from collections import deque

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_TWO_M53 = 1.0 / 9007199254740992.0


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _uniform(state):
    state += _GOLDEN
    return (_mix(state) >> _S11).astype(np.float64) * _TWO_M53


def fourier_coupling_sum(indptr, indices, phase, cos_coef, sin_coef):
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    x = phase[indices] - phase[rows]
    h = np.zeros_like(x)
    for k, (a, b) in enumerate(zip(cos_coef, sin_coef)):
        if a != 0.0:
            h += a * np.cos(k * x)
        if b != 0.0:
            h += b * np.sin(k * x)
    return np.bincount(rows, weights=h, minlength=n)


def walk_seeds(master_seed, first, count):
    with np.errstate(over="ignore"):
        base = _mix(np.array([master_seed], dtype=np.uint64) + _GOLDEN)[0]
        idx = np.arange(first, first + count, dtype=np.uint64)
        return _mix(base ^ (idx * _GOLDEN))


def ctrw_endpoints(indptr, indices, cumprob, starts, seeds, chunk_weights, chunk_rate):
    state = np.array(seeds, dtype=np.uint64, copy=True)
    n_walks = len(starts)
    jumps = np.zeros(n_walks, dtype=np.int64)
    with np.errstate(over="ignore"):
        for _ in range(len(chunk_weights)):
            u = _uniform(state)
            p = np.full(n_walks, chunk_weights[0])
            cdf = p.copy()
            k = np.zeros(n_walks, dtype=np.int64)
            active = (cdf < u) & (p > 0.0)
            while active.any():
                k[active] += 1
                p[active] = p[active] * chunk_rate / k[active]
                cdf[active] = cdf[active] + p[active]
                active &= (cdf < u) & (p > 0.0)
            jumps += k

        v = np.asarray(starts, dtype=np.int64).copy()
        remaining = jumps
        walking = np.flatnonzero(remaining > 0)
        while walking.size:
            u = _uniform_subset(state, walking)
            lo = indptr[v[walking]]
            hi = indptr[v[walking] + 1] - 1
            e = lo.copy()
            moving = (e < hi) & (cumprob[e] <= u)
            while moving.any():
                e[moving] += 1
                moving &= (e < hi) & (cumprob[e] <= u)
            v[walking] = indices[e]
            remaining[walking] -= 1
            walking = walking[remaining[walking] > 0]
    return v


def _uniform_subset(state, idx):
    s = state[idx] + _GOLDEN
    state[idx] = s
    return (_mix(s) >> _S11).astype(np.float64) * _TWO_M53


def bfs_distances(indptr, indices, source, max_depth):
    n = len(indptr) - 1
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([int(source)])
    while queue:
        v = queue.popleft()
        dv = dist[v]
        if 0 <= max_depth <= dv:
            continue
        for u in indices[indptr[v]:indptr[v + 1]]:
            if dist[u] < 0:
                dist[u] = dv + 1
                queue.append(u)
    return dist
