"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``PHASELOCK_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("PHASELOCK_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

fourier_coupling_sum = _impl.fourier_coupling_sum
walk_seeds = _impl.walk_seeds
ctrw_endpoints = _impl.ctrw_endpoints
bfs_distances = _impl.bfs_distances

__all__ = [
    "BACKEND",
    "fourier_coupling_sum",
    "walk_seeds",
    "ctrw_endpoints",
    "bfs_distances",
]
