"""Backend selection for the lattice kernels.

The compiled extension is used when it imports; ``QCHEAT_BACKEND=python``
forces the numpy fallback.  ``QCHEAT_THREADS`` caps the worker count.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

BLOCK = 1024

_compiled = None
if os.environ.get("QCHEAT_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None

backend = _compiled if _compiled is not None else _pykernels
BACKEND_NAME = "cython" if _compiled is not None else "python"


def get_backend(name=None):
    if name is None:
        return backend
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def thread_count():
    env = os.environ.get("QCHEAT_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("QCHEAT_THREADS must be a positive integer")
        return n
    return max(1, os.cpu_count() or 1)


def tree_reduce(leaves):
    """Pairwise sum of the leaf array in a fixed order."""
    x = np.asarray(leaves, dtype=float)
    if x.size == 0:
        return 0.0
    while x.size > 1:
        if x.size % 2:
            x = np.append(x, 0.0)
        x = x[0::2] + x[1::2]
    return float(x[0])


def pairwise_sum(x, be=None):
    """Deterministic sum: sequential blocks of BLOCK, then a binary tree."""
    be = be or backend
    x = np.ascontiguousarray(x, dtype=float).ravel()
    return tree_reduce(be.block_sums(x, BLOCK, thread_count()))
