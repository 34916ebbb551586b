"""Positive initial data on the Heisenberg torus lattice.

Every family returns u₀ = 1 + 0.5·b with max|b| = 1 on the grid, so
u₀ ∈ [0.5, 1.5] before normalization.
"""

from __future__ import annotations

import numpy as np

from .fields import invariant_field, invariant_field_on_grid

KINDS = ("bump", "nil", "mixed", "constant")


def product_bump(x, centres):
    """Π_a (1 + cos 2π(x_a − c_a))/2, a smooth separable bump in [0, 1]."""
    return np.prod(0.5 + 0.5 * np.cos(2 * np.pi * (x[..., :4] - centres)), axis=-1)


def product_bump_exact(x, centres, t, amplitude=0.5):
    """Exact heat evolution of 1 + amplitude·product_bump (ω-independent data)."""
    decay = np.exp(-4 * np.pi**2 * t)
    return 1.0 + amplitude * np.prod(0.5 + 0.5 * decay * np.cos(2 * np.pi * (x[..., :4] - centres)), axis=-1)


def _unit(b):
    peak = np.max(np.abs(b))
    return b / peak if peak > 0 else b


def initial_data(lattice, kind="mixed", seed=0):
    """Initial density on the lattice sites (flattened site order)."""
    rng = np.random.default_rng(seed)
    if kind == "constant":
        return np.ones(lattice.size)
    if kind not in KINDS:
        raise ValueError(f"unknown initial data {kind!r}; choose from {KINDS}")
    x = lattice.x_blocks
    centres = rng.uniform(0.0, 1.0, size=4)
    xb = np.repeat(product_bump(x, centres), lattice.W)
    if kind == "bump":
        return 1.0 + 0.5 * _unit(xb)
    if lattice.reduced:
        raise ValueError("ω-dependent initial data needs N_ω > 1")
    fld = invariant_field(rng, bumps=2, sigma=0.25, trig_terms=1, max_mode=1)
    val = invariant_field_on_grid(fld.params, lattice.nx, lattice.nw, order=0)[0]
    nil = _unit(val.ravel())
    if kind == "nil":
        return 1.0 + 0.5 * nil
    return 1.0 + 0.5 * _unit(0.5 * (2 * xb - 1) + 0.5 * nil)
