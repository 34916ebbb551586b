"""Pure-numpy versions of the compiled lattice kernels (same signatures)."""

from __future__ import annotations

import numpy as np


def max_threads():
    return 1


def _omega_diff(u4, s, nw):
    ax = 1 + s
    return np.roll(u4, -1, axis=ax) - np.roll(u4, 1, axis=ax)


def _shifted_gather(u4, xnb, shift, nw):
    """u at (xnb[xb], k + shift[xb]) for every site."""
    k = np.arange(nw)
    i0 = (k[None, :, None, None] + shift[:, 0, None, None, None]) % nw
    i1 = (k[None, None, :, None] + shift[:, 1, None, None, None]) % nw
    i2 = (k[None, None, None, :] + shift[:, 2, None, None, None]) % nw
    return u4[xnb[:, None, None, None], i0, i1, i2]


def _derivative(u4, a, coef, xplus, xminus, splus, sminus, sigma, nw, hx, hw):
    up = _shifted_gather(u4, xplus[:, a], splus[:, a], nw)
    um = _shifted_gather(u4, xminus[:, a], sminus[:, a], nw)
    acc = sigma[a] * (0.5 / hx) * (up - um)
    for s in range(3):
        acc = acc + coef[:, a, s, None, None, None] * (0.5 / hw) * _omega_diff(u4, s, nw)
    return acc


def frame_derivatives(u, out, coef, xplus, xminus, splus, sminus, sigma, nw, hx, hw, threads):
    u4 = np.asarray(u).reshape(-1, nw, nw, nw)
    for a in range(4):
        out[a] = _derivative(u4, a, coef, xplus, xminus, splus, sminus, sigma, nw, hx, hw).ravel()


def divergence(v, out, coef, xplus, xminus, splus, sminus, sigma, nw, hx, hw, threads):
    acc = 0.0
    for a in range(4):
        v4 = np.asarray(v[a]).reshape(-1, nw, nw, nw)
        acc = acc + _derivative(v4, a, coef, xplus, xminus, splus, sminus, sigma, nw, hx, hw)
    out[:] = np.asarray(acc).ravel()


def vertical_derivatives(u, out, nxs, nw, scale, threads):
    u4 = np.asarray(u).reshape(nxs, nw, nw, nw)
    for s in range(3):
        out[s] = (0.5 * scale * nw * _omega_diff(u4, s, nw)).ravel()


def block_sums(x, block, threads):
    x = np.asarray(x)
    nb = -(-x.size // block)
    pad = np.zeros(nb * block)
    pad[: x.size] = x
    # cumsum runs left to right, matching the compiled sequential leaves
    return np.cumsum(pad.reshape(nb, block), axis=1)[:, -1].copy()
