# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled lattice kernels for the Heisenberg torus.

Sites are stored as ``u[xb * W + k]`` with ``xb`` the flattened x-block
(N_x⁴ sites) and ``k`` the flattened ω-index (W = N_ω³).  Every kernel writes
each output site independently, so results do not depend on the thread count.
"""

from cython.parallel cimport prange
cimport openmp

import numpy as np
cimport numpy as cnp

cnp.import_array()


def max_threads():
    return openmp.omp_get_max_threads()


cdef inline Py_ssize_t _wrap(Py_ssize_t k, Py_ssize_t n) nogil:
    k = k % n
    if k < 0:
        k += n
    return k


cdef inline void _d_block(const double* u, double* out, Py_ssize_t base, Py_ssize_t pb,
                          Py_ssize_t mb, const Py_ssize_t* sp, const Py_ssize_t* sm,
                          double cxa, double c0, double c1, double c2,
                          const Py_ssize_t* nxt, const Py_ssize_t* prv,
                          const Py_ssize_t* add, Py_ssize_t nw, bint accumulate) noexcept nogil:
    """One x-block of D_a: out[base + k] (+)= σ_a δ_x u + Σ_s c_s δ_{ω_s} u."""
    cdef Py_ssize_t k0, k1, k2, r0, r1, p0, p1, m0, m1, k, kp, km, n0p, n0m, n1p, n1m
    cdef Py_ssize_t nw2 = nw * nw
    cdef const Py_ssize_t* ap2 = add + sp[2] * nw
    cdef const Py_ssize_t* am2 = add + sm[2] * nw
    cdef double acc
    for k0 in range(nw):
        r0 = k0 * nw2
        p0 = add[sp[0] * nw + k0] * nw2
        m0 = add[sm[0] * nw + k0] * nw2
        n0p = nxt[k0] * nw2
        n0m = prv[k0] * nw2
        for k1 in range(nw):
            r1 = r0 + k1 * nw
            p1 = p0 + add[sp[1] * nw + k1] * nw
            m1 = m0 + add[sm[1] * nw + k1] * nw
            n1p = r0 + nxt[k1] * nw
            n1m = r0 + prv[k1] * nw
            for k2 in range(nw):
                k = r1 + k2
                kp = p1 + ap2[k2]
                km = m1 + am2[k2]
                acc = cxa * (u[pb + kp] - u[mb + km])
                acc = acc + c0 * (u[base + n0p + k1 * nw + k2] - u[base + n0m + k1 * nw + k2])
                acc = acc + c1 * (u[base + n1p + k2] - u[base + n1m + k2])
                acc = acc + c2 * (u[base + r1 + nxt[k2]] - u[base + r1 + prv[k2]])
                if accumulate:
                    out[base + k] += acc
                else:
                    out[base + k] = acc


def _tables(Py_ssize_t nw):
    k = np.arange(nw, dtype=np.intp)
    nxt = np.ascontiguousarray((k + 1) % nw)
    prv = np.ascontiguousarray((k - 1) % nw)
    add = np.ascontiguousarray(((k[:, None] + k[None, :]) % nw).ravel())
    return nxt, prv, add


def frame_derivatives(const double[::1] u, double[:, ::1] out,
                      const double[:, :, ::1] coef, const Py_ssize_t[:, ::1] xplus,
                      const Py_ssize_t[:, ::1] xminus, const Py_ssize_t[:, :, ::1] splus,
                      const Py_ssize_t[:, :, ::1] sminus, const double[::1] sigma,
                      Py_ssize_t nw, double hx, double hw, int threads):
    """out[a] = σ_a δ_{x_a} u + Σ_s coef[xb, a, s] δ_{ω_s} u (centered)."""
    cdef Py_ssize_t nxs = coef.shape[0]
    cdef Py_ssize_t W = nw * nw * nw
    cdef Py_ssize_t xb, a
    cdef double cx = 0.5 / hx
    cdef double cw = 0.5 / hw
    nxt_a, prv_a, add_a = _tables(nw)
    cdef const Py_ssize_t[::1] nxt = nxt_a
    cdef const Py_ssize_t[::1] prv = prv_a
    cdef const Py_ssize_t[::1] add = add_a
    if nw == 1:
        # ω-independent lattice: only the x-differences survive
        for xb in prange(nxs, nogil=True, num_threads=threads, schedule="static"):
            for a in range(4):
                out[a, xb] = sigma[a] * cx * (u[xplus[xb, a]] - u[xminus[xb, a]])
        return
    for xb in prange(nxs, nogil=True, num_threads=threads, schedule="static"):
        for a in range(4):
            _d_block(&u[0], &out[a, 0], xb * W, xplus[xb, a] * W, xminus[xb, a] * W,
                     &splus[xb, a, 0], &sminus[xb, a, 0], sigma[a] * cx,
                     coef[xb, a, 0] * cw, coef[xb, a, 1] * cw, coef[xb, a, 2] * cw,
                     &nxt[0], &prv[0], &add[0], nw, False)


def divergence(const double[:, ::1] v, double[::1] out,
               const double[:, :, ::1] coef, const Py_ssize_t[:, ::1] xplus,
               const Py_ssize_t[:, ::1] xminus, const Py_ssize_t[:, :, ::1] splus,
               const Py_ssize_t[:, :, ::1] sminus, const double[::1] sigma,
               Py_ssize_t nw, double hx, double hw, int threads):
    """out = Σ_a D_a v[a]; with v = D u this gives -Δ_b u."""
    cdef Py_ssize_t nxs = coef.shape[0]
    cdef Py_ssize_t W = nw * nw * nw
    cdef Py_ssize_t xb, a, k
    cdef double cx = 0.5 / hx
    cdef double cw = 0.5 / hw
    nxt_a, prv_a, add_a = _tables(nw)
    cdef const Py_ssize_t[::1] nxt = nxt_a
    cdef const Py_ssize_t[::1] prv = prv_a
    cdef const Py_ssize_t[::1] add = add_a
    cdef double acc
    if nw == 1:
        for xb in prange(nxs, nogil=True, num_threads=threads, schedule="static"):
            acc = 0.0
            for a in range(4):
                acc = acc + sigma[a] * cx * (v[a, xplus[xb, a]] - v[a, xminus[xb, a]])
            out[xb] = acc
        return
    for xb in prange(nxs, nogil=True, num_threads=threads, schedule="static"):
        for k in range(W):
            out[xb * W + k] = 0.0
        for a in range(4):
            _d_block(&v[a, 0], &out[0], xb * W, xplus[xb, a] * W, xminus[xb, a] * W,
                     &splus[xb, a, 0], &sminus[xb, a, 0], sigma[a] * cx,
                     coef[xb, a, 0] * cw, coef[xb, a, 1] * cw, coef[xb, a, 2] * cw,
                     &nxt[0], &prv[0], &add[0], nw, True)


def vertical_derivatives(const double[::1] u, double[:, ::1] out, Py_ssize_t nxs,
                         Py_ssize_t nw, double scale, int threads):
    """out[s] = scale · δ_{ω_s} u (centered); scale = 2 gives ξ_s = 2∂_{ω_s}."""
    cdef Py_ssize_t W = nw * nw * nw
    cdef Py_ssize_t xb, k0, k1, k2, k, base
    cdef double c = 0.5 * scale * nw
    for xb in prange(nxs, nogil=True, num_threads=threads, schedule="static"):
        base = xb * W
        for k0 in range(nw):
            for k1 in range(nw):
                for k2 in range(nw):
                    k = base + (k0 * nw + k1) * nw + k2
                    out[0, k] = c * (u[base + (_wrap(k0 + 1, nw) * nw + k1) * nw + k2] - u[base + (_wrap(k0 - 1, nw) * nw + k1) * nw + k2])
                    out[1, k] = c * (u[base + (k0 * nw + _wrap(k1 + 1, nw)) * nw + k2] - u[base + (k0 * nw + _wrap(k1 - 1, nw)) * nw + k2])
                    out[2, k] = c * (u[base + (k0 * nw + k1) * nw + _wrap(k2 + 1, nw)] - u[base + (k0 * nw + k1) * nw + _wrap(k2 - 1, nw)])


def block_sums(const double[::1] x, Py_ssize_t block, int threads):
    """Sequential sums of consecutive blocks (the leaves of the reduction tree)."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nb = (n + block - 1) // block
    cdef Py_ssize_t b, i, stop
    cdef double acc
    out = np.zeros(nb)
    cdef double[::1] o = out
    for b in prange(nb, nogil=True, num_threads=threads, schedule="static"):
        acc = 0.0
        stop = (b + 1) * block
        if stop > n:
            stop = n
        for i in range(b * block, stop):
            acc = acc + x[i]
        o[b] = acc
    return out
