"""Scalar fields with exact derivatives.

A field is a pure JAX function ``fn(params, p) -> scalar`` plus its
parameters.  Keeping the function separate from the parameters lets one
compiled derivative kernel serve a whole batch of random fields.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field

import jax
import jax.numpy as jnp
import numpy as np

from .models import twist


@dataclass(frozen=True)
class AnalyticField:
    fn: object
    params: object = dc_field(default=None, compare=False)
    name: str = "field"

    def __call__(self, p):
        return float(self.fn(self.params, jnp.asarray(p, dtype=float)))

    def partials(self, p, order=3):
        """Coordinate partial derivatives up to ``order`` at ``p``."""
        p = jnp.asarray(p, dtype=float)
        f = lambda q: self.fn(self.params, q)  # noqa: E731
        out = [f(p)]
        g = f
        for _ in range(order):
            g = jax.jacfwd(g)
            out.append(g(p))
        return [np.asarray(o) for o in out]

    def directional(self, p, dirs):
        """Iterated directional derivative along the chart vectors ``dirs``."""
        f = lambda q: self.fn(self.params, q)  # noqa: E731
        for v in reversed(list(dirs)):
            f = (lambda g, w: lambda q: jax.jvp(g, (q,), (jnp.asarray(w, dtype=float),))[1])(f, v)
        return float(f(jnp.asarray(p, dtype=float)))

    def with_params(self, params):
        return AnalyticField(self.fn, params, self.name)


# ---------------------------------------------------------------------------
# elementary families


def _const_fn(params, p):
    return params + 0.0 * p[0]


def constant(value):
    return AnalyticField(_const_fn, jnp.asarray(float(value)), "constant")


def _trig_fn(params, p):
    amp, k, phase = params["amp"], params["k"], params["phase"]
    return jnp.sum(amp * jnp.cos(k @ p + phase)) + params["offset"]


def trig_polynomial(rng, chart_dim, terms=4, max_mode=2, freq=2 * np.pi, batch=None, offset=0.0, mask=None, active=None):
    """Random Σ a_m cos(freq k_m·p + φ_m) with |k_m,i| ≤ max_mode, a_m ∈ [-1, 1].

    ``mask`` zeroes chosen coordinates of every wave vector; ``active`` keeps
    only that many randomly chosen coordinates per wave vector, which bounds
    the size of high derivatives.  With ``batch`` the parameters carry a
    leading batch axis.
    """
    shape = () if batch is None else (batch,)
    k = rng.integers(-max_mode, max_mode + 1, size=shape + (terms, chart_dim)).astype(float)
    if mask is not None:
        k = k * np.asarray(mask, dtype=float)
    if active is not None:
        keys = rng.random(shape + (terms, chart_dim))
        k = np.where(np.argsort(np.argsort(keys, axis=-1), axis=-1) < active, k, 0.0)
    params = {
        "amp": jnp.asarray(rng.uniform(-1.0, 1.0, size=shape + (terms,))),
        "k": jnp.asarray(freq * k),
        "phase": jnp.asarray(rng.uniform(0.0, 2 * np.pi, size=shape + (terms,))),
        "offset": jnp.asarray(np.full(shape, float(offset))),
    }
    return AnalyticField(_trig_fn, params, "trig")


def positive_trig_polynomial(rng, chart_dim, terms=4, max_mode=2, freq=2 * np.pi, batch=None, margin=0.5, active=None):
    """Trig polynomial shifted by Σ|a_m| + margin, hence positive everywhere."""
    fld = trig_polynomial(rng, chart_dim, terms, max_mode, freq, batch, active=active)
    params = dict(fld.params)
    params["offset"] = jnp.sum(jnp.abs(params["amp"]), axis=-1) + margin
    return AnalyticField(_trig_fn, params, "positive-trig")


def _log_of(fn):
    def log_fn(params, p):
        return jnp.log(fn(params, p))

    return log_fn


_LOG_CACHE = {}


def log_field(fld):
    """f = ln u."""
    fn = _LOG_CACHE.setdefault(fld.fn, _log_of(fld.fn))
    return AnalyticField(fn, fld.params, f"log({fld.name})")


# ---------------------------------------------------------------------------
# Γ-invariant bumps on the Heisenberg nilmanifold

NIL_RANGE = 2
_OFFSETS = np.array(list(itertools.product(range(-NIL_RANGE, NIL_RANGE + 1), repeat=4)), dtype=float)


def _nil_fn(params, p):
    """amp·Σ_m ψ(q + m) cos(2π k·(ω + 2 Im(m̄ q)) + φ), ψ Gaussian of width σ.

    Summing a function over the left Γ-orbit makes it Γ-invariant; the sum is
    truncated to |m_a| ≤ 2, which is exact to ~1e-20 for σ ≤ 0.25 and bump
    centres in [0, 1)⁴ when q lies in the fundamental domain.
    """
    q, w = p[:4], p[4:]
    m = jnp.asarray(_OFFSETS)
    d = q[None, :] + m - params["q0"]
    gauss = jnp.exp(-jnp.sum(d * d, axis=1) / (2 * params["sigma"] ** 2))
    shift = twist(m, jnp.broadcast_to(q, m.shape))
    phase = 2 * jnp.pi * ((w[None, :] + shift) @ params["kw"]) + params["phase"]
    return params["amp"] * jnp.sum(gauss * jnp.cos(phase))


def _nil_sum_fn(params, p):
    x_part = _trig_fn(params["trig"], p)
    bumps = jax.vmap(lambda b: _nil_fn(b, p))(params["bumps"])
    return x_part + jnp.sum(bumps)


def invariant_field(rng, bumps=2, sigma=0.25, trig_terms=3, max_mode=1, batch=None):
    """Random smooth function on Γ\\G: an x-only trig polynomial plus bumps.

    The x-only part is periodic in q and constant along ω; each bump carries a
    nonzero ω-frequency k ∈ {-1, 0, 1}³.
    """
    shape = () if batch is None else (batch,)
    mask = np.r_[np.ones(4), np.zeros(3)]
    trig = trig_polynomial(rng, 7, trig_terms, max_mode, 2 * np.pi, batch, mask=mask).params
    kw = rng.integers(-1, 2, size=shape + (bumps, 3)).astype(float)
    zero = np.all(kw == 0, axis=-1)
    kw[zero, 0] = 1.0
    params = {
        "trig": trig,
        "bumps": {
            "q0": jnp.asarray(rng.uniform(0.3, 0.7, size=shape + (bumps, 4))),
            "sigma": jnp.asarray(np.full(shape + (bumps,), sigma)),
            "kw": jnp.asarray(kw),
            "phase": jnp.asarray(rng.uniform(0, 2 * np.pi, size=shape + (bumps,))),
            "amp": jnp.asarray(rng.uniform(-1, 1, size=shape + (bumps,))),
        },
    }
    return AnalyticField(_nil_sum_fn, params, "invariant")


# ---------------------------------------------------------------------------
# time-dependent families


def time_slice(fn):
    """Wrap ``fn(params, p, t)`` as a field in p with ``params = (base, t)``."""

    def sliced(params, p):
        base, t = params
        return fn(base, p, t)

    return sliced


_DT_CACHE = {}


def time_derivative(fn):
    """∂/∂t of a ``fn(base, p, t)`` family, as a family of the same kind."""
    if fn not in _DT_CACHE:
        _DT_CACHE[fn] = jax.jacfwd(fn, argnums=2)
    return _DT_CACHE[fn]


# ---------------------------------------------------------------------------
# invariant fields on the lattice (tensor-product grid, closed form)


def _axis_orders():
    combos = [()]
    combos += [(a,) for a in range(7)]
    combos += [(a, b) for a in range(7) for b in range(a, 7)]
    return combos


def invariant_field_on_grid(params, nx, nw, order=2, w1=None):
    """Value, gradient and Hessian of :func:`invariant_field` on the lattice.

    ``w1`` restricts the ω₁ nodes (default: all ``nw`` of them), which lets
    callers process the grid in slices.  Returns arrays of shape
    ``(nx,)*4 + (len(w1), nw, nw)``, ``(7, ...)`` and
    ``(7, 7, ...)`` holding coordinate partials (``order`` < 2 leaves the
    higher ones as ``None``).  Every Gaussian-times-phase
    term factorizes over the x-axes, so sums over lattice offsets reduce to
    small one-dimensional tables and einsum contractions.
    """
    x = np.arange(nx) / nx
    w = np.arange(nw) / nw
    w1 = w if w1 is None else np.atleast_1d(np.asarray(w1, dtype=float))
    shape = (nx,) * 4 + (len(w1), nw, nw)
    val = np.zeros(shape)
    grad = np.zeros((7,) + shape) if order >= 1 else None
    hess = np.zeros((7, 7) + shape) if order >= 2 else None

    trig = {k: np.asarray(v) for k, v in params["trig"].items()}
    xs = np.meshgrid(x, x, x, x, indexing="ij")
    for amp, kv, ph in zip(trig["amp"], trig["k"], trig["phase"]):
        arg = sum(kv[a] * xs[a] for a in range(4)) + ph
        c, s = np.cos(arg)[..., None, None, None], np.sin(arg)[..., None, None, None]
        val += amp * c
        for a in range(4 if order >= 1 else 0):
            grad[a] += -amp * kv[a] * s
            for b in range(4 if order >= 2 else 0):
                hess[a, b] += -amp * kv[a] * kv[b] * c
    val += float(trig["offset"])

    bumps = {k: np.asarray(v) for k, v in params["bumps"].items()}
    m = _OFFSETS
    for i in range(bumps["amp"].shape[0]):
        q0, sig, kw = bumps["q0"][i], float(bumps["sigma"][i]), bumps["kw"][i]
        kappa = np.r_[0.0, kw]
        mk = quat_mul_np(m, np.broadcast_to(kappa, m.shape))  # (M, 4)
        d = x[None, None, :] + m[:, :, None] - q0[None, :, None]  # (M, 4, nx)
        lin = -d / sig**2 + 4j * np.pi * mk[:, :, None] * 1.0
        g0 = np.exp(-(d**2) / (2 * sig**2) + 4j * np.pi * mk[:, :, None] * x[None, None, :])
        tables = [g0, lin * g0, (lin**2 - 1.0 / sig**2) * g0]

        def xpart(orders):
            ops = [tables[orders.count(a)][:, a, :] for a in range(4)]
            left = (ops[0][:, :, None] * ops[1][:, None, :]).reshape(len(m), -1)
            right = (ops[2][:, :, None] * ops[3][:, None, :]).reshape(len(m), -1)
            return (left.T @ right).reshape((nx,) * 4)

        ww = np.meshgrid(w1, w, w, indexing="ij")
        wave = np.exp(2j * np.pi * sum(kw[s] * ww[s] for s in range(3)))
        coef = bumps["amp"][i] * np.exp(1j * bumps["phase"][i])
        kfac = 2j * np.pi * kw
        cache = {}
        for orders in _axis_orders():
            if len(orders) > order:
                continue
            xo = tuple(a for a in orders if a < 4)
            wfac = np.prod([kfac[a - 4] for a in orders if a >= 4]) if any(a >= 4 for a in orders) else 1.0
            if xo not in cache:
                cache[xo] = xpart(xo)
            term = np.real(coef * wfac * cache[xo][..., None, None, None] * wave)
            if len(orders) == 0:
                val += term
            elif len(orders) == 1:
                grad[orders[0]] += term
            else:
                a, b = orders
                hess[a, b] += term
                if a != b:
                    hess[b, a] += term
    return val, grad, hess


def quat_mul_np(a, b):
    a0, a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    b0, b1, b2, b3 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ],
        axis=-1,
    )
