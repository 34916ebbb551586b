"""Exact positive solutions of u_t = -Δ_b u for identity checks.

* Heisenberg chart: heat polynomials P(t) = Σ_k (-t)^k Δ_b^k p / k!, built
  symbolically; Δ_b lowers the weighted degree (x weight 1, ω weight 2) by
  two, so the series terminates.
* Sphere: restrictions of ambient polynomials that are Δ_b-eigenfunctions,
  namely linear functions (λ = 4) and trace-free quadratic forms p·Ap whose
  matrix lies in the Υ = 3 (λ = 16) or Υ = -1 (λ = 8) part.

Families follow the ``fn(base, p, t)`` convention of :mod:`qcheat.fields`.
"""

from __future__ import annotations

import functools
import itertools
import math

import jax.numpy as jnp
import numpy as np
import sympy as sp

from .models import SIGMA, Sphere7

HEAT_DEGREE = 4
BOX = 0.5  # chart points are drawn from [-BOX, BOX]^7
T_MAX = 0.1

SPHERE_EIGENVALUES = {"linear": 4.0, "upsilon3": 16.0, "upsilon-1": 8.0}


# ---------------------------------------------------------------------------
# symbolic side


def _symbols():
    x = sp.symbols("x1:5")
    w = sp.symbols("w1:4")
    return x, w, sp.Symbol("t")


def heisenberg_sublaplacian(expr, x, w):
    """Δ_b = -Σ_a E_a² with E_a = σ_a(∂_{x_a} + Σ_s c_as(x) ∂_{ω_s})."""
    q = sp.Quaternion(*x)
    out = 0
    for a in range(4):
        e = [0, 0, 0, 0]
        e[a] = 1
        im = q.conjugate() * sp.Quaternion(*e)
        c = [2 * im.b, 2 * im.c, 2 * im.d]

        def E(g):
            return int(SIGMA[a]) * (sp.diff(g, x[a]) + sum(c[s] * sp.diff(g, w[s]) for s in range(3)))

        out -= E(E(expr))
    return sp.expand(out)


def _basis_monomials(x, w, degree):
    mons = []
    for ew in itertools.product(range(degree // 2 + 1), repeat=3):
        rest = degree - 2 * sum(ew)
        if rest < 0:
            continue
        for ex in itertools.product(range(rest + 1), repeat=4):
            if 0 < sum(ex) + 2 * sum(ew) <= degree:
                mons.append(sp.Mul(*[v**k for v, k in zip(x + w, ex + ew)]))
    return mons


@functools.lru_cache(maxsize=None)
def heat_polynomial_basis(degree=HEAT_DEGREE):
    """Exponent table and coefficient matrix of the heat polynomials.

    Returns ``(exps, B)`` with ``exps`` of shape (m, 8) over (x, ω, t) and
    ``B[j]`` the coefficients of the heat polynomial started at the j-th basis
    monomial.
    """
    x, w, t = _symbols()
    gens = x + w + (t,)
    polys = []
    for mono in _basis_monomials(x, w, degree):
        term, total, k = mono, 0, 0
        while term != 0:
            total += (-t) ** k * term / math.factorial(k)
            term = heisenberg_sublaplacian(term, x, w)
            k += 1
        polys.append(sp.Poly(sp.expand(total), *gens))
    exps = sorted({m for p in polys for m in p.monoms()})
    index = {m: i for i, m in enumerate(exps)}
    B = np.zeros((len(polys), len(exps)))
    for j, p in enumerate(polys):
        for m, c in zip(p.monoms(), p.coeffs()):
            B[j, index[m]] = float(c)
    return np.array(exps, dtype=np.int64), B


def _monomials(v, exps, degree):
    # powers[i, d] = v_i^d by repeated multiplication (smooth at v_i = 0)
    pw = [jnp.ones_like(v)]
    for _ in range(degree):
        pw.append(pw[-1] * v)
    pw = jnp.stack(pw, axis=-1)
    return jnp.prod(pw[jnp.arange(v.shape[0]), exps], axis=-1)


def heat_polynomial_fn(base, p, t):
    """u = C + Σ_m coef_m x^α ω^β t^k."""
    v = jnp.concatenate([p[:7], jnp.atleast_1d(t)])
    return base["C"] + jnp.sum(base["coef"] * _monomials(v, base["exps"], HEAT_DEGREE))


def random_heat_polynomials(rng, count, degree=HEAT_DEGREE, margin=0.5):
    """Batched parameters for ``heat_polynomial_fn``, positive on BOX⁷ × [0, T_MAX].

    The coefficients are scaled so that Σ|coef|·BOX^α·T_MAX^k = 1, which
    bounds |P| by 1; C = 1 + margin then gives u ≥ margin.
    """
    exps, B = heat_polynomial_basis(degree)
    c = rng.uniform(-1.0, 1.0, size=(count, B.shape[0]))
    coef = c @ B
    scale = (BOX ** exps[:, :7].sum(axis=1)) * (T_MAX ** exps[:, 7])
    coef /= (np.abs(coef) * scale).sum(axis=1, keepdims=True)
    return {
        "coef": jnp.asarray(coef),
        "exps": jnp.asarray(np.broadcast_to(exps, (count,) + exps.shape)),
        "C": jnp.asarray(np.full(count, 1.0 + margin)),
    }


# ---------------------------------------------------------------------------
# sphere eigenfunctions


def upsilon_split(A):
    """(A₃, A₋₁) with A₃ commuting with left multiplication by i, j, k."""
    L = Sphere7.mult
    A3 = (A - sum(L[s] @ A @ L[s] for s in range(3))) / 4.0
    return A3, A - A3


def sphere_heat_fn(base, p, t):
    lam = SPHERE_EIGENVALUES
    return (
        base["C"]
        + jnp.exp(-lam["linear"] * t) * (base["v"] @ p)
        + jnp.exp(-lam["upsilon3"] * t) * (p @ base["A3"] @ p)
        + jnp.exp(-lam["upsilon-1"] * t) * (p @ base["Am"] @ p)
    )


def random_sphere_solutions(rng, count, margin=0.5):
    vs, A3s, Ams, Cs = [], [], [], []
    for _ in range(count):
        v = rng.uniform(-1, 1, 8)
        A = rng.uniform(-1, 1, (8, 8))
        A = 0.5 * (A + A.T)
        A -= np.trace(A) / 8 * np.eye(8)
        A3, Am = upsilon_split(A)
        vs.append(v)
        A3s.append(A3)
        Ams.append(Am)
        Cs.append(np.linalg.norm(v) + np.linalg.norm(A3, 2) + np.linalg.norm(Am, 2) + margin)
    return {"v": jnp.asarray(np.array(vs)), "A3": jnp.asarray(np.array(A3s)), "Am": jnp.asarray(np.array(Ams)), "C": jnp.asarray(np.array(Cs))}


# ---------------------------------------------------------------------------
# per-model dispatch


def family(model):
    """``(fn, sampler)`` for the model's manufactured solutions."""
    if model.name == "qh-torus":
        return heat_polynomial_fn, random_heat_polynomials
    if model.name == "sphere7":
        return sphere_heat_fn, random_sphere_solutions
    raise ValueError(f"no manufactured solutions for {model.name!r}")


def sample_space_time(model, rng, count):
    """Points and times at which the families are positive."""
    if model.name == "qh-torus":
        pts = rng.uniform(-BOX, BOX, size=(count, 7))
    else:
        pts = model.sample_points(rng, count)
    return pts, rng.uniform(0.1 * T_MAX, T_MAX, size=count)
