"""Frame calculus for the Biquard connection.

Everything is expressed in the adapted frame ``E = (e_1..e_4, ξ_1..ξ_3)``
returned by the model.  Index conventions (capital letters run over all 7
directions, lower case over the 4 horizontal ones):

* ``G[A, B, C] = g(∇_{E_A} E_B, E_C)``
* ``c[A, B, C]`` are the components of ``[E_A, E_B]``
* ``T[A, B, C] = g(T(E_A, E_B), E_C)``
* ``R[A, B, C, D] = g(R(E_A, E_B) E_C, E_D)``
* ``hess[A, B] = ∇²f(E_A, E_B) = E_A E_B f - (∇_{E_A} E_B) f``
* ``third[A, B, C] = (∇_{E_A} ∇²f)(E_B, E_C)``

Derivatives are forward-mode automatic differentiation in float64.  The sub-
Laplacian is the positive operator ``Δ_b f = -Σ_a ∇²f(e_a, e_a)``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .models import STRUCTURE, DomainError

NH = 4
CYCLIC = ((0, 1, 2), (1, 2, 0), (2, 0, 1))
_J = jnp.asarray(STRUCTURE)


# ---------------------------------------------------------------------------
# connection and geometric tensors at one point (traceable)


def full_connection(model, p, gauge):
    """Connection table G (7, 7, 7) and sp(1) one-forms alpha_sp1 (3, 7)."""
    GH = model.connection_h(p, gauge)
    K = jnp.swapaxes(GH, 1, 2)  # K[A] acts on horizontal component vectors
    alpha_sp1 = 0.5 * jnp.einsum("acb,scb->sa", K, _J)
    G = jnp.zeros((7, 7, 7), dtype=GH.dtype).at[:, :NH, :NH].set(GH)
    for i, j, k in CYCLIC:
        G = G.at[:, NH + i, NH + k].set(-alpha_sp1[j])
        G = G.at[:, NH + i, NH + j].set(alpha_sp1[k])
    return G, alpha_sp1


def _brackets(model, p, gauge):
    frame = functools.partial(model.frame, gauge=gauge)
    F = frame(p)
    dF = jax.jacfwd(frame)(p)
    DE = jnp.einsum("bij,aj->abi", dF, F)
    return model.components(F, DE - jnp.swapaxes(DE, 0, 1))


def _torsion(model, p, gauge):
    G, _ = full_connection(model, p, gauge)
    return G - jnp.swapaxes(G, 0, 1) - _brackets(model, p, gauge)


def _covariant_d(G, F, dX):
    """E_D applied to a tensor whose chart jacobian is ``dX`` (last axis)."""
    return jnp.einsum("...j,dj->d...", dX, F)


def geometry_point(model, p, gauge):
    """All field-independent tensors at ``p`` as a dict of arrays."""
    F = model.frame(p, gauge)
    G, alpha_sp1 = full_connection(model, p, gauge)
    c = _brackets(model, p, gauge)
    T = G - jnp.swapaxes(G, 0, 1) - c

    conn = lambda q: full_connection(model, q, gauge)[0]  # noqa: E731
    dG = _covariant_d(G, F, jax.jacfwd(conn)(p))  # dG[A, B, C, D] = E_A G[B, C, D]
    R = (
        dG
        - jnp.swapaxes(dG, 0, 1)
        + jnp.einsum("bck,akd->abcd", G, G)
        - jnp.einsum("ack,bkd->abcd", G, G)
        - jnp.einsum("abk,kcd->abcd", c, G)
    )
    dT = _covariant_d(G, F, jax.jacfwd(lambda q: _torsion(model, q, gauge))(p))
    nabla_T = (
        dT
        - jnp.einsum("dak,kbc->dabc", G, T)
        - jnp.einsum("dbk,akc->dabc", G, T)
        - jnp.einsum("dck,abk->dabc", G, T)
    )
    alpha_fn = lambda q: full_connection(model, q, gauge)[1]  # noqa: E731
    d_alpha = _covariant_d(G, F, jax.jacfwd(alpha_fn)(p))  # E_A alpha_s(E_B) -> [A, s, B]

    eta = model.coframe(p)
    deta_chart = jax.jacfwd(model.coframe)(p)  # [s, i, j] = ∂_j η_s,i
    deta_chart = jnp.swapaxes(deta_chart, 1, 2) - deta_chart  # ∂_i η_j - ∂_j η_i
    return {
        "F": F,
        "G": G,
        "alpha_sp1": alpha_sp1,
        "d_alpha": d_alpha,
        "c": c,
        "T": T,
        "R": R,
        "nabla_T": nabla_T,
        "eta": F @ eta.T,  # eta[A, s] = η_s(E_A)
        "deta": jnp.einsum("sij,ai,bj->sab", deta_chart, F, F),
    }


def field_point(model, fn, params, p, gauge, order=3):
    """Covariant derivatives of ``fn(params, .)`` up to ``order`` (2 or 3) at ``p``."""
    frame = functools.partial(model.frame, gauge=gauge)
    conn = lambda q: full_connection(model, q, gauge)[0]  # noqa: E731
    grad = jax.grad(fn, argnums=1)

    def Ef(q):
        return frame(q) @ grad(params, q)

    def hess(q):
        raw = jax.jacfwd(Ef)(q) @ frame(q).T  # raw[B, A] = E_A E_B f
        return raw.T - conn(q) @ Ef(q)

    F = frame(p)
    G = conn(p)
    H = hess(p)
    if order < 3:
        return {"value": fn(params, p), "df": Ef(p), "hess": H}
    dH = _covariant_d(G, F, jax.jacfwd(hess)(p))
    third = dH - jnp.einsum("abk,kc->abc", G, H) - jnp.einsum("ack,bk->abc", G, H)
    return {"value": fn(params, p), "df": Ef(p), "hess": H, "third": third}


# ---------------------------------------------------------------------------
# batched, compiled evaluation


@functools.lru_cache(maxsize=None)
def _geometry_batch(model):
    return jax.jit(jax.vmap(functools.partial(geometry_point, model)))


@functools.lru_cache(maxsize=None)
def _field_batch(model, fn, batched_params, order=3):
    axes = (0 if batched_params else None, 0, 0)
    return jax.jit(jax.vmap(functools.partial(field_point, model, fn, order=order), in_axes=axes))


def _prepare(model, points):
    points = model.check_point(np.atleast_2d(np.asarray(points, dtype=float)))
    gauges = np.stack([model.gauge(p) for p in points])
    return points, gauges


GEOMETRY_CHUNK = 1024


def geometry_batch(model, points):
    """:func:`geometry_point` over an array of points, numpy output.

    Large batches run in fixed-size padded chunks, which bounds memory and
    reuses one compiled kernel.
    """
    points, gauges = _prepare(model, points)
    fn = _geometry_batch(model)
    count = len(points)
    if count <= GEOMETRY_CHUNK:
        out = fn(jnp.asarray(points), jnp.asarray(gauges))
        return {k: np.asarray(v) for k, v in out.items()}
    parts = []
    for a in range(0, count, GEOMETRY_CHUNK):
        idx = np.minimum(np.arange(a, a + GEOMETRY_CHUNK), count - 1)
        out = fn(jnp.asarray(points[idx]), jnp.asarray(gauges[idx]))
        parts.append({k: np.asarray(v)[: min(GEOMETRY_CHUNK, count - a)] for k, v in out.items()})
    return {k: np.concatenate([q[k] for q in parts]) for k in parts[0]}


def field_batch(model, field, points, batched_params=False, order=3):
    """:func:`field_point` over points; ``field.params`` may carry a batch axis."""
    points, gauges = _prepare(model, points)
    fn = _field_batch(model, field.fn, batched_params, order)
    out = fn(field.params, jnp.asarray(points), jnp.asarray(gauges))
    return {k: np.asarray(v) for k, v in out.items()}


# ---------------------------------------------------------------------------
# algebra on horizontal tensors


def omega_matrices():
    """ω_s(e_a, e_b) = g(I_s e_a, e_b) as a (3, 4, 4) array."""
    return np.transpose(STRUCTURE, (0, 2, 1)).copy()


def casimir_project(T, frame=None):
    """Split a horizontal 2-tensor into its Υ = 3 and Υ = -1 parts.

    Returns ``(t3, tm1, tm1_sym, tm1_alt)``; the alternating part of a
    Hessian lives entirely in the [-1] component.
    """
    J = STRUCTURE if frame is None else np.asarray(frame.structure)
    T = np.asarray(T, dtype=float)
    # Υ(T) = Σ_s J_sᵀ T J_s is linear in the 16 entries: one (16, 16) matmul
    M = np.einsum("sca,sdb->abcd", J, J).reshape(16, 16)
    ups = (T.reshape(T.shape[:-2] + (16,)) @ M.T).reshape(T.shape)
    t3 = (T + ups) / 4.0
    tm1 = (3.0 * T - ups) / 4.0
    tm1_sym = 0.5 * (tm1 + np.swapaxes(tm1, -1, -2))
    return t3, tm1, tm1_sym, tm1 - tm1_sym


def sq_norm(T):
    return np.einsum("...ab,...ab->...", T, T)


# ---------------------------------------------------------------------------
# derived geometric quantities from a geometry dict (numpy, batched)


@dataclass
class Curvature:
    Ric: np.ndarray  # (..., 4, 4)
    S: np.ndarray  # (...)
    rho: np.ndarray  # (..., 3, 7, 7)
    tau: np.ndarray  # (..., 3, 7, 7)
    R_vert: np.ndarray  # (..., 7, 7, 3, 3) = R(A, B, ξ_i, ξ_j)
    Ric_full: np.ndarray  # (..., 7, 7)


def curvature_from(geo, n=1):
    R = geo["R"]
    h = slice(0, NH)
    Ric_full = np.einsum("...bABb->...AB", R[..., h, :, :, h])
    scal = np.einsum("...baab->...", R[..., h, h, h, h])
    S = scal / (8 * n * (n + 2))
    # Σ_a R(A, B, e_a, I_s e_a) with I_s e_a = Σ_c J_s[c, a] e_c
    rho = np.einsum("sca,...ABac->...sAB", STRUCTURE, R[..., :, :, h, h]) / (4 * n)
    tau = np.einsum("sca,...acAB->...sAB", STRUCTURE, R[..., h, h, :, :]) / (4 * n)
    return Curvature(
        Ric=Ric_full[..., h, h],
        S=S,
        rho=rho,
        tau=tau,
        R_vert=R[..., NH:, NH:],
        Ric_full=Ric_full,
    )


def torsion_from(geo, n=1):
    """(T0, U, Txi) with Txi[s, b, c] = T(ξ_s, e_b, e_c)."""
    T = geo["T"]
    Txi = T[..., NH:, :NH, :NH]
    sym = 0.5 * (Txi + np.swapaxes(Txi, -1, -2))
    skew = Txi - sym
    # as endomorphisms: (T_ξ v)_c = Σ_b Txi[b, c] v_b, matrix M[c, b] = Txi[b, c]
    # T0(X, Y) = Σ_s g(T0_ξs I_s X, Y)
    T0 = np.einsum("...sbc,sba->...ac", sym, STRUCTURE)
    # b_ξi = I_i u  =>  u = -I_i b_ξi, averaged over i
    b_end = np.swapaxes(skew, -1, -2)
    u_end = -np.einsum("scd,...sde->...ce", STRUCTURE, b_end) / 3.0
    U = np.swapaxes(u_end, -1, -2)
    return T0, U, Txi


def positivity_margin_from(curv, T0, U, k, n=1):
    M = 2 * (n + 2) * curv.S[..., None, None] * np.eye(NH) + 2 * n * T0 + 4 * (n + 4) * U + k * np.eye(NH)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    return np.linalg.eigvalsh(M)[..., 0]


def vertical_gradient(jet):
    return jet["df"][..., NH:]


def horizontal_gradient(jet):
    return jet["df"][..., :NH]


def sublaplacian_from(jet):
    return -np.einsum("...aa->...", jet["hess"][..., :NH, :NH])


def third_contraction_from(jet):
    """Σ_a (∇³f)(e_a, e_a, ξ_s)."""
    th = jet["third"]
    return np.einsum("...aas->...s", th[..., :NH, :NH, NH:])


def v_operator_from(geo, jet):
    """V(f) built from torsion, its derivative and the mixed Ricci tensor."""
    T = geo["T"]
    nT = geo["nabla_T"]
    hg = horizontal_gradient(jet)
    vg = vertical_gradient(jet)
    Ric_full = curvature_from(geo).Ric_full
    term1 = 2 * np.einsum("...s,...b,...c,...sbc->...", vg, hg, hg, T[..., NH:, :NH, :NH])
    term2 = 2 * np.einsum("...s,...sab,...ab->...", vg, T[..., NH:, :NH, :NH], jet["hess"][..., :NH, :NH])
    term3 = -np.einsum("...aasb,...s,...b->...", nT[..., :NH, :NH, NH:, :NH], vg, hg)
    term4 = np.einsum("...s,...b,...sb->...", vg, hg, Ric_full[..., NH:, :NH])
    return term1 + term2 + term3 + term4


def commut_residual_from(jet):
    """(∇³u)(e_a, e_a, ∇_v u) + ∇_v u(Δ_b u)."""
    vg = vertical_gradient(jet)
    lhs = np.einsum("...s,...s->...", vg, third_contraction_from(jet))
    # ξ_s(Δ_b u) = -Σ_a ∇³u(ξ_s, e_a, e_a)
    xi_lap = -np.einsum("...saa->...s", jet["third"][..., NH:, :NH, :NH])
    return lhs + np.einsum("...s,...s->...", vg, xi_lap)


# ---------------------------------------------------------------------------
# public pointwise operations


@dataclass
class Frame:
    horizontal: np.ndarray  # (4, chart_dim)
    vertical: np.ndarray  # (3, chart_dim)
    structure: np.ndarray  # (3, 4, 4)


def _one(model, p):
    p = model.check_point(np.asarray(p, dtype=float))
    if p.ndim != 1:
        raise DomainError("expected a single point")
    return p


def _geo1(model, p):
    geo = geometry_batch(model, _one(model, p)[None])
    return {k: v[0] for k, v in geo.items()}


def _jet1(model, field, p):
    jet = field_batch(model, field, _one(model, p)[None])
    return {k: v[0] for k, v in jet.items()}


def adapted_frame(model, p):
    p = _one(model, p)
    F = np.asarray(model.frame(jnp.asarray(p), jnp.asarray(model.gauge(p))))
    return Frame(horizontal=F[:NH], vertical=F[NH:], structure=STRUCTURE.copy())


def grad(field, model, p):
    jet = _jet1(model, field, p)
    return horizontal_gradient(jet), vertical_gradient(jet)


def hessian(field, model, p):
    H = _jet1(model, field, p)["hess"]
    return H[:NH, :NH], H[NH:, :NH], H[:NH, NH:]


def sublaplacian(field, model, p):
    return float(sublaplacian_from(_jet1(model, field, p)))


def third_contraction(field, model, p):
    return third_contraction_from(_jet1(model, field, p))


def torsion_tensors(model, p):
    return torsion_from(_geo1(model, p), model.n)


def curvature(model, p):
    return curvature_from(_geo1(model, p), model.n)


def positivity_margin(model, p, k):
    if k < 0:
        raise DomainError("k must be non-negative")
    geo = _geo1(model, p)
    T0, U, _ = torsion_from(geo, model.n)
    return float(positivity_margin_from(curvature_from(geo, model.n), T0, U, k, model.n))


def v_operator(model, field, p):
    return float(v_operator_from(_geo1(model, p), _jet1(model, field, p)))


def commut_residual(model, field, p):
    jet = _jet1(model, field, p)
    if not jet["value"] > 0:
        raise DomainError("commut_residual needs a positive field")
    return float(commut_residual_from(jet))


def covariant_derivative(model, p, A, B):
    """∇_A B for a chart vector A at p and a vector field ``B(q)``."""
    p = _one(model, p)
    gauge = jnp.asarray(model.gauge(p))
    pj = jnp.asarray(p)
    F = model.frame(pj, gauge)
    G, _ = full_connection(model, pj, gauge)

    def comps(q):
        return model.components(model.frame(q, gauge), B(q))

    b = comps(pj)
    a = model.components(F, jnp.asarray(A, dtype=float))
    db = jax.jvp(comps, (pj,), (jnp.asarray(A, dtype=float),))[1]
    out = db + jnp.einsum("i,j,ijk->k", a, b, G)
    return np.asarray(out @ F)
