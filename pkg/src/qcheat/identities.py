"""Registry of numerical checks for the qc identities and inequalities.

Each check draws seeded random (point, field) samples for one model,
evaluates both sides of an identity (or the margin of an inequality) and
reports the worst case.  Pointwise checks use exact AD derivatives.  The two
integral checks integrate over the Heisenberg torus lattice (spectrally
accurate for the smooth periodic fields used) or by Monte Carlo on the sphere.
"""

from __future__ import annotations

import functools
import io
import zlib
from dataclasses import dataclass, field as dc_field

import jax
import jax.numpy as jnp
import numpy as np

from . import fields as fl
from . import kernels, manufactured
from .geometry import (
    GEOMETRY_CHUNK,
    NH,
    casimir_project,
    curvature_from,
    field_batch,
    geometry_batch,
    omega_matrices,
    sq_norm,
    sublaplacian_from,
    torsion_from,
    v_operator_from,
    commut_residual_from,
)
from .models import SIGMA, STRUCTURE, Sphere7, get_model, heisenberg_coeffs, qh_frame_coeffs

J = STRUCTURE
OM = omega_matrices()  # OM[s, a, b] = ω_s(e_a, e_b)
CYC = ((0, 1, 2), (1, 2, 0), (2, 0, 1))
NU_VALUES = (0.1, 1.0, 10.0)

MC_POINTS = 1_000_000
MC_SIGMAS = 5.0
INTEGRAL_FIELDS = {"qh-torus": 3, "sphere7": 3}
QUAD_GRID = (14, 3)
# random fields: 3 cosine modes, each wave vector with 3 nonzero entries in
# {-1, 1}·2π, so third derivatives stay below 3·(2π√3)³ ≈ 4e3
FIELD_TERMS = 3
FIELD_ACTIVE = 3

DEFAULT_TOL = {"qh-torus": 1e-9, "sphere7": 1e-6}


class UnknownCheck(KeyError):
    pass


class UnsupportedCheck(ValueError):
    pass


@dataclass
class CheckReport:
    check_id: str
    model: str
    kind: str  # "identity" or "inequality"
    samples: int
    value: float  # max residual, or worst margin for inequalities
    tolerance: float
    passed: bool
    witness_point: tuple = ()
    witness_sample: int = -1
    seed: int = 0
    detail: dict = dc_field(default_factory=dict)

    def verdict(self):
        what = "max_residual" if self.kind == "identity" else "worst_margin"
        status = "PASS" if self.passed else "FAIL"
        return f"{self.check_id:<17} {self.model:<9} {status}  {what}={self.value:.3e} tol={self.tolerance:.1e} samples={self.samples}"


@dataclass(frozen=True)
class _Check:
    kind: str
    fn: object
    doc: str


REGISTRY = {}


def register(check_id, kind="identity"):
    def deco(fn):
        REGISTRY[check_id] = _Check(kind, fn, (fn.__doc__ or "").strip().splitlines()[0])
        return fn

    return deco


def check_ids():
    return list(REGISTRY)


# ---------------------------------------------------------------------------
# small tensor helpers (batched over the leading axis)


def _iv(s, v):
    """Components of I_s v for horizontal frame components v (..., 4)."""
    return np.einsum("cb,...b->...c", J[s], v)


def _jt_m(s, M):
    """Matrix of (X, Y) ↦ M(I_s X, Y)."""
    return np.einsum("ca,...cb->...ab", J[s], M)


def _m_j(s, M):
    """Matrix of (X, Y) ↦ M(X, I_s Y)."""
    return np.einsum("...ac,cb->...ab", M, J[s])


def _conj(s, M):
    """Matrix of (X, Y) ↦ M(I_s X, I_s Y)."""
    return _m_j(s, _jt_m(s, M))


def _absmax(*arrs):
    """Per-sample max |.| over any number of (n, ...) arrays."""
    return np.max(np.stack([np.max(np.abs(a.reshape(a.shape[0], -1)), axis=1) for a in arrs]), axis=0)


# ---------------------------------------------------------------------------
# sampling


class _Ctx:
    def __init__(self, model, n, seed, check_id):
        self.model = model
        self.n = int(n)
        self.seed = int(seed)
        key = zlib.crc32(f"{check_id}:{model.name}".encode())
        self.rng = np.random.default_rng([self.seed, key])
        self._points = None
        self._geo = None

    @property
    def points(self):
        if self._points is None:
            self._points = self.model.sample_points(self.rng, self.n)
        return self._points

    @property
    def geo(self):
        if self._geo is None:
            self._geo = geometry_batch(self.model, self.points)
        return self._geo

    def trig(self, positive=False):
        """Random trig polynomials in the chart coordinates, one per sample."""
        dim = self.model.chart_dim
        maker = fl.positive_trig_polynomial if positive else fl.trig_polynomial
        return maker(self.rng, dim, terms=FIELD_TERMS, max_mode=1, batch=self.n, active=FIELD_ACTIVE)

    def jet(self, fld, order=3):
        return field_batch(self.model, fld, self.points, batched_params=True, order=order)


@functools.lru_cache(maxsize=None)
def _sqgrad_torus(fn):
    def h(params, p):
        g = jax.grad(fn, argnums=1)(params, p)
        e = qh_frame_coeffs(p)[:NH] @ g
        return e @ e

    return h


@functools.lru_cache(maxsize=None)
def _sqgrad_sphere(fn):
    sphere = Sphere7()

    def h(params, p):
        g = jax.grad(fn, argnums=1)(params, p)
        return g @ sphere.horizontal_projector(p) @ g

    return h


def _sqgrad(model, fn):
    return (_sqgrad_torus if model.name == "qh-torus" else _sqgrad_sphere)(fn)


@functools.lru_cache(maxsize=None)
def _sliced(fn):
    return fl.time_slice(fn)


@functools.lru_cache(maxsize=None)
def _log_sliced(fn):
    base = _sliced(fn)

    def log_fn(params, p):
        return jnp.log(base(params, p))

    return log_fn


@functools.lru_cache(maxsize=None)
def _dt_log(fn):
    """∂_t ln u = u_t / u as a field in p."""
    dfn = fl.time_derivative(fn)

    def g(params, p):
        base, t = params
        return dfn(base, p, t) / fn(base, p, t)

    return g


def _manufactured(ctx):
    fn, sampler = manufactured.family(ctx.model)
    base = sampler(ctx.rng, ctx.n)
    pts, ts = manufactured.sample_space_time(ctx.model, ctx.rng, ctx.n)
    ctx._points = pts
    params = (base, jnp.asarray(ts))
    return fn, params


def _geo_parts(ctx):
    geo = ctx.geo
    curv = curvature_from(geo, ctx.model.n)
    T0, U, Txi = torsion_from(geo, ctx.model.n)
    return geo, curv, T0, U, Txi


# ---------------------------------------------------------------------------
# frame and torsion checks


@register("reeb")
def _reeb(ctx):
    """Reeb conditions: η_s(ξ_k) = δ_sk, ξ_s ⌟ dη_s = 0 and ξ_s ⌟ dη_k = -ξ_k ⌟ dη_s on H."""
    eta, deta = ctx.geo["eta"], ctx.geo["deta"]
    r = [eta[:, NH:, :] - np.eye(3), eta[:, :NH, :]]
    for s in range(3):
        r.append(deta[:, s, NH + s, :NH])
        for k in range(3):
            r.append(deta[:, s, NH + k, :NH] + deta[:, k, NH + s, :NH])
    return _absmax(*r)


@register("fund2forms")
def _fund2forms(ctx):
    """2ω_s = dη_s on H with ω_s = g(I_s·,·) in the [-1] component; T(X,Y) = 2Σω_s(X,Y)ξ_s."""
    geo = ctx.geo
    r = [0.5 * geo["deta"][:, :, :NH, :NH] - OM]
    for s in range(3):
        t3 = casimir_project(OM[s])[0]
        r.append(np.broadcast_to(t3, (ctx.n, NH, NH)))
    r.append(np.broadcast_to(J[0] @ J[1] - J[2], (ctx.n, NH, NH)))
    r.append(np.broadcast_to(np.einsum("sab,sbc->sac", J, J) + np.eye(NH), (ctx.n, 3, NH, NH)))
    T = geo["T"]
    r.append(T[:, :NH, :NH, NH:] - 2 * np.moveaxis(OM, 0, -1))
    r.append(T[:, :NH, :NH, :NH])
    F = geo["F"]
    if ctx.model.chart_dim == 8:
        # ambient metric: the adapted frame is orthonormal
        r.append(np.einsum("nai,nbi->nab", F, F) - np.eye(7))
    return _absmax(*r)


@register("torsion-props")
def _torsion_props(ctx):
    """Torsion properties: trace-free, T⁰ and U symmetries, U = 0 when n = 1."""
    _, _, T0, U, Txi = _geo_parts(ctx)
    r = [T0 + sum(_conj(s, T0) for s in range(3))]
    r += [U - _conj(s, U) for s in range(3)]
    r.append(np.einsum("naa->n", T0)[:, None])
    r.append(np.einsum("naa->n", U)[:, None])
    r += [np.einsum("naa->n", _jt_m(s, T0))[:, None] for s in range(3)]
    r.append(T0 - np.swapaxes(T0, 1, 2))
    r.append(U - np.swapaxes(U, 1, 2))
    for s in range(3):
        r.append(np.einsum("naa->n", Txi[:, s])[:, None])
        for t in range(3):
            r.append(np.einsum("naa->n", _jt_m(t, Txi[:, s]))[:, None])
        M = np.swapaxes(Txi[:, s], 1, 2)  # endomorphism matrix
        sym = 0.5 * (M + np.swapaxes(M, 1, 2))
        r.append(sym @ J[s] + J[s] @ sym)
    if ctx.model.n == 1:
        r.append(U)
    return _absmax(*r)


@register("need1")
def _need1(ctx):
    """T(ξ_s, I_sX, Y) = ¼[T⁰(X,Y) - T⁰(I_sX, I_sY)] - U(X,Y)."""
    _, _, T0, U, Txi = _geo_parts(ctx)
    r = []
    for s in range(3):
        lhs = _jt_m(s, Txi[:, s])
        rhs = 0.25 * (T0 - _conj(s, T0)) - U
        r.append(lhs - rhs)
    return _absmax(*r)


@register("ricci-relations")
def _ricci_relations(ctx):
    """Relations between Ric, ρ_s, τ_s, T⁰, U and S, and the qc-Einstein form Ric = 2(n+2)Sg."""
    geo, curv, T0, U, _ = _geo_parts(ctx)
    n = ctx.model.n
    g = np.eye(NH)
    S = curv.S[:, None, None]
    r = [curv.Ric - ((2 * n + 2) * T0 + (4 * n + 10) * U + 2 * (n + 2) * S * g)]
    for s in range(3):
        sym = T0 + _conj(s, T0)
        r.append(_m_j(s, curv.rho[:, s, :NH, :NH]) - (-0.5 * sym - 2 * U - S * g))
        r.append(_m_j(s, curv.tau[:, s, :NH, :NH]) - (-(n + 2) / (2 * n) * sym - S * g))
    T, c, rho, nT = geo["T"], geo["c"], curv.rho, geo["nabla_T"]
    Rf = curv.Ric_full
    for i, j, k in CYC:
        lhs = T[:, NH + i, NH + j, :NH]
        r.append(lhs + np.einsum("ca,nc->na", J[i], rho[:, k, :NH, NH + i]))
        r.append(lhs + np.einsum("ca,nc->na", J[j], rho[:, k, :NH, NH + j]))
        r.append(lhs + c[:, NH + i, NH + j, :NH])
        ric = np.einsum("ca,nc->na", J[i], Rf[:, NH + i, :NH])
        rhs = (
            2 * np.einsum("ca,nc->na", J[j], rho[:, k, :NH, NH + i])
            + 2 * np.einsum("ca,nc->na", J[i], rho[:, j, :NH, NH + k])
            + np.einsum("ca,nbcb->na", J[i], nT[:, :NH, NH + i, :NH, :NH])
        )
        r.append(ric - rhs)
    r.append(curv.Ric - 2 * (n + 2) * S * g)
    return _absmax(*r)


@register("sp1-curv")
def _sp1_curv(ctx):
    """R(A,B,ξ_i,ξ_j) = 2ρ_k(A,B) = (dα_k + α_i∧α_j)(A,B)."""
    geo = ctx.geo
    curv = curvature_from(geo, ctx.model.n)
    R, al, dal, c = geo["R"], geo["alpha_sp1"], geo["d_alpha"], geo["c"]
    r = []
    for i, j, k in CYC:
        lhs = R[:, :, :, NH + i, NH + j]
        r.append(lhs - 2 * curv.rho[:, k])
        d_alpha = dal[:, :, k, :] - np.swapaxes(dal[:, :, k, :], 1, 2) - np.einsum("nabc,nc->nab", c, al[:, k])
        wedge = np.einsum("na,nb->nab", al[:, i], al[:, j]) - np.einsum("nb,na->nab", al[:, i], al[:, j])
        r.append(lhs - (d_alpha + wedge))
    return _absmax(*r)


# ---------------------------------------------------------------------------
# pointwise differential identities


@register("ricci-identities")
def _ricci_identities(ctx):
    """The four Ricci identities for ∇²f and ∇³f."""
    geo = ctx.geo
    jet = ctx.jet(ctx.trig())
    H, th, df = jet["hess"], jet["third"], jet["df"]
    T, R, nT = geo["T"], geo["R"], geo["nabla_T"]
    hf = df[:, :NH]
    vf = df[:, NH:]
    r = [H[:, :NH, :NH] - np.swapaxes(H[:, :NH, :NH], 1, 2) + 2 * np.einsum("sab,ns->nab", OM, vf)]
    r.append(H[:, :NH, NH:] - np.swapaxes(H[:, NH:, :NH], 1, 2) - np.einsum("nsac,nc->nas", T[:, NH:, :NH, :NH], hf))
    lhs3 = th[:, :NH, :NH, :NH] - np.swapaxes(th[:, :NH, :NH, :NH], 1, 2)
    rhs3 = -np.einsum("nxyzc,nc->nxyz", R[:, :NH, :NH, :NH, :NH], hf) - 2 * np.einsum("sxy,nsz->nxyz", OM, H[:, NH:, :NH])
    r.append(lhs3 - rhs3)
    lhs4 = th[:, NH:, :NH, :NH] - np.moveaxis(th[:, :NH, :NH, NH:], 3, 1)
    Tx = T[:, NH:, :NH, :]  # T(ξ_s, e_x, E_C)
    rhs4 = (
        -np.einsum("nsxc,ncy->nsxy", Tx, H[:, :, :NH])
        - np.einsum("nsyc,nxc->nsxy", Tx, H[:, :NH, :])
        - np.einsum("nxsyc,nc->nsxy", nT[:, :NH, NH:, :NH, :], df)
        - np.einsum("nsxyc,nc->nsxy", R[:, NH:, :NH, :NH, :NH], hf)
    )
    r.append(lhs4 - rhs4)
    return _absmax(*r)


def _hess_parts(H, df, n=1):
    Hh = H[:, :NH, :NH]
    t3, tm1, tm1s, tm1a = casimir_project(Hh)
    lap = -np.einsum("naa->n", Hh)
    t30 = t3 + (lap / (4 * n))[:, None, None] * np.eye(NH)
    return Hh, t3, tm1, tm1s, tm1a, lap, t30


@register("decomp")
def _decomp(ctx):
    """Casimir decompositions of ∇²f and the contraction ∇²f(e_a, I_s e_a) = -4n df(ξ_s)."""
    n = ctx.model.n
    jet = ctx.jet(ctx.trig(), order=2)
    H, df = jet["hess"], jet["df"]
    vf = df[:, NH:]
    Hh, t3, tm1, tm1s, tm1a, lap, t30 = _hess_parts(H, df, n)
    r = [
        t3 + tm1 - Hh,
        (sq_norm(t3) + sq_norm(tm1) - sq_norm(Hh))[:, None],
        (sq_norm(t30) - (sq_norm(t3) - lap**2 / (4 * n)))[:, None],
        tm1a + np.einsum("sab,ns->nab", OM, vf),
        (sq_norm(tm1) - sq_norm(tm1s) - 4 * n * np.sum(vf**2, axis=1))[:, None],
        np.einsum("sca,nac->ns", J, Hh) + 4 * n * vf,
    ]
    if n == 1:
        # the [3] part of a symmetric 2-tensor is (tr/4)·g, so the trace-free [3] part vanishes
        r.append(t30)
    return _absmax(*r)


def _bochner_terms(ctx, curv, T0, U, jet, hjet):
    n = ctx.model.n
    H, th, df = jet["hess"], jet["third"], jet["df"]
    hf, vf = df[:, :NH], df[:, NH:]
    grad_lap = -np.einsum("nbaa->nb", th[:, :NH, :NH, :NH])
    lhs = -0.5 * sublaplacian_from(hjet)
    g2 = np.sum(hf**2, axis=1)
    mixed = sum(np.einsum("na,na->n", H[:, NH + s, :NH], _iv(s, hf)) for s in range(3))
    common = (
        -np.einsum("nb,nb->n", grad_lap, hf)
        + 2 * (n + 2) * curv.S * g2
    )
    return dict(lhs=lhs, H=H, hf=hf, vf=vf, g2=g2, mixed=mixed, common=common,
                T0ff=np.einsum("nab,na,nb->n", T0, hf, hf), Uff=np.einsum("nab,na,nb->n", U, hf, hf),
                hval=hjet["value"])


def _bochner_inputs(ctx):
    _, curv, T0, U, _ = _geo_parts(ctx)
    fld = ctx.trig()
    jet = ctx.jet(fld)
    hfld = fl.AnalyticField(_sqgrad(ctx.model, fld.fn), fld.params, "sqgrad")
    hjet = ctx.jet(hfld, order=2)
    return _bochner_terms(ctx, curv, T0, U, jet, hjet)


@register("bochner")
def _bochner(ctx):
    """qc-Bochner formula for -½Δ_b|∇_b f|², with |∇_b f|² differentiated as its own field."""
    n = ctx.model.n
    b = _bochner_inputs(ctx)
    rhs = (
        sq_norm(b["H"][:, :NH, :NH])
        + b["common"]
        + 2 * (n + 2) * b["T0ff"]
        + 2 * (2 * n + 2) * b["Uff"]
        + 4 * b["mixed"]
    )
    return _absmax((b["lhs"] - rhs)[:, None], (b["hval"] - b["g2"])[:, None])


@register("bochner-ineq", kind="inequality")
def _bochner_ineq(ctx):
    """Bochner inequality with the Cauchy-Schwarz parameter ν ∈ {0.1, 1, 10}."""
    n = ctx.model.n
    b = _bochner_inputs(ctx)
    H = b["H"]
    _, t3, tm1, tm1s, _, lap, t30 = _hess_parts(H, None, n)
    base = (
        sq_norm(tm1s)
        + 4 * n * np.sum(b["vf"] ** 2, axis=1)
        + sq_norm(t30)
        + lap**2 / (4 * n)
        + b["common"]
        + 2 * n * b["T0ff"]
        + 4 * (n + 4) * b["Uff"]
    )
    mixed2 = np.sum(H[:, :NH, NH:] ** 2, axis=(1, 2))
    margins = {nu: b["lhs"] - (base - 6 / nu * b["g2"] - 2 * nu * mixed2) for nu in NU_VALUES}
    ctx.detail = {f"nu={nu:g}": float(np.min(m)) for nu, m in margins.items()}
    return np.min(np.stack(list(margins.values())), axis=0)


@register("aux3")
def _aux3(ctx):
    """(∇³f)(e_a,e_a,∇_v f) = -∇_v f(Δ_b f) + 2g(T_{∇_v f},∇²f) - (∇_{e_a}T)(e_a,∇_v f,∇_b f) + Ric(∇_v f,∇_b f)."""
    geo, curv, _, _, _ = _geo_parts(ctx)
    jet = ctx.jet(ctx.trig())
    return np.abs(_aux3_residual(geo, curv, jet))


def _aux3_residual(geo, curv, jet):
    H, th, df = jet["hess"], jet["third"], jet["df"]
    hf, vf = df[:, :NH], df[:, NH:]
    lhs = np.einsum("ns,naas->n", vf, th[:, :NH, :NH, NH:])
    xi_lap = -np.einsum("nsaa->ns", th[:, NH:, :NH, :NH])
    rhs = (
        -np.einsum("ns,ns->n", vf, xi_lap)
        + 2 * np.einsum("ns,nsbc,nbc->n", vf, geo["T"][:, NH:, :NH, :NH], H[:, :NH, :NH])
        - np.einsum("naasb,ns,nb->n", geo["nabla_T"][:, :NH, :NH, NH:, :NH], vf, hf)
        + np.einsum("nsb,ns,nb->n", curv.Ric_full[:, NH:, :NH], vf, hf)
    )
    return lhs - rhs


@register("aux1-V")
def _aux1_v(ctx):
    """Identity for f = ln u along exact heat solutions, with the operator V(f)."""
    fn, params = _manufactured(ctx)
    geo = ctx.geo
    jet = ctx.jet(fl.AnalyticField(_log_sliced(fn), params))
    gjet = ctx.jet(fl.AnalyticField(_dt_log(fn), params), order=2)
    H, th, df = jet["hess"], jet["third"], jet["df"]
    hf, vf = df[:, :NH], df[:, NH:]
    lhs = np.einsum("ns,naas->n", vf, th[:, :NH, :NH, NH:]) - np.einsum("ns,ns->n", vf, gjet["df"][:, NH:])
    rhs = -2 * np.einsum("nb,ns,nbs->n", hf, vf, H[:, :NH, NH:]) + v_operator_from(geo, jet)
    return np.abs(lhs - rhs)


@register("V-zero")
def _v_zero(ctx):
    """V(ln u) = 0 for positive u satisfying the commutation condition; V(ln u) = residual(u)/u²."""
    fld = ctx.trig(positive=True)
    geo = ctx.geo
    jet_u = ctx.jet(fld)
    jet_f = ctx.jet(fl.log_field(fld))
    V = v_operator_from(geo, jet_f)
    res = commut_residual_from(jet_u)
    return _absmax(V[:, None], (V - res / jet_u["value"] ** 2)[:, None])


@register("commut-einstein")
def _commut_einstein(ctx):
    """(∇³u)(e_a,e_a,∇_v u) = -∇_v u(Δ_b u) for positive u on a qc-Einstein space."""
    fld = ctx.trig(positive=True)
    jet = ctx.jet(fld)
    return np.abs(commut_residual_from(jet))


@register("f-evolution")
def _f_evolution(ctx):
    """(Δ_b + ∂_t) ln u = |∇_b ln u|² along exact heat solutions."""
    fn, params = _manufactured(ctx)
    jet = ctx.jet(fl.AnalyticField(_log_sliced(fn), params), order=2)
    base, t = params
    dt = np.asarray(jax.vmap(_dt_log(fn))((base, t), jnp.asarray(ctx.points)))
    hf = jet["df"][:, :NH]
    return np.abs(sublaplacian_from(jet) + dt - np.sum(hf**2, axis=1))


# ---------------------------------------------------------------------------
# integral identities


def torus_grid_jet(params, nx, nw, order=2, w1=None):
    """Frame components of df and ∇²f for an invariant field on a product grid.

    The grid is the rectangle rule on the fundamental box [0,1)⁴ × [0,1)³;
    no neighbour structure is needed, so N_x and N_ω are independent.  The
    connection vanishes, so ∇²f(E_A, E_B) = E_A E_B f, expanded with
    E_a = σ_a(∂_a + Σ_s c_as(x) ∂_{ω_s}) and ξ_s = 2∂_{ω_s}.
    """
    val, g, h = fl.invariant_field_on_grid(params, nx, nw, order=order, w1=w1)
    nxs = nx**4
    x = np.array(np.unravel_index(np.arange(nxs), (nx,) * 4)).T / nx
    C = heisenberg_coeffs(x)  # (nxs, 4, 3)
    dC = heisenberg_coeffs(np.eye(4))  # dC[a, b, s] = ∂_a c_bs, constant
    sig = SIGMA
    g = g.reshape(7, nxs, -1)
    fw = g[NH:]
    Gb = g[:NH] + np.einsum("xbs,sxw->bxw", C, fw)
    df = np.concatenate([sig[:, None, None] * Gb, 2.0 * fw])
    if order < 2:
        return val.reshape(-1), df.reshape(7, -1), None
    h = h.reshape(7, 7, nxs, -1)
    hxw, hww = h[:NH, NH:], h[NH:, NH:]
    A = np.swapaxes(h[NH:, :NH], 0, 1) + np.einsum("xbs,tsxw->btxw", C, hww)  # f_{ω_t b} + Σ_s c_bs f_{ω_t ω_s}
    H = np.empty((7, 7) + h.shape[2:])
    hh = h[:NH, :NH] + np.einsum("abs,sxw->abxw", dC, fw) + np.einsum("xbs,asxw->abxw", C, hxw) + np.einsum("xat,btxw->abxw", C, A)
    H[:NH, :NH] = sig[:, None, None, None] * sig[None, :, None, None] * hh
    H[NH:, :NH] = 2.0 * np.swapaxes(sig[:, None, None, None] * A, 0, 1)
    H[:NH, NH:] = 2.0 * sig[:, None, None, None] * (hxw + np.einsum("xat,tsxw->asxw", C, hww))
    H[NH:, NH:] = 4.0 * hww
    return val.reshape(-1), df.reshape(7, -1), H.reshape(7, 7, -1)


def _torus_quadrature_geometry(model, nx):
    """Torsion T(ξ_s, e_a, e_b) and τ_s on the x-blocks (the frame does not depend on ω)."""
    nxs = nx**4
    x = np.array(np.unravel_index(np.arange(nxs), (nx,) * 4)).T / nx
    Txi, tau = [], []
    for a in range(0, nxs, GEOMETRY_CHUNK):
        pts = np.concatenate([x[a : a + GEOMETRY_CHUNK], np.zeros((len(x[a : a + GEOMETRY_CHUNK]), 3))], axis=1)
        geo = geometry_batch(model, pts)
        Txi.append(geo["T"][:, NH:, :NH, :NH])
        tau.append(curvature_from(geo, model.n).tau[:, :, :NH, :NH])
    return np.concatenate(Txi), np.concatenate(tau)


def _horverhess_integrands(df, H, n, tau_term, tors_term):
    """(L, R1, R2) per point from frame components (leading axis = points)."""
    hf, vf = df[:, :NH], df[:, NH:]
    L = sum(np.einsum("na,na->n", H[:, NH + s, :NH], _iv(s, hf)) for s in range(3))
    t3, tm1, _, _ = casimir_project(H[:, :NH, :NH])
    R1 = 3 / (4 * n) * sq_norm(t3) - 1 / (4 * n) * sq_norm(tm1) - 0.5 * tau_term
    R2 = -4 * n * np.sum(vf**2, axis=1) - tors_term
    return L, R1, R2


def _sphere_mc_points(rng, count):
    pts = Sphere7().sample_points(rng, count)
    L = Sphere7.mult
    xi = np.einsum("sij,nj->nsi", L, pts)
    # gauge as in Sphere7.gauge: the basis vector with the largest horizontal projection
    k = np.argmax(1.0 - pts**2 - np.sum(xi**2, axis=1), axis=1)
    rows = np.arange(count)
    e = -pts * pts[rows, k][:, None] - np.einsum("nsi,ns->ni", xi, xi[rows, :, k])
    e[rows, k] += 1.0
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    frame = np.concatenate([e[:, None], np.einsum("sij,nj->nsi", L, e), xi], axis=1)  # (n, 7, 8)
    return pts, frame


def sphere_trig_jet(params, pts, frame, hessian=True):
    """Closed-form df and Biquard ∇²f (horizontal and mixed blocks) on S⁷.

    For f the restriction of an ambient function F: on H,
    ∇²f = D²F(X,Y) - (p·∇F) g(X,Y) - Σ_s ω_s(X,Y) ξ_s F, and
    ∇²f(X, ξ_s) = ∇²f(ξ_s, X) = ⟨I_s X, ∇F⟩ + ⟨ξ_s, D²F X⟩.
    """
    amp, k, phase = (np.asarray(params[key]) for key in ("amp", "k", "phase"))
    th = pts @ k.T + phase
    gF = -(np.sin(th) * amp) @ k
    df = np.matmul(frame, gF[:, :, None])[:, :, 0]
    if not hessian:
        return df, None
    KE = np.matmul(frame, k.T)  # k_m · E_A, shape (n, 7, m)
    D2 = np.matmul(KE * (-np.cos(th) * amp)[:, None, :], np.swapaxes(KE, 1, 2))
    H = D2
    radial = np.einsum("ni,ni->n", pts, gF)
    H[:, :NH, :NH] -= radial[:, None, None] * np.eye(NH) + np.tensordot(df[:, NH:], OM, axes=(1, 0))
    # ⟨I_s e_a, ∇F⟩ = -⟨e_a, L_s ∇F⟩
    LgF = np.einsum("sij,nj->nsi", Sphere7.mult, gF)
    mixed = D2[:, :NH, NH:] - np.matmul(frame[:, :NH], np.swapaxes(LgF, 1, 2))
    H[:, :NH, NH:] = mixed
    H[:, NH:, :NH] = np.swapaxes(mixed, 1, 2)
    H[:, NH:, NH:] = 0.0  # not needed by the integrands
    return df, H


def _mc_chunks(count, chunk=100_000):
    start = 0
    while start < count:
        yield start, min(count, start + chunk)
        start += chunk


def _sphere_scalar_S(ctx):
    pts = ctx.model.sample_points(ctx.rng, 8)
    return float(np.mean(curvature_from(geometry_batch(ctx.model, pts), ctx.model.n).S))


def _integral_fields(ctx):
    return max(1, min(ctx.n, INTEGRAL_FIELDS[ctx.model.name]))


def _integral_check(ctx, integrands):
    """Integrate per-field integrands whose integrals must vanish.

    ``integrands(kind)`` draws one set of random fields and returns
    ``evaluate(chunk)``, which gives the per-point integrand arrays on a
    chunk of quadrature or Monte Carlo points.  One residual per (field,
    integrand); on the sphere each carries its own Monte Carlo tolerance.
    """
    model = ctx.model
    nf = _integral_fields(ctx)
    worst, tols = [], []
    if model.name == "qh-torus":
        nx, nw = QUAD_GRID
        weight = model.volume_density(np.zeros(7)) / (nx**4 * nw**3)
        Txi, tau = _torus_quadrature_geometry(model, nx) if ctx.needs_torsion else (None, None)
        for _ in range(nf):
            evaluate = integrands("torus")
            # one ω₁ slice at a time bounds the size of the jets
            sums = [[kernels.pairwise_sum(v) for v in evaluate((nx, nw, w1, Txi, tau))] for w1 in np.arange(nw) / nw]
            worst.extend(abs(weight * sum(col)) for col in zip(*sums))
        ctx.detail = {"quadrature": f"product grid N_x={nx} N_omega={nw}", "fields": nf}
        ctx.samples = nf * nx**4 * nw**3
        return np.array(worst), None
    pts, frame = _sphere_mc_points(ctx.rng, MC_POINTS)
    S = _sphere_scalar_S(ctx)
    for _ in range(nf):
        evaluate = integrands("sphere")
        parts = [evaluate((pts[a:b], frame[a:b], S)) for a, b in _mc_chunks(len(pts))]
        for col in zip(*parts):
            v = np.concatenate(col)
            worst.append(abs(np.mean(v)))
            tols.append(MC_SIGMAS * np.std(v) / np.sqrt(len(v)))
    ctx.detail = {"monte_carlo_points": MC_POINTS, "fields": nf, "S": S}
    ctx.samples = nf * MC_POINTS
    return np.array(worst), np.array(tols)


def _single_trig(ctx, dim):
    return fl.trig_polynomial(ctx.rng, dim, terms=FIELD_TERMS, max_mode=1, active=FIELD_ACTIVE).params


def _torus_field(ctx):
    return fl.invariant_field(ctx.rng, bumps=2, sigma=0.25, trig_terms=3, max_mode=1).params


@register("horverhess")
def _horverhess(ctx):
    """Both integral formulas for ∫Σ_s ∇²f(ξ_s, I_s∇_b f)."""
    n = ctx.model.n

    def torus(chunk):
        nx, nw, w1, Txi, tau = chunk
        _, df, H = torus_grid_jet(params, nx, nw, w1=w1)
        df = df.T
        H = np.moveaxis(H, -1, 0)
        hf = df[:, :NH]
        Ih = [_iv(s, hf) for s in range(3)]
        W = nw**2
        tau_sites = np.repeat(tau, W, axis=0)
        T_sites = np.repeat(Txi, W, axis=0)
        tau_term = sum(np.einsum("na,nab,nb->n", Ih[s], tau_sites[:, s], hf) for s in range(3))
        tors = sum(np.einsum("na,nab,nb->n", Ih[s], T_sites[:, s], hf) for s in range(3))
        L, R1, R2 = _horverhess_integrands(df, H, n, tau_term, tors)
        return [L - R1, L - R2]

    def sphere(chunk):
        pts, frame, S = chunk
        df, H = sphere_trig_jet(params, pts, frame)
        g2 = np.sum(df[:, :NH] ** 2, axis=1)
        # τ_s(I_sX, X) = S|X|² and T(ξ_s, ·, ·) = 0 on a qc-Einstein space
        L, R1, R2 = _horverhess_integrands(df, H, n, 3 * S * g2, 0.0 * g2)
        return [L - R1, L - R2]

    def integrands(kind):
        nonlocal params
        params = _torus_field(ctx) if kind == "torus" else _single_trig(ctx, 8)
        return torus if kind == "torus" else sphere

    params = None
    ctx.needs_torsion = True
    return _integral_check(ctx, integrands)


@register("divergence")
def _divergence(ctx):
    """∫∇*σ Vol_η = 0 for σ = h·df|_H, where ∇*σ = -g(∇_b h, ∇_b f) + hΔ_b f."""

    def torus(chunk):
        nx, nw, w1 = chunk[:3]
        _, df, H = torus_grid_jet(pf, nx, nw, w1=w1)
        h, dh, _ = torus_grid_jet(ph, nx, nw, order=1, w1=w1)
        lap = -np.einsum("aan->n", H[:NH, :NH])
        return [-np.einsum("an,an->n", dh[:NH], df[:NH]) + h * lap]

    def sphere(chunk):
        pts, frame, _ = chunk
        amp, k, phase = (np.asarray(ph[key]) for key in ("amp", "k", "phase"))
        df, H = sphere_trig_jet(pf, pts, frame)
        dh, _ = sphere_trig_jet(ph, pts, frame, hessian=False)
        h = np.cos(pts @ k.T + phase) @ amp + float(ph["offset"])
        lap = -np.einsum("naa->n", H[:, :NH, :NH])
        return [-np.einsum("na,na->n", dh[:, :NH], df[:, :NH]) + h * lap]

    def integrands(kind):
        nonlocal pf, ph
        draw = _torus_field if kind == "torus" else (lambda c: _single_trig(c, 8))
        pf, ph = draw(ctx), draw(ctx)
        return torus if kind == "torus" else sphere

    pf = ph = None
    return _integral_check(ctx, integrands)


# ---------------------------------------------------------------------------
# driver


def run_check(check_id, model, n_samples=200, seed=0, tol=None):
    """Run one registered check and return a :class:`CheckReport`."""
    if check_id not in REGISTRY:
        raise UnknownCheck(f"unknown check {check_id!r}; known: {', '.join(REGISTRY)}")
    if isinstance(model, str):
        model = get_model(model)
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    tol = DEFAULT_TOL[model.name] if tol is None else float(tol)
    entry = REGISTRY[check_id]
    ctx = _Ctx(model, n_samples, seed, check_id)
    ctx.detail = {}
    ctx.samples = None
    ctx.needs_torsion = False
    out = entry.fn(ctx)
    mc_tol = None
    if isinstance(out, tuple):
        out, mc_tol = out
    out = np.asarray(out, dtype=float)
    if entry.kind == "identity":
        if mc_tol is not None:
            # Monte Carlo: each field is judged against its own statistical tolerance
            excess = out - mc_tol
            i = int(np.argmax(excess))
            passed = bool(np.all(np.isfinite(out)) and np.all(out <= mc_tol))
            value, tolerance = float(out[i]), float(mc_tol[i])
        else:
            i = int(np.argmax(out))
            value, tolerance = float(out[i]), tol
            passed = bool(np.all(np.isfinite(out)) and value <= tol)
    else:
        i = int(np.argmin(out))
        value, tolerance = float(out[i]), tol
        passed = bool(np.all(np.isfinite(out)) and value >= -tol)
    witness = ()
    if ctx._points is not None and len(ctx._points) == len(out):
        witness = tuple(float(v) for v in np.round(ctx._points[i], 12))
    return CheckReport(
        check_id=check_id,
        model=model.name,
        kind=entry.kind,
        samples=int(ctx.samples or len(out)),
        value=value,
        tolerance=tolerance,
        passed=passed,
        witness_point=witness,
        witness_sample=i,
        seed=ctx.seed,
        detail=dict(ctx.detail),
    )


def run_suite(model, n_samples=200, seed=0, tol=None, checks=None):
    return [run_check(c, model, n_samples, seed, tol) for c in (checks or check_ids())]


CSV_COLUMNS = ("check_id", "model", "kind", "samples", "value", "tolerance", "pass", "seed", "witness_sample", "witness_point")


def reports_csv(reports):
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in reports:
        point = " ".join(f"{v:.12g}" for v in r.witness_point)
        buf.write(
            f"{r.check_id},{r.model},{r.kind},{r.samples},{r.value:.17g},{r.tolerance:.17g},"
            f"{int(r.passed)},{r.seed},{r.witness_sample},{point}\n"
        )
    return buf.getvalue()
