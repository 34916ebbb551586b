import jax.numpy as jnp
import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qcheat.fields import AnalyticField, constant, positive_trig_polynomial, trig_polynomial
from qcheat.geometry import (
    casimir_project,
    commut_residual,
    curvature,
    field_batch,
    grad,
    hessian,
    omega_matrices,
    positivity_margin,
    sq_norm,
    sublaplacian,
    third_contraction,
    torsion_tensors,
    v_operator,
)
from qcheat.models import STRUCTURE, DomainError, QhTorus

from conftest import symbolic_qh_frame, torus_points


def _sym_field(expr, coords):
    fn = sp.lambdify([coords], expr, "jax")
    return AnalyticField(lambda params, p: fn(list(p)), None, "sympy")


def _points(model, rng, count):
    return torus_points(rng, count) if isinstance(model, QhTorus) else model.sample_points(rng, count)


@pytest.fixture(params=["torus", "sphere"])
def model(request):
    return request.getfixturevalue(request.param)


# ---------------------------------------------------------------------------
# derivatives of scalar fields


def test_constant_field_has_zero_derivatives(model, rng):
    f = constant(2.5)
    for p in _points(model, rng, 3):
        h, v = grad(f, model, p)
        assert np.allclose(h, 0) and np.allclose(v, 0)
        assert sublaplacian(f, model, p) == pytest.approx(0, abs=1e-12)
        assert np.allclose(third_contraction(f, model, p), 0, atol=1e-12)
        assert v_operator(model, f, p) == pytest.approx(0, abs=1e-12)
        assert commut_residual(model, f, p) == pytest.approx(0, abs=1e-12)


def test_sublaplacian_of_x1_squared_at_origin(torus):
    f = AnalyticField(lambda params, p: p[0] ** 2)
    assert sublaplacian(f, torus, np.zeros(7)) == pytest.approx(-2.0, abs=1e-13)


def test_sublaplacian_of_omega1_vanishes(torus, rng):
    f = AnalyticField(lambda params, p: p[4])
    for p in torus_points(rng, 5):
        assert sublaplacian(f, torus, p) == pytest.approx(0.0, abs=1e-13)


def test_x_only_field_has_no_vertical_gradient(torus, rng):
    f = trig_polynomial(rng, 7, mask=[1, 1, 1, 1, 0, 0, 0])
    for p in torus_points(rng, 5):
        assert np.allclose(grad(f, torus, p)[1], 0.0, atol=1e-13)


def test_quadratic_hessian_at_origin_is_euclidean(torus, rng):
    A = rng.normal(size=(4, 4))
    A = A + A.T
    f = AnalyticField(lambda params, p: 0.5 * p[:4] @ params @ p[:4], jnp.asarray(A))
    hh, _, _ = hessian(f, torus, np.zeros(7))
    # frame at the origin is diag(σ) ∂_x
    sig = np.array([1.0, -1.0, -1.0, -1.0])
    assert np.allclose(hh, sig[:, None] * A * sig[None, :], atol=1e-13)


def test_heisenberg_jets_match_symbolic_expansion(torus, rng):
    coords, rows = symbolic_qh_frame()
    x1, x2, x3, x4, w1, w2, w3 = coords
    f = x1**2 * w2 + x2 * x3 * w1 + w3**2 * x4 + x1 * x2 * x3 - 3 * w1 * w2 * x4

    def E(A, g):
        return sum(rows[A][i] * sp.diff(g, coords[i]) for i in range(7))

    fld = _sym_field(f, coords)
    d3 = [[[E(A, E(B, E(C, f))) for C in range(7)] for B in range(7)] for A in range(7)]
    d2 = [[E(A, E(B, f)) for B in range(7)] for A in range(7)]
    for p in rng.uniform(-1, 1, size=(3, 7)):
        sub = dict(zip(coords, p))
        jet = field_batch(torus, fld, p[None])
        # flat left-invariant connection: covariant derivatives are iterated frame derivatives
        H = np.array([[float(v.subs(sub)) for v in r] for r in d2])
        T3 = np.array([[[float(v.subs(sub)) for v in r] for r in m] for m in d3])
        assert np.allclose(jet["hess"][0], H, atol=1e-12)
        assert np.allclose(jet["third"][0], T3, atol=1e-12)


def test_sphere_linear_functions_are_sublaplacian_eigenfunctions(sphere, rng):
    for p in sphere.sample_points(rng, 5):
        v = rng.normal(size=8)
        f = AnalyticField(lambda params, q: params @ q, jnp.asarray(v))
        assert sublaplacian(f, sphere, p) == pytest.approx(4.0 * (v @ p), abs=1e-12)


def test_ricci_identity_on_alternating_hessian(model, rng):
    f = trig_polynomial(rng, model.chart_dim, terms=3, max_mode=1)
    om = omega_matrices()
    for p in _points(model, rng, 5):
        hh, _, _ = hessian(f, model, p)
        _, v = grad(f, model, p)
        expect = -2 * np.einsum("sab,s->ab", om, v)
        assert np.allclose(hh - hh.T, expect, atol=1e-10)
        # Σ_a ∇²f(e_a, I_s e_a) = -4n ξ_s f
        trace = np.einsum("sca,ac->s", STRUCTURE, hh)
        assert np.allclose(trace, -4 * v, atol=1e-10)


def test_third_contraction_equals_minus_xi_of_sublaplacian(model, rng):
    f = trig_polynomial(rng, model.chart_dim, terms=3, max_mode=1)
    for p in _points(model, rng, 5):
        jet = field_batch(model, f, p[None])
        xi_lap = -np.einsum("saa->s", jet["third"][0][4:, :4, :4])
        assert np.allclose(third_contraction(f, model, p), -xi_lap, atol=1e-9)


def test_v_operator_vanishes(model, rng):
    f = trig_polynomial(rng, model.chart_dim, terms=3, max_mode=1)
    for p in _points(model, rng, 5):
        assert abs(v_operator(model, f, p)) <= 1e-9


def test_commutation_residual_vanishes(model, rng):
    u = positive_trig_polynomial(rng, model.chart_dim, terms=3, max_mode=1)
    for p in _points(model, rng, 5):
        assert abs(commut_residual(model, u, p)) <= 1e-9


def test_commutation_residual_rejects_nonpositive(torus):
    with pytest.raises(DomainError):
        commut_residual(torus, constant(-1.0), np.zeros(7))


# ---------------------------------------------------------------------------
# Casimir decomposition


def _upsilon(T):
    return np.einsum("sca,...cd,sdb->...ab", STRUCTURE, T, STRUCTURE)


def test_casimir_metric_is_pure_three():
    t3, tm1, _, _ = casimir_project(np.eye(4))
    assert np.allclose(t3, np.eye(4)) and np.allclose(tm1, 0)


@pytest.mark.parametrize("s", range(3))
def test_casimir_fundamental_forms_are_minus_one(s):
    om = omega_matrices()[s]
    t3, tm1, sym, alt = casimir_project(om)
    assert np.allclose(t3, 0) and np.allclose(tm1, om)
    assert np.allclose(sym, 0) and np.allclose(alt, om)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-10, 10)))
def test_casimir_split_is_orthogonal_eigen(T):
    t3, tm1, sym, alt = casimir_project(T)
    assert np.allclose(t3 + tm1, T, atol=1e-12)
    assert np.allclose(sym + alt, tm1, atol=1e-12)
    assert sq_norm(t3) + sq_norm(tm1) == pytest.approx(sq_norm(T), rel=1e-12, abs=1e-12)
    assert np.max(np.abs(_upsilon(t3) - 3 * t3)) <= 1e-12 * max(1.0, np.abs(T).max())
    assert np.max(np.abs(_upsilon(tm1) + tm1)) <= 1e-12 * max(1.0, np.abs(T).max())


def test_casimir_batched(rng):
    T = rng.normal(size=(5, 3, 4, 4))
    t3, _, _, _ = casimir_project(T)
    assert np.allclose(t3[2, 1], casimir_project(T[2, 1])[0])


# ---------------------------------------------------------------------------
# torsion, curvature and positivity


def test_torsion_endomorphism_vanishes(model, rng):
    for p in _points(model, rng, 10):
        T0, U, _ = torsion_tensors(model, p)
        assert np.allclose(T0, 0, atol=1e-12) and np.allclose(U, 0, atol=1e-12)


def test_heisenberg_is_flat(torus, rng):
    for p in torus_points(rng, 5):
        c = curvature(torus, p)
        assert np.allclose(c.Ric, 0) and c.S == 0
        assert np.allclose(c.rho, 0) and np.allclose(c.tau, 0)


def test_sphere_is_qc_einstein(sphere, rng):
    S = []
    for p in sphere.sample_points(rng, 10):
        c = curvature(sphere, p)
        assert np.allclose(c.Ric, 6 * c.S * np.eye(4), atol=1e-10)
        S.append(float(c.S))
    assert S[0] > 0
    assert np.ptp(S) < 1e-6
    assert S[0] == pytest.approx(2.0, abs=1e-10)


@pytest.mark.parametrize("k", [0.0, 1.0, 2.5])
def test_heisenberg_positivity_margin_is_k(torus, rng, k):
    for p in torus_points(rng, 3):
        assert positivity_margin(torus, p, k) == pytest.approx(k, abs=1e-12)


def test_sphere_positivity_margin(sphere, rng):
    p = sphere.sample_points(rng, 1)[0]
    S = float(curvature(sphere, p).S)
    assert positivity_margin(sphere, p, 0.0) == pytest.approx(6 * S, abs=1e-10)
    with pytest.raises(DomainError):
        positivity_margin(sphere, p, -1.0)
