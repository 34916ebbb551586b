import jax
import jax.numpy as jnp
import numpy as np
import pytest
import sympy as sp

from qcheat.geometry import adapted_frame
from qcheat.models import (
    ETA_CONST,
    SIGMA,
    STRUCTURE,
    DomainError,
    QhTorus,
    Sphere7,
    get_model,
    model_names,
    qh_frame_coeffs,
    qh_inverse,
    qh_mul,
    sphere_connection,
)

from conftest import symbolic_qh_frame, torus_points


# ---------------------------------------------------------------------------
# quaternionic Heisenberg group


def test_group_identity_and_inverse(rng):
    p = rng.normal(size=(50, 7))
    e = np.zeros(7)
    assert np.array_equal(qh_mul(p, e), p)
    assert np.allclose(qh_mul(p, qh_inverse(p)), 0.0, atol=1e-14)
    assert np.allclose(qh_mul(qh_inverse(p), p), 0.0, atol=1e-14)


def test_group_associative(rng):
    a, b, c = (rng.normal(size=(1000, 7)) for _ in range(3))
    assert np.max(np.abs(qh_mul(qh_mul(a, b), c) - qh_mul(a, qh_mul(b, c)))) < 1e-12


def test_integer_lattice_closed(rng):
    a = rng.integers(-5, 6, size=(200, 7)).astype(float)
    b = rng.integers(-5, 6, size=(200, 7)).astype(float)
    prod = qh_mul(a, b)
    assert np.array_equal(prod, np.round(prod))


def test_reduce_fundamental_domain(rng):
    p = rng.normal(scale=3.0, size=(300, 7))
    r = QhTorus.reduce(p)
    assert np.all((r >= 0) & (r < 1))
    gamma = rng.integers(-3, 4, size=(300, 7)).astype(float)
    assert np.allclose(QhTorus.reduce(qh_mul(gamma, p)), r, atol=1e-12)


def test_frame_at_identity():
    F = qh_frame_coeffs(np.zeros(7))
    assert np.array_equal(F[:4, :4], np.diag(SIGMA))
    assert np.array_equal(F[:4, 4:], np.zeros((4, 3)))
    assert np.array_equal(F[4:], np.c_[np.zeros((3, 4)), 2 * np.eye(3)])


def test_frame_is_push_forward_of_identity_frame(rng):
    # q ↦ p·q is affine in q, so its differential is p·e_a − p exactly
    for p in rng.normal(size=(20, 7)):
        F = qh_frame_coeffs(p)
        push = np.array([qh_mul(p, np.eye(7)[a]) - p for a in range(4)])
        assert np.allclose(F[:4], SIGMA[:, None] * push, atol=1e-14)


def test_structure_equation_symbolic():
    """dη_s(E_a, E_b) = 2 g(I_s E_a, E_b) with η_s = ½(dω_s − Σ c_as dx_a)."""
    coords, rows = symbolic_qh_frame()

    def bracket(A, B):
        return [sp.expand(sum(A[i] * sp.diff(B[j], coords[i]) - B[i] * sp.diff(A[j], coords[i]) for i in range(7))) for j in range(7)]

    for a in range(4):
        for b in range(4):
            br = bracket(rows[a], rows[b])
            assert all(sp.simplify(v) == 0 for v in br[:4])
            for s in range(3):
                # η_s vanishes on H, so dη_s(E_a, E_b) = −η_s([E_a, E_b])
                eta_br = ETA_CONST * br[4 + s]  # the dx part of η_s meets zero x-components
                assert sp.simplify(-eta_br - 2 * STRUCTURE[s][b, a]) == 0


def test_coframe_dual_to_frame(torus, rng):
    for p in torus_points(rng, 20):
        F = np.asarray(torus.frame(p))
        eta = np.asarray(torus.coframe(p))
        assert np.allclose(eta @ F.T, np.c_[np.zeros((3, 4)), np.eye(3)], atol=1e-14)


def test_vertical_gradient_of_omega1_at_origin():
    from qcheat.fields import AnalyticField
    from qcheat.geometry import grad

    f = AnalyticField(lambda params, p: p[4], None)
    h, v = grad(f, QhTorus(), np.zeros(7))
    assert np.allclose(h, 0.0)
    assert np.allclose(v, [1.0 / ETA_CONST, 0.0, 0.0])


def test_volume_density_constant(torus, rng):
    dens = [torus.volume_density(p) for p in torus_points(rng, 50)]
    assert np.allclose(dens, dens[0], rtol=0, atol=1e-14)
    assert dens[0] == pytest.approx(0.25, abs=1e-15)


# ---------------------------------------------------------------------------
# sphere


def test_sphere_reeb_at_base_point(sphere):
    p = np.eye(8)[0]
    F = adapted_frame(sphere, p)
    # left multiplication by i, j, k on the first quaternion factor
    assert np.allclose(F.vertical, np.eye(8)[1:4])


def test_sphere_frame_orthonormal(sphere, rng):
    for p in sphere.sample_points(rng, 100):
        F = np.asarray(sphere.frame(jnp.asarray(p), jnp.asarray(sphere.gauge(p))))
        assert np.allclose(F @ F.T, np.eye(7), atol=1e-12)
        assert np.allclose(F @ p, 0.0, atol=1e-12)
        span = np.vstack([p, F[4:]])
        assert np.allclose(span @ span.T, np.eye(4), atol=1e-12)
        # structure matrices: I_s e_a = Σ_c J_s[c, a] e_c
        e = F[:4]
        for s in range(3):
            assert np.allclose(Sphere7.mult[s] @ e.T, e.T @ STRUCTURE[s], atol=1e-12)


def test_quaternion_relations():
    I1, I2, I3 = STRUCTURE
    assert np.array_equal(I1 @ I2, I3)
    for J in STRUCTURE:
        assert np.array_equal(J @ J, -np.eye(4))


def test_sphere_rejects_off_sphere_point(sphere):
    with pytest.raises(DomainError):
        sphere.check_point(np.ones(8))
    with pytest.raises(DomainError):
        sphere.check_point(np.eye(8)[0] * (1 + 1e-9))


def test_torus_rejects_bad_point(torus):
    with pytest.raises(DomainError):
        torus.check_point(np.array([np.nan] * 7))
    with pytest.raises(DomainError):
        torus.check_point(np.zeros(6))


def test_model_registry():
    assert model_names() == ["qh-torus", "sphere7"]
    assert get_model("sphere7") == Sphere7()
    with pytest.raises(DomainError):
        get_model("nosuch")


def test_sphere_connection_metric(sphere, rng):
    """X g(B, C) = g(∇_X B, C) + g(B, ∇_X C) for horizontal fields B, C."""
    b, c = rng.normal(size=8), rng.normal(size=8)

    def hfield(v):
        return lambda q: sphere.horizontal_projector(q) @ jnp.asarray(v)

    B, C = hfield(b), hfield(c)
    for p in sphere.sample_points(rng, 10):
        X = np.asarray(sphere.horizontal_projector(jnp.asarray(p))) @ rng.normal(size=8)
        lhs = jax.jvp(lambda q: B(q) @ C(q), (jnp.asarray(p),), (jnp.asarray(X),))[1]
        dB = sphere_connection(sphere, p, X, B)
        dC = sphere_connection(sphere, p, X, C)
        rhs = dB @ np.asarray(C(jnp.asarray(p))) + dC @ np.asarray(B(jnp.asarray(p)))
        assert abs(float(lhs) - rhs) < 1e-10


def test_sphere_connection_needs_sphere(torus):
    with pytest.raises(DomainError):
        sphere_connection(torus, np.zeros(7), np.zeros(7), lambda q: q)
