import numpy as np
import pytest

from qcheat import kernels
from qcheat.fields import invariant_field, invariant_field_on_grid
from qcheat.initial import KINDS, initial_data, product_bump, product_bump_exact
from qcheat.lattice import (
    Lattice7,
    LatticeError,
    StabilityError,
    apply_sublaplacian,
    evolve,
    integrate,
    make_state,
    normalize,
    read_checkpoint,
    step,
    write_checkpoint,
)


@pytest.fixture(scope="module")
def lat():
    return Lattice7(4, 4)


def _smooth(lat, seed=0):
    return initial_data(lat, "mixed", seed)


# ---------------------------------------------------------------------------
# construction


@pytest.mark.parametrize("nx,nw", [(2, 4), (4, 2), (8, 3), (6, 4)])
def test_incompatible_grids_rejected(nx, nw):
    with pytest.raises(LatticeError):
        Lattice7(nx, nw)


def test_site_coordinates(lat):
    xs = lat.coordinates()
    assert xs.shape == (lat.size, 7)
    assert np.allclose(lat.site_coordinates(123), xs[123])
    assert np.all((xs >= 0) & (xs < 1))


def test_volume_is_coframe_density(lat):
    assert integrate(np.ones(lat.size), lat) == pytest.approx(0.25, abs=1e-15)
    assert lat.density_spread == 0.0


def test_integrate_linear(lat, rng):
    u, v = rng.normal(size=(2, lat.size))
    lhs = lat.integrate(2.0 * u - 3.0 * v)
    assert lhs == pytest.approx(2.0 * lat.integrate(u) - 3.0 * lat.integrate(v), abs=1e-14)


# ---------------------------------------------------------------------------
# the stencil


def test_constant_in_kernel(lat):
    assert np.max(np.abs(lat.sublaplacian(np.full(lat.size, 3.0)))) < 1e-12


@pytest.mark.parametrize("nx,nw", [(8, 4), (8, 1)])
def test_cosine_is_discrete_eigenfunction(nx, nw):
    lat = Lattice7(nx, nw)
    x1 = lat.coordinates()[:, 0]
    u = np.cos(2 * np.pi * x1)
    h = lat.hx
    # centered first differences applied twice have symbol (sin 2πh / h)²
    lam = (np.sin(2 * np.pi * h) / h) ** 2
    assert np.allclose(lat.sublaplacian(u), lam * u, atol=1e-9)
    assert abs(lam - 4 * np.pi**2) <= 4 * np.pi**2 * (2 * np.pi * h) ** 2 / 3


def test_vertical_derivative_of_invariant_field():
    lat = Lattice7(4, 8)
    f = invariant_field(np.random.default_rng(1), bumps=1, sigma=0.3, trig_terms=1)
    v, g, _ = invariant_field_on_grid(f.params, lat.nx, lat.nw, order=1)
    xi = lat.vertical_derivatives(v.ravel())
    exact = 2 * g[4:].reshape(3, -1)
    # ω-frequencies are at most 1 per axis: centered differences lose a factor sinc
    factor = np.sin(2 * np.pi * lat.hw) / (2 * np.pi * lat.hw)
    assert np.allclose(xi, factor * exact, atol=1e-12)


def test_frame_derivatives_converge():
    f = invariant_field(np.random.default_rng(3), bumps=2, sigma=0.25, trig_terms=1)
    errs = []
    for n in (4, 8):
        lat = Lattice7(n, n)
        v, g, _ = invariant_field_on_grid(f.params, n, n, order=1)
        g = g.reshape(7, lat.nxs, lat.W)
        exact = lat.sigma[:, None, None] * g[:4] + np.einsum("nas,snw->anw", lat.coef, g[4:])
        D = lat.frame_derivatives(v.ravel()).reshape(4, lat.nxs, lat.W)
        errs.append(np.max(np.abs(D - exact)) / np.max(np.abs(exact)))
    assert errs[1] < 0.5 * errs[0]


def test_divergence_theorem(lat, rng):
    for _ in range(3):
        u = rng.normal(size=lat.size)
        assert abs(lat.integrate(lat.sublaplacian(u))) <= 1e-10
        v = rng.normal(size=(4, lat.size))
        assert abs(lat.integrate(lat.divergence(v))) <= 1e-10


def test_self_adjoint_and_nonnegative(lat, rng):
    u, v = rng.normal(size=(2, lat.size))
    assert abs(lat.inner(lat.sublaplacian(u), v) - lat.inner(u, lat.sublaplacian(v))) <= 1e-10
    assert lat.inner(lat.sublaplacian(u), u) >= -1e-12
    # each D_a is skew-adjoint
    w = rng.normal(size=(4, lat.size))
    D = lat.frame_derivatives(u)
    pairing = sum(lat.inner(w[a], D[a]) for a in range(4))
    assert abs(lat.inner(lat.divergence(w), u) + pairing) <= 1e-10


def test_apply_sublaplacian_on_state(lat):
    st = make_state(lat, _smooth(lat))
    assert np.array_equal(apply_sublaplacian(st, lat), lat.sublaplacian(st.u))


def test_spectral_radius_bounds_stable_dt(lat):
    rho = lat.spectral_radius()
    assert rho > 0
    assert lat.stable_dt() * rho <= 1.0


# ---------------------------------------------------------------------------
# states and time stepping


def test_normalize(lat):
    st = normalize(make_state(lat, _smooth(lat)), lat)
    assert st.mass == pytest.approx(1.0, abs=1e-14)
    again = normalize(st, lat)
    assert np.allclose(again.u, st.u, rtol=0, atol=1e-14)
    doubled = normalize(make_state(lat, 2 * st.u), lat)
    assert np.allclose(doubled.u, st.u, rtol=0, atol=1e-14)
    with pytest.raises(ValueError):
        normalize(make_state(lat, -np.ones(lat.size)), lat)


def test_make_state_checks_size(lat):
    with pytest.raises(LatticeError):
        make_state(lat, np.ones(5))


def test_constant_fixed_point(lat):
    st = make_state(lat, np.ones(lat.size))
    new = step(st, lat, lat.stable_dt())
    assert np.allclose(new.u, 1.0, rtol=0, atol=1e-15)


def test_maximum_principle_and_mass(lat):
    st = normalize(make_state(lat, _smooth(lat, 4)), lat)
    st, log = evolve(st, lat, 0.02, lat.stable_dt(), checkpoints=[0.01])
    assert all(row[6] for row in log)
    assert st.t == 0.02
    assert any(row[1] == 0.01 for row in log)
    rates = [abs(row[5]) for row in log]
    assert max(rates) <= 1e-6
    assert st.mass == pytest.approx(1.0, abs=1e-12)


def test_positivity_loss_raises(lat):
    u = _smooth(lat)
    with pytest.raises(StabilityError, match="site"):
        step(make_state(lat, u), lat, 1000 * lat.stable_dt())


def test_log_time_derivative_matches_time_difference(lat):
    """(-Δ_b u)/u agrees with one-step differencing of ln u to first order in dt."""
    u = make_state(lat, _smooth(lat, 2))
    spatial = -lat.sublaplacian(u.u) / u.u
    errs = []
    for k in range(4):
        dt = lat.stable_dt() / 2**k
        new = step(u, lat, dt)
        errs.append(np.max(np.abs((np.log(new.u) - np.log(u.u)) / dt - spatial)))
    rates = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((rates > 1.8) & (rates < 2.2))


def test_reduced_lattice_matches_fourier_solution():
    lat = Lattice7(8, 1)
    centres = np.array([0.1, 0.3, 0.7, 0.45])
    st = make_state(lat, 1 + 0.5 * product_bump(lat.x_blocks, centres))
    st, _ = evolve(st, lat, 0.1, lat.stable_dt())
    exact = product_bump_exact(lat.x_blocks, centres, 0.1)
    assert np.max(np.abs(st.u - exact)) / np.max(np.abs(exact)) < 5e-3


@pytest.mark.parametrize("kind", KINDS)
def test_initial_data_range(lat, kind):
    u = initial_data(lat, kind, seed=5)
    assert u.shape == (lat.size,)
    assert np.all(u >= 0.5 - 1e-12) and np.all(u <= 1.5 + 1e-12)


def test_initial_data_errors():
    with pytest.raises(ValueError):
        initial_data(Lattice7(4, 4), "nosuch")
    with pytest.raises(ValueError):
        initial_data(Lattice7(4, 1), "nil")


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip(lat, tmp_path):
    st = normalize(make_state(lat, _smooth(lat), t=0.125), lat)
    path = tmp_path / "a.qcht"
    write_checkpoint(path, st, lat)
    nx, nw, t, mass, u = read_checkpoint(path)
    assert (nx, nw, t, mass) == (4, 4, 0.125, st.mass)
    assert np.array_equal(u, st.u)


def test_checkpoint_rejects_garbage(lat, tmp_path):
    bad = tmp_path / "bad.qcht"
    bad.write_bytes(b"XXXX" + bytes(60))
    with pytest.raises(ValueError):
        read_checkpoint(bad)
    st = make_state(lat, _smooth(lat))
    good = tmp_path / "good.qcht"
    write_checkpoint(good, st, lat)
    good.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(ValueError, match="truncated"):
        read_checkpoint(good)


# ---------------------------------------------------------------------------
# backends


needs_compiled = pytest.mark.skipif(kernels.BACKEND_NAME != "cython", reason="compiled kernels not built")


@needs_compiled
def test_backends_agree(rng):
    a = Lattice7(4, 4, backend="cython")
    b = Lattice7(4, 4, backend="python")
    u = rng.normal(size=a.size)
    v = rng.normal(size=(4, a.size))
    assert np.array_equal(a.frame_derivatives(u), b.frame_derivatives(u))
    assert np.array_equal(a.divergence(v), b.divergence(v))
    assert np.array_equal(a.vertical_derivatives(u), b.vertical_derivatives(u))
    assert a.integrate(u) == b.integrate(u)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
