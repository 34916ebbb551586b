"""Lattice discretization of u_t = -Δ_b u on the Heisenberg torus Γ\\G.

The grid has N_x points per x-direction and N_ω per ω-direction on the
fundamental domain [0, 1)⁷.  Neighbours across an x-face are found by
reducing the shifted chart point with the lattice action, which moves the
ω-index by an integer amount when 2 N_ω / N_x is an integer.

The frame derivative D_a = σ_a δ_{x_a} + Σ_s σ_a c_as(x) δ_{ω_s} uses
centered differences, and Δ_b^h = -Σ_a D_a D_a.  Each D_a is skew-adjoint for
the site inner product, so Δ_b^h is symmetric and mass is conserved exactly.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .models import QhTorus, SIGMA, heisenberg_coeffs, twist


class StabilityError(RuntimeError):
    """Loss of positivity or a non-finite value during time stepping."""


class LatticeError(ValueError):
    """Grid sizes incompatible with the lattice quotient."""


class Lattice7:
    """Periodic 7-dimensional grid with twisted x-faces."""

    def __init__(self, nx, nw, backend=None):
        nx, nw = int(nx), int(nw)
        if nx < 3 or (nw < 3 and nw != 1):
            raise LatticeError("grid sizes must be at least 3 (N_ω = 1 selects the ω-independent lattice)")
        if nw > 1 and (2 * nw) % nx:
            raise LatticeError(f"2·N_ω must be a multiple of N_x (got N_x={nx}, N_ω={nw})")
        # N_ω = 1 carries exactly the ω-independent functions, on which the
        # face twists and all ω-differences act trivially.
        self.reduced = nw == 1
        self.nx, self.nw = nx, nw
        self.hx, self.hw = 1.0 / nx, 1.0 / nw
        self.nxs = nx**4
        self.W = nw**3
        self.size = self.nxs * self.W
        self.shape = (nx,) * 4 + (nw,) * 3
        self.be = kernels.get_backend(backend)

        ix = np.array(np.unravel_index(np.arange(self.nxs), (nx,) * 4)).T  # (nxs, 4)
        x = ix / nx
        self.x_blocks = x
        self.coef = np.ascontiguousarray(SIGMA[None, :, None] * heisenberg_coeffs(x))
        self.sigma = SIGMA.copy()

        self.xplus = np.zeros((self.nxs, 4), dtype=np.intp)
        self.xminus = np.zeros((self.nxs, 4), dtype=np.intp)
        self.splus = np.zeros((self.nxs, 4, 3), dtype=np.intp)
        self.sminus = np.zeros((self.nxs, 4, 3), dtype=np.intp)
        for a in range(4):
            for sign, xn, sh in ((1, self.xplus, self.splus), (-1, self.xminus, self.sminus)):
                j = ix.copy()
                j[:, a] += sign
                m = -np.floor_divide(j, nx)  # lattice element bringing j back
                j = j + m * nx
                # ω-shift 2 Im(m̄ x') in index units, x' the unreduced neighbour
                shift = twist(m.astype(float), (ix + np.eye(4, dtype=int)[a] * sign) / nx) * nw
                ishift = np.rint(shift).astype(np.intp)
                if not self.reduced and np.max(np.abs(shift - ishift)) > 1e-9:
                    raise LatticeError("ω-shift across an x-face is not a lattice multiple")
                xn[:, a] = np.ravel_multi_index(j.T, (nx,) * 4)
                sh[:, a] = np.mod(ishift, nw)

        model = QhTorus()
        dens = np.array([model.volume_density(np.r_[xb, 0.0, 0.0, 0.0]) for xb in x[: min(len(x), 64)]])
        self.density_value = float(dens[0])
        self.density_spread = float(np.max(np.abs(dens - dens[0])))
        self.cell = self.hx**4 * self.hw**3
        self.c_max = float(max(1.0, np.max(np.abs(self.coef)), 2.0))
        self._weights = None

    # -- geometry of the grid ------------------------------------------------

    def coordinates(self):
        """Chart coordinates of every site, shape ``(size, 7)``."""
        ix = np.array(np.unravel_index(np.arange(self.size), self.shape)).T.astype(float)
        ix[:, :4] /= self.nx
        ix[:, 4:] /= self.nw
        return ix

    def site_coordinates(self, index):
        idx = np.array(np.unravel_index(int(index), self.shape), dtype=float)
        idx[:4] /= self.nx
        idx[4:] /= self.nw
        return idx

    @property
    def weights(self):
        """Vol_η quadrature weight of every site."""
        if self._weights is None:
            self._weights = np.full(self.size, self.density_value * self.cell)
        return self._weights

    @property
    def volume(self):
        return self.density_value

    def describe(self):
        return f"N_x={self.nx} N_ω={self.nw} sites={self.size} backend={kernels.BACKEND_NAME}"

    # -- operators -------------------------------------------------------------

    def _args(self):
        return (self.coef, self.xplus, self.xminus, self.splus, self.sminus, self.sigma, self.nw, self.hx, self.hw)

    def frame_derivatives(self, u):
        """D_a u for a = 1..4, shape ``(4, size)``."""
        u = np.ascontiguousarray(u, dtype=float).ravel()
        out = np.empty((4, self.size))
        self.be.frame_derivatives(u, out, *self._args(), kernels.thread_count())
        return out

    def divergence(self, v):
        """Σ_a D_a v_a for a horizontal vector field given by frame components."""
        v = np.ascontiguousarray(v, dtype=float).reshape(4, self.size)
        out = np.empty(self.size)
        self.be.divergence(v, out, *self._args(), kernels.thread_count())
        return out

    def vertical_derivatives(self, u):
        """ξ_s u = 2 ∂_{ω_s} u (centered differences), shape ``(3, size)``."""
        u = np.ascontiguousarray(u, dtype=float).ravel()
        out = np.empty((3, self.size))
        self.be.vertical_derivatives(u, out, self.nxs, self.nw, 2.0, kernels.thread_count())
        return out

    def sublaplacian(self, u):
        return -self.divergence(self.frame_derivatives(u))

    def integrate(self, values):
        """Σ values·density·h_x⁴h_ω³ with the fixed pairwise reduction tree."""
        values = np.asarray(values, dtype=float).ravel()
        return kernels.pairwise_sum(values * self.weights, self.be)

    def inner(self, u, v):
        return self.integrate(np.asarray(u).ravel() * np.asarray(v).ravel())

    # -- time step control -----------------------------------------------------

    def stable_dt(self):
        """0.2·min(h)²/(4(1 + C_max²)) with C_max the largest frame coefficient."""
        h = self.hx if self.reduced else min(self.hx, self.hw)
        return 0.2 * h * h / (4.0 * (1.0 + self.c_max**2))

    def spectral_radius(self, iterations=50, seed=0):
        """Power-iteration estimate of the largest eigenvalue of Δ_b^h."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.size)
        v /= np.sqrt(self.inner(v, v))
        lam = 0.0
        for _ in range(iterations):
            w = self.sublaplacian(v)
            lam = self.inner(v, w)
            v = w / np.sqrt(self.inner(w, w))
        return float(lam)


def apply_sublaplacian(state, lattice):
    return lattice.sublaplacian(state.u)


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class HeatState:
    u: np.ndarray
    t: float
    mass: float
    meta: str = ""
    drift: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.u.setflags(write=False)


def make_state(lattice, u, t=0.0, meta=""):
    u = np.array(u, dtype=float).ravel()
    if u.size != lattice.size:
        raise LatticeError(f"state has {u.size} values, lattice has {lattice.size} sites")
    return HeatState(u, float(t), lattice.integrate(u), meta)


def integrate(values, lattice):
    return lattice.integrate(values)


def normalize(state, lattice, target=1.0):
    """Scale u so that its Vol_η integral equals ``target``."""
    mass = lattice.integrate(state.u)
    if not mass > 0:
        raise ValueError("cannot normalize a state with non-positive mass")
    u = state.u * (target / mass)
    return HeatState(u, state.t, lattice.integrate(u), state.meta, drift=mass - target)


def _check(u, lattice, t):
    bad = ~np.isfinite(u) | (u <= 0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise StabilityError(
            f"positivity lost at t={t:.6g}: site {i} {np.round(lattice.site_coordinates(i), 6).tolist()} u={u[i]!r}"
        )


def step(state, lattice, dt, renormalize=True):
    """One Heun (SSP-RK2) step of u_t = -Δ_b u, then mass renormalization."""
    u = state.u
    u1 = u - dt * lattice.sublaplacian(u)
    u2 = u1 - dt * lattice.sublaplacian(u1)
    new = 0.5 * (u + u2)
    _check(new, lattice, state.t + dt)
    mass = lattice.integrate(new)
    drift = mass - state.mass
    if renormalize:
        new = new * (state.mass / mass)
        mass = state.mass
    return HeatState(new, state.t + dt, mass, state.meta, drift=drift)


def evolve(state, lattice, t_end, dt, checkpoints=(), callback=None):
    """Advance to ``t_end`` landing exactly on every checkpoint time.

    The requested ``dt`` is an upper bound; each interval between stops is
    split into equal steps.  ``callback(state, info)`` runs at every stop.
    Returns the final state and the per-step log rows.
    """
    stops = sorted({float(c) for c in checkpoints if state.t < c <= t_end} | {float(t_end)})
    log = []
    nstep = 0
    lo, hi = float(np.min(state.u)), float(np.max(state.u))
    for stop in stops:
        span = stop - state.t
        if span <= 0:
            continue
        k = int(np.ceil(span / dt - 1e-9))
        h = span / k
        for j in range(k):
            state = step(state, lattice, h)
            nstep += 1
            if j == k - 1:
                state = replace(state, t=stop)
            umin, umax = float(np.min(state.u)), float(np.max(state.u))
            log.append((nstep, state.t, state.mass, umin, umax, state.drift / h, umin >= lo - 1e-12 and umax <= hi + 1e-12))
            lo, hi = umin, umax
        if callback is not None:
            callback(state, {"steps": nstep})
    return state, log


# ---------------------------------------------------------------------------
# checkpoint files

MAGIC = b"QCHT"
VERSION = 1
_HEADER = struct.Struct("<4sIqqdd")


def write_checkpoint(path, state, lattice):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, lattice.nx, lattice.nw, state.t, state.mass))
        fh.write(np.ascontiguousarray(state.u, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Return (nx, nw, t, mass, u) from a checkpoint file."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, version, nx, nw, t, mass = _HEADER.unpack(head)
        if magic != MAGIC or version != VERSION:
            raise ValueError(f"{path}: not a version {VERSION} QCHT checkpoint")
        u = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    if u.size != nx**4 * nw**3:
        raise ValueError(f"{path}: truncated site data")
    return int(nx), int(nw), float(t), float(mass), u


def write_step_log(path, log):
    buf = io.StringIO()
    buf.write("step,t,mass,min_u,max_u,drift_rate,max_principle\n")
    for row in log:
        buf.write(f"{row[0]},{row[1]:.17g},{row[2]:.17g},{row[3]:.17g},{row[4]:.17g},{row[5]:.17g},{int(row[6])}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def config_hash(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
