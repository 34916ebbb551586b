"""Concrete qc-Einstein model spaces.

Two backends share one contract (:class:`QcModel`):

* ``qh-torus``: the compact quotient Γ\\G of the 7-dimensional quaternionic
  Heisenberg group by the integer lattice Γ = ℤ⁴ × ℤ³ acting on the left.
* ``sphere7``: the round 3-Sasakian sphere S⁷ ⊂ ℍ² = ℝ⁸.

A frame is returned as a ``(7, chart_dim)`` array whose rows are the
coordinate components of ``e_1..e_4, ξ_1, ξ_2, ξ_3``.  The horizontal rows
are ordered ``e, I_1 e, I_2 e, I_3 e`` so the structure matrices are the
constants :data:`STRUCTURE`.
"""

from __future__ import annotations

import math

import jax
import jax.numpy as jnp
import numpy as np

N_QC = 1

# Left multiplication by i, j, k on ℍ in the basis (1, i, j, k).  Column a is
# the image of the a-th basis vector, so ``STRUCTURE[s] @ v`` gives I_s v.
STRUCTURE = np.array(
    [
        [[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]],
        [[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]],
        [[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]],
    ],
    dtype=float,
)

# Coordinate rotations for the Heisenberg chart, wrt the left-invariant
# frame: E_a = SIGMA_a X_a makes the frame adapted (see qh_frame_coeffs).
SIGMA = np.array([1.0, -1.0, -1.0, -1.0])

# normalization η_s = ETA_CONST·(dω_s - ...) fixed by dη_s = 2 g(I_s ., .)
ETA_CONST = 0.5


class DomainError(ValueError):
    """A point or argument outside the model's domain."""


def quat_mul(a, b):
    """Hamilton product along the last axis (basis 1, i, j, k)."""
    a0, a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    b0, b1, b2, b3 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    xp = jnp if isinstance(a, jax.Array) or isinstance(b, jax.Array) else np
    return xp.stack(
        [
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ],
        axis=-1,
    )


def quat_conj(a):
    sign = np.array([1.0, -1.0, -1.0, -1.0])
    return a * sign


def twist(q, r):
    """2 Im(q̄ r), the ω-increment of the group law."""
    return 2.0 * quat_mul(quat_conj(q), r)[..., 1:]


def qh_mul(p, q, torus=False):
    """Group law (q, ω)·(q', ω') = (q + q', ω + ω' + 2 Im(q̄ q'))."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.concatenate([p[..., :4] + q[..., :4], p[..., 4:] + q[..., 4:] + twist(p[..., :4], q[..., :4])], axis=-1)
    if torus:
        out = QhTorus.reduce(out)
    return out


def qh_inverse(p):
    return -np.asarray(p, dtype=float)


def heisenberg_coeffs(x):
    """Table c[a, s] = 2 Im(q̄ e_a)_s; X_a = ∂_{x_a} + Σ_s c[a, s] ∂_{ω_s}."""
    xp = jnp if isinstance(x, jax.Array) else np
    eye = xp.eye(4)
    return twist(x[..., None, :], eye)


def qh_frame_coeffs(p):
    """Adapted left-invariant frame of the Heisenberg chart at ``p``.

    Rows are E_a = σ_a X_a (σ = (1, -1, -1, -1)) and ξ_s = 2 ∂_{ω_s}.  At the
    identity the horizontal rows are ±∂_{x_a}.
    """
    xp = jnp if isinstance(p, jax.Array) else np
    x = p[..., :4]
    c = heisenberg_coeffs(x) * SIGMA[:, None]
    hor = xp.concatenate([xp.broadcast_to(np.diag(SIGMA), c.shape[:-2] + (4, 4)), c], axis=-1)
    ver = xp.broadcast_to(np.concatenate([np.zeros((3, 4)), 2.0 * np.eye(3)], axis=1), c.shape[:-2] + (3, 7))
    return xp.concatenate([hor, ver], axis=-2)


class QcModel:
    """Contract shared by the models (n = 1, dimension 7)."""

    name = ""
    n = N_QC
    chart_dim = 7
    structure = STRUCTURE

    def check_point(self, p):
        raise NotImplementedError

    def gauge(self, p):
        """Non-differentiated data pinning the local frame near ``p``."""
        return np.zeros(self.chart_dim)

    def frame(self, p, gauge):
        raise NotImplementedError

    def coframe(self, p):
        """η_1, η_2, η_3 as ``(3, chart_dim)`` covectors."""
        raise NotImplementedError

    def connection_h(self, p, gauge):
        """g(∇_{E_A} e_b, e_c) as a ``(7, 4, 4)`` array."""
        raise NotImplementedError

    def components(self, F, v):
        """Frame components of the chart vector(s) ``v`` (last axis)."""
        raise NotImplementedError

    def sample_points(self, rng, count):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(self.name)


class QhTorus(QcModel):
    """Γ\\G for the quaternionic Heisenberg group G, chart (x_1..x_4, ω_1..ω_3)."""

    name = "qh-torus"
    chart_dim = 7
    eta_const = ETA_CONST

    def check_point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != 7 or not np.all(np.isfinite(p)):
            raise DomainError("qh-torus points are finite 7-vectors")
        return p

    @staticmethod
    def reduce(p):
        """Representative of Γ·p in the fundamental domain [0, 1)⁷."""
        p = np.asarray(p, dtype=float)
        m = -np.floor(p[..., :4])
        x = p[..., :4] + m
        w = p[..., 4:] + twist(m, p[..., :4])
        w = w - np.floor(w)
        x = np.where(x >= 1.0, 0.0, x)
        w = np.where(w >= 1.0, 0.0, w)
        return np.concatenate([x, w], axis=-1)

    def frame(self, p, gauge=None):
        return qh_frame_coeffs(p)

    def coframe(self, p):
        xp = jnp if isinstance(p, jax.Array) else np
        c = heisenberg_coeffs(p[..., :4])  # (4, 3)
        return self.eta_const * xp.concatenate([-c.T, xp.eye(3)], axis=-1)

    def connection_h(self, p, gauge=None):
        return jnp.zeros((7, 4, 4), dtype=p.dtype)

    def components(self, F, v):
        flat = v.reshape(-1, F.shape[0])
        return jnp.linalg.solve(F.T, flat.T).T.reshape(v.shape)

    def volume_density(self, p):
        """Vol_η = η₁∧η₂∧η₃∧ω^{2n} per unit coordinate volume."""
        F = np.asarray(self.frame(np.asarray(p, dtype=float)))
        return math.factorial(2 * self.n) / abs(np.linalg.det(F))

    def sample_points(self, rng, count):
        return rng.random((count, 7))


def _block_left(m):
    z = np.zeros((8, 8))
    z[:4, :4] = m
    z[4:, 4:] = m
    return z


class Sphere7(QcModel):
    """Round S⁷ ⊂ ℍ² with ξ_s(p) = L_s p, L_s = left multiplication by i, j, k."""

    name = "sphere7"
    chart_dim = 8
    mult = np.stack([_block_left(m) for m in STRUCTURE])

    def check_point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != 8 or not np.all(np.isfinite(p)):
            raise DomainError("sphere7 points are 8-vectors")
        if np.any(np.abs(np.linalg.norm(p, axis=-1) - 1.0) > 1e-12):
            raise DomainError("sphere7 points must have unit norm within 1e-12")
        return p

    def reeb(self, p):
        return jnp.einsum("sij,j->si", self.mult, p)

    def horizontal_projector(self, p):
        xi = self.reeb(p)
        return jnp.eye(8) - jnp.outer(p, p) - xi.T @ xi

    def gauge(self, p):
        """Ambient basis vector with the largest horizontal projection at p."""
        p = np.asarray(p, dtype=float)
        P = np.asarray(self.horizontal_projector(jnp.asarray(p)))
        k = int(np.argmax(np.einsum("ii->i", P)))
        return np.eye(8)[k]

    def frame(self, p, gauge):
        e = self.horizontal_projector(p) @ gauge
        e = e / jnp.sqrt(e @ e)
        hor = jnp.concatenate([e[None], jnp.einsum("sij,j->si", self.mult, e)])
        return jnp.concatenate([hor, self.reeb(p)])

    def coframe(self, p):
        return self.reeb(p)

    def connection_h(self, p, gauge):
        F = self.frame(p, gauge)
        dF = jax.jacfwd(self.frame)(p, gauge)  # dF[B, i, j] = ∂_j F_B^i
        DE = jnp.einsum("bij,aj->abi", dF[:4], F)  # D_{E_A} e_b
        DE = DE - jnp.concatenate([jnp.zeros((4, 4, 8)), jnp.einsum("sij,bj->sbi", self.mult, F[:4])])
        return jnp.einsum("abi,ci->abc", DE, F[:4])

    def components(self, F, v):
        return v @ F.T

    def sample_points(self, rng, count):
        g = rng.standard_normal((count, 8))
        return g / np.linalg.norm(g, axis=1, keepdims=True)


_MODELS = {"qh-torus": QhTorus, "sphere7": Sphere7}


def get_model(name):
    try:
        return _MODELS[name]()
    except KeyError:
        raise DomainError(f"unknown model {name!r}; choose from {sorted(_MODELS)}") from None


def model_names():
    return sorted(_MODELS)


def sphere_connection(model, p, A, B):
    """Biquard derivative ∇_A B on S⁷ for a tangent vector A and field B(p)."""
    from .geometry import covariant_derivative

    if not isinstance(model, Sphere7):
        raise DomainError("sphere_connection needs the sphere7 model")
    return covariant_derivative(model, p, A, B)
