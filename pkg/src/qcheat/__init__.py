"""Quaternionic contact geometry engine and sub-Riemannian heat solver.

Sign convention: the sub-Laplacian is the *positive* operator
``Δ_b f = -Σ_a ∇²f(e_a, e_a)`` and the heat equation reads ``u_t = -Δ_b u``.
"""

import jax

jax.config.update("jax_enable_x64", True)

from .models import QhTorus, Sphere7, get_model, qh_mul, qh_frame_coeffs  # noqa: E402

__version__ = "0.1.0"

__all__ = ["QhTorus", "Sphere7", "get_model", "qh_mul", "qh_frame_coeffs", "__version__"]
