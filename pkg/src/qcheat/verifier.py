"""Sub-gradient estimates and entropy functionals along lattice trajectories.

Each checkpoint is reduced to a :class:`CheckpointSummary` (site-wise margins
and the integrals the functionals need), so a full run never holds more than
one snapshot in memory.  Time derivatives of the functionals are taken by
finite differences of the u-dependent integrals only; terms with explicit
t-dependence (ln 4πt, 1/t, t factors) are differentiated exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .geometry import casimir_project, sq_norm

NORM_TOL = 1e-10


def alpha_ly(n=1):
    """Li-Yau constant α = (9 + 2n)/(2n)."""
    return (9 + 2 * n) / (2 * n)


def alpha_k(n=1, k=1.0):
    """α_k = (9 + 2n(k + 1))/(2n)."""
    return (9 + 2 * n * (k + 1)) / (2 * n)


def rhs_liyau(t, n=1):
    return 2 * n * alpha_ly(n) ** 2 / t


def rhs_liyau_k(t, n=1, k=1.0):
    ak = alpha_k(n, k)
    return n * ak**2 * (k + 2) / t + 8 * n**2 * ak**2 * (k + 2) / (k + 3)


def nash_constant(n=1, a=1.0):
    """2n(α − 1)α²a, the coefficient of 1/t in the Nash integrand."""
    al = alpha_ly(n)
    return 2 * n * (al - 1) * al**2 * a


def perelman_constant(n=1, a=8.0):
    """2(2n − na + 6)α², the coefficient of 1/t in B(t)."""
    return 2 * (2 * n - n * a + 6) * alpha_ly(n) ** 2


def integral_subgrad_constant(n=1, a=1.0):
    """C = nα²a/2 in ∫|∇_b u^{1/2}|² ≤ C/t."""
    return n * alpha_ly(n) ** 2 * a / 2


class PreconditionError(ValueError):
    """Trajectory violating a precondition (positivity, normalization)."""


@dataclass(frozen=True)
class EstimateConfig:
    n: int = 1
    k: float = 1.0
    a_values: tuple = (1.0, 2.0, 8.0)
    c: float = 8.0 / 3.0
    t_min: float = 0.05
    t_max: float = 0.5
    rel_slack: float = 1e-3
    mono_tol: float = 1e-6

    @property
    def alpha(self):
        return alpha_ly(self.n)

    @property
    def alpha_k(self):
        return alpha_k(self.n, self.k)


@dataclass
class CheckpointSummary:
    t: float
    mass: float
    margin1: float
    margin1_site: int
    lhs1: float
    margin2: float
    margin2_site: int
    lhs2: float
    f_max: float
    N: float  # −∫u ln u
    G: float  # ∫u|∇_b f|²
    Gdu: float  # ∫|∇_b u|²/u
    Vv: float  # ∫u|∇_v f|²
    P: float  # ∫u|(∇²f)_[-1][sym]|²
    Q: float  # ∫u(Δ_b f)²
    dtf: float  # ∫u ∂_t f
    coords1: tuple = ()
    coords2: tuple = ()


def site_diagnostics(lattice, u, t):
    """Per-site f = ln u, gradients, ∂_t f and Hessian data."""
    u = np.asarray(u, dtype=float).ravel()
    if not np.all(u > 0):
        raise PreconditionError("u must be positive at every site")
    f = np.log(u)
    Du = lattice.frame_derivatives(u)
    Df = lattice.frame_derivatives(f)
    Vf = lattice.vertical_derivatives(f)
    lap_u = -lattice.divergence(Du)
    H = np.empty((4, 4, lattice.size))
    for b in range(4):
        H[:, b] = lattice.frame_derivatives(Df[b])  # H[a, b] = D_a D_b f
    Hs = np.moveaxis(H, -1, 0)
    _, _, tm1_sym, _ = casimir_project(Hs)
    return {
        "u": u,
        "f": f,
        "Du": Du,
        "grad2": np.einsum("as,as->s", Df, Df),
        "vgrad2": np.einsum("as,as->s", Vf, Vf),
        "dtf": -lap_u / u,
        "lap_f": -np.einsum("aas->s", H),
        "m1sym2": sq_norm(tm1_sym),
    }


def summarize(lattice, t, u, cfg):
    """Reduce one checkpoint to margins and functional integrals."""
    d = site_diagnostics(lattice, u, t)
    n, al, ak = cfg.n, cfg.alpha, cfg.alpha_k
    lhs1 = d["grad2"] - al * d["dtf"] + (8 * n / 3) * t * d["vgrad2"]
    m1 = rhs_liyau(t, n) - lhs1
    lhs2 = d["grad2"] - ak * d["dtf"]
    m2 = rhs_liyau_k(t, n, cfg.k) - lhs2
    F = t * (d["grad2"] - al * d["dtf"] + cfg.c * t * d["vgrad2"])
    i1, i2 = int(np.argmin(m1)), int(np.argmin(m2))
    u = d["u"]
    integ = lattice.integrate
    return CheckpointSummary(
        t=float(t),
        mass=integ(u),
        margin1=float(m1[i1]),
        margin1_site=i1,
        lhs1=float(lhs1[i1]),
        margin2=float(m2[i2]),
        margin2_site=i2,
        lhs2=float(lhs2[i2]),
        f_max=float(np.max(F)),
        N=-integ(u * d["f"]),
        G=integ(u * d["grad2"]),
        Gdu=integ(np.einsum("as,as->s", d["Du"], d["Du"]) / u),
        Vv=integ(u * d["vgrad2"]),
        P=integ(u * d["m1sym2"]),
        Q=integ(u * d["lap_f"] ** 2),
        dtf=integ(u * d["dtf"]),
        coords1=tuple(np.round(lattice.site_coordinates(i1), 6)),
        coords2=tuple(np.round(lattice.site_coordinates(i2), 6)),
    )


# ---------------------------------------------------------------------------
# reports


@dataclass
class Row:
    t: float
    check: str
    lhs: float
    rhs: float
    margin: float
    passed: bool


@dataclass
class EstimateReport:
    rows: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.rows)

    def worst(self, check):
        rows = [r for r in self.rows if r.check == check]
        return min(rows, key=lambda r: r.margin) if rows else None


def _in_range(s, cfg):
    return cfg.t_min - 1e-12 <= s.t <= cfg.t_max + 1e-12


def subgrad_report(summaries, cfg):
    rep = EstimateReport()
    for s in summaries:
        if not _in_range(s, cfg):
            continue
        r1, r2 = rhs_liyau(s.t, cfg.n), rhs_liyau_k(s.t, cfg.n, cfg.k)
        rep.rows.append(Row(s.t, "liyau", s.lhs1, r1, s.margin1, s.margin1 >= -cfg.rel_slack * r1))
        rep.rows.append(Row(s.t, "liyau-k", s.lhs2, r2, s.margin2, s.margin2 >= -cfg.rel_slack * r2))
        fr = s.t * r1
        rep.rows.append(Row(s.t, "testF-max", s.f_max, fr, fr - s.f_max, fr - s.f_max >= -cfg.rel_slack * fr))
    return rep


def _ddt(t, y):
    """First derivative: centered inside, one-sided second order at the ends."""
    t, y = np.asarray(t), np.asarray(y)
    d = np.empty_like(y)
    d[1:-1] = (y[2:] - y[:-2]) / (t[2:] - t[:-2])
    d[0] = (-3 * y[0] + 4 * y[1] - y[2]) / (t[2] - t[0])
    d[-1] = (3 * y[-1] - 4 * y[-2] + y[-3]) / (t[-1] - t[-3])
    return d


def _d2dt2(t, y):
    t, y = np.asarray(t), np.asarray(y)
    d = np.full_like(y, np.nan)
    h = 0.5 * (t[2:] - t[:-2])
    d[1:-1] = (y[2:] - 2 * y[1:-1] + y[:-2]) / h**2
    return d


@dataclass
class EntropyTrace:
    a: float
    t: np.ndarray
    N: np.ndarray
    Nt: np.ndarray  # Ñ
    W: np.ndarray
    Wt: np.ndarray  # W̃
    dN: np.ndarray
    dNt: np.ndarray
    dW: np.ndarray
    dWt: np.ndarray
    integrand: np.ndarray  # Nash entropy integrand
    B: np.ndarray
    crossN: np.ndarray  # ∫u|∇_bφ|²
    dtNt_W: np.ndarray  # d/dt(tÑ)
    dW_rel: np.ndarray  # 2Ñ' + tÑ''
    const_term: float


def _check_normalized(summaries):
    for s in summaries:
        if abs(s.mass - 1.0) > NORM_TOL:
            raise PreconditionError(f"trajectory not normalized at t={s.t}: mass={s.mass!r}")


def entropy_trace(summaries, cfg, a, S=0.0):
    """Nash and Perelman functionals for one value of a."""
    _check_normalized(summaries)
    n, al = cfg.n, cfg.alpha
    c = 2 * n * al**2 * a
    t = np.array([s.t for s in summaries])
    N = np.array([s.N for s in summaries])
    G = np.array([s.G for s in summaries])
    V = np.array([s.Vv for s in summaries])
    P = np.array([s.P for s in summaries])
    Q = np.array([s.Q for s in summaries])
    dtf = np.array([s.dtf for s in summaries])
    lg = np.log(4 * np.pi * t)

    Nt = N - c * (lg + 1)
    # ∫φu = N − c ln 4πt for normalized u, since φ = −ln u − c ln 4πt
    W = t * G + (N - c * lg) - 2 * c
    Wt = W + 4 * n * t**2 * V

    dN, dG, dV = _ddt(t, N), _ddt(t, G), _ddt(t, V)
    d2N = _d2dt2(t, N)
    dNt = dN - c / t
    dW = G + t * dG + dN - c / t
    dWt = dW + 8 * n * t * V + 4 * n * t**2 * dV
    # ∫u ∂_tφ = −∫u ∂_t f − c/t
    integrand = G + al * (-dtf - c / t) + nash_constant(n, a) / t
    const = perelman_constant(n, a)
    B = -2 * t * P - (t / (2 * n)) * Q - 4 * (n + 2) * S * t * G + const / t
    return EntropyTrace(
        a=a, t=t, N=N, Nt=Nt, W=W, Wt=Wt, dN=dN, dNt=dNt, dW=dW, dWt=dWt,
        integrand=integrand, B=B, crossN=G,
        dtNt_W=Nt + t * dNt, dW_rel=2 * dNt + t * (d2N + c / t**2), const_term=const,
    )


def _close(x, y, abs_tol, rel_tol):
    tol = max(abs_tol, rel_tol * max(abs(x), abs(y)))
    return tol - abs(x - y), tol


def entropy_rows(tr, cfg):
    """Pass/fail rows for the entropy checks at interior checkpoints."""
    rows = []
    tol = cfg.mono_tol
    for i in range(1, len(tr.t) - 1):
        t = float(tr.t[i])
        if not (cfg.t_min - 1e-12 <= t <= cfg.t_max + 1e-12):
            continue
        tag = f"a={tr.a:g}"
        m, _ = _close(tr.dN[i], tr.crossN[i], 1e-4, 1e-2)
        rows.append(Row(t, f"dertN[{tag}]", tr.dN[i], tr.crossN[i], m, m >= 0))
        m, _ = _close(tr.W[i], tr.dtNt_W[i], 1e-3, 1e-2)
        rows.append(Row(t, f"WNT[{tag}]", tr.W[i], tr.dtNt_W[i], m, m >= 0))
        m, _ = _close(tr.dW[i], tr.dW_rel[i], 1e-3, 1e-2)
        rows.append(Row(t, f"dertW[{tag}]", tr.dW[i], tr.dW_rel[i], m, m >= 0))
        if tr.a >= 1:
            rows.append(Row(t, f"nash-dNt[{tag}]", tr.dNt[i], 0.0, -tr.dNt[i], tr.dNt[i] <= tol))
            rows.append(Row(t, f"nash-integrand[{tag}]", tr.integrand[i], 0.0, -tr.integrand[i], tr.integrand[i] <= tol))
        if tr.a >= (2 * cfg.n + 6) / cfg.n:
            slack = max(1e-3, 1e-2 * abs(tr.B[i]))
            m = tr.B[i] + slack - tr.dWt[i]
            rows.append(Row(t, f"perelman-chain[{tag}]", tr.dWt[i], tr.B[i], m, m >= 0))
            rows.append(Row(t, f"perelman-bound[{tag}]", tr.B[i], 0.0, -tr.B[i], tr.B[i] <= tol))
    return rows


def a_monotone_rows(traces, cfg):
    """The Nash integrand is non-increasing in a at every interior checkpoint."""
    rows = []
    traces = sorted(traces, key=lambda tr: tr.a)
    for i in range(1, len(traces[0].t) - 1):
        t = float(traces[0].t[i])
        if not (cfg.t_min - 1e-12 <= t <= cfg.t_max + 1e-12):
            continue
        vals = [tr.integrand[i] for tr in traces]
        worst = min(vals[j] - vals[j + 1] for j in range(len(vals) - 1))
        rows.append(Row(t, "nash-a-monotone", vals[0], vals[-1], worst, worst >= -1e-12))
    return rows


def integral_subgrad_check(summaries, cfg, a=1.0):
    """4∫|∇_b u^{1/2}|² = ∫|∇_b u|²/u against 2nα²a/t."""
    rows = []
    for s in summaries:
        if not _in_range(s, cfg):
            continue
        rhs = 2 * cfg.n * cfg.alpha**2 * a / s.t
        m = rhs * (1 + cfg.rel_slack) - s.Gdu
        rows.append(Row(s.t, "integral-subgrad", s.Gdu, rhs, m, m >= 0))
    return rows


# ---------------------------------------------------------------------------
# output


def rows_csv(rows):
    buf = io.StringIO()
    buf.write("t,check,lhs,rhs,margin,pass\n")
    for r in rows:
        buf.write(f"{r.t:.17g},{r.check},{r.lhs:.17g},{r.rhs:.17g},{r.margin:.17g},{int(bool(r.passed))}\n")
    return buf.getvalue()


def trace_csv(traces):
    buf = io.StringIO()
    cols = ["a", "t", "N", "Ntilde", "W", "Wtilde", "dN", "dNtilde", "dW", "dWtilde", "integrand", "B", "int_u_grad_phi2", "ddt_tNtilde", "dW_relation"]
    buf.write(",".join(cols) + "\n")
    for tr in traces:
        for i in range(len(tr.t)):
            vals = [tr.a, tr.t[i], tr.N[i], tr.Nt[i], tr.W[i], tr.Wt[i], tr.dN[i], tr.dNt[i], tr.dW[i], tr.dWt[i], tr.integrand[i], tr.B[i], tr.crossN[i], tr.dtNt_W[i], tr.dW_rel[i]]
            buf.write(",".join(f"{v:.17g}" for v in vals) + "\n")
    return buf.getvalue()


CHECK_TITLES = {
    "liyau": "Li-Yau estimate (alpha = 11/2)",
    "liyau-k": "Li-Yau estimate with k",
    "testF-max": "test function F",
    "integral-subgrad": "integral sub-gradient estimate",
    "dertN": "dN/dt cross-check",
    "WNT": "W = d/dt(t Ntilde)",
    "dertW": "dW/dt relation",
    "nash-dNt": "Nash entropy monotonicity",
    "nash-integrand": "Nash entropy integrand",
    "nash-a-monotone": "Nash integrand monotone in a",
    "perelman-chain": "Perelman chain dWtilde/dt <= B",
    "perelman-bound": "Perelman bound B <= 0",
    "mass-drift": "mass drift per unit time before renormalization",
}


def summary_text(rows):
    """Plain-text block with the worst margin per check family."""
    fams = {}
    for r in rows:
        key = r.check.split("[")[0]
        if key not in fams or r.margin < fams[key].margin:
            fams[key] = r
    fails = {}
    for r in rows:
        key = r.check.split("[")[0]
        fails[key] = fails.get(key, 0) + (0 if r.passed else 1)
    lines = ["[summary]"]
    for key in sorted(fams):
        r = fams[key]
        status = "PASS" if fails[key] == 0 else f"FAIL({fails[key]})"
        lines.append(f"{key:<22} {status:<9} worst_margin={r.margin:.6e} at t={r.t:.6g}  # {CHECK_TITLES.get(key, '')}")
    lines.append(f"overall {'PASS' if all(r.passed for r in rows) else 'FAIL'}")
    return "\n".join(lines) + "\n"
