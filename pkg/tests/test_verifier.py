import numpy as np
import pytest
import sympy as sp

from qcheat import verifier as V
from qcheat.initial import initial_data
from qcheat.lattice import Lattice7, evolve, make_state, normalize


def _sym_constants(n, k, a):
    n, k, a, t = sp.Integer(n), sp.nsimplify(k), sp.nsimplify(a), sp.Symbol("t", positive=True)
    al = (9 + 2 * n) / (2 * n)
    ak = (9 + 2 * n * (k + 1)) / (2 * n)
    return {
        "alpha": al,
        "alpha_k": ak,
        "rhs1": 2 * n * al**2 / t,
        "rhs2": n * ak**2 * (k + 2) / t + 8 * n**2 * ak**2 * (k + 2) / (k + 3),
        "nash": 2 * n * (al - 1) * al**2 * a,
        "perelman": 2 * (2 * n - n * a + 6) * al**2,
        "integral": n * al**2 * a / 2,
        "t": t,
    }


@pytest.mark.parametrize("n,k,a", [(1, 1.0, 1.0), (1, 0.0, 8.0), (2, 2.5, 5.0), (3, 1.0, 4.0)])
def test_constants_match_symbolic(n, k, a):
    c = _sym_constants(n, k, a)
    t = 0.37
    assert V.alpha_ly(n) == pytest.approx(float(c["alpha"]), rel=1e-15)
    assert V.alpha_k(n, k) == pytest.approx(float(c["alpha_k"]), rel=1e-15)
    assert V.rhs_liyau(t, n) == pytest.approx(float(c["rhs1"].subs(c["t"], t)), rel=1e-14)
    assert V.rhs_liyau_k(t, n, k) == pytest.approx(float(c["rhs2"].subs(c["t"], t)), rel=1e-14)
    assert V.nash_constant(n, a) == pytest.approx(float(c["nash"]), rel=1e-14)
    assert V.perelman_constant(n, a) == pytest.approx(float(c["perelman"]), rel=1e-14, abs=1e-14)
    assert V.integral_subgrad_constant(n, a) == pytest.approx(float(c["integral"]), rel=1e-14)


def test_constants_at_n1():
    assert V.alpha_ly() == 5.5
    assert V.alpha_k(1, 1.0) == 6.5
    assert V.rhs_liyau(1.0) == 60.5
    assert V.rhs_liyau_k(1.0) == 126.75 + 253.5
    assert V.nash_constant(1, 1.0) == 272.25
    assert V.perelman_constant(1, 8.0) == 0.0
    assert V.integral_subgrad_constant(1, 1.0) == 15.125


def test_finite_differences_exact_on_quadratics():
    t = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    y = 3 * t**2 - 2 * t + 1
    assert np.allclose(V._ddt(t, y), 6 * t - 2, atol=1e-12)
    d2 = V._d2dt2(t, y)
    assert np.isnan(d2[0]) and np.isnan(d2[-1])
    assert np.allclose(d2[1:-1], 6.0, atol=1e-9)


# ---------------------------------------------------------------------------
# checkpoint summaries


@pytest.fixture(scope="module")
def lat():
    return Lattice7(4, 4)


def test_constant_solution_margins(lat):
    cfg = V.EstimateConfig()
    u = np.full(lat.size, 4.0)
    for t in (0.05, 0.2, 0.5):
        s = V.summarize(lat, t, u, cfg)
        assert s.lhs1 == pytest.approx(0.0, abs=1e-12)
        assert s.margin1 == pytest.approx(60.5 / t, rel=1e-14)
        assert s.margin2 == pytest.approx(126.75 / t + 253.5, rel=1e-14)
        assert s.Gdu == pytest.approx(0.0, abs=1e-12)
    rows = V.integral_subgrad_check([V.summarize(lat, 0.1, u, cfg)], cfg)
    assert rows[0].passed and rows[0].rhs == pytest.approx(4 * V.integral_subgrad_constant() / 0.1)


def test_nonpositive_u_rejected(lat):
    u = np.ones(lat.size)
    u[7] = 0.0
    with pytest.raises(V.PreconditionError):
        V.summarize(lat, 0.1, u, V.EstimateConfig())


def test_subgrad_report_respects_time_window(lat):
    cfg = V.EstimateConfig(t_min=0.1, t_max=0.2)
    u = np.ones(lat.size)
    sums = [V.summarize(lat, t, u, cfg) for t in (0.05, 0.1, 0.15, 0.3)]
    rep = V.subgrad_report(sums, cfg)
    assert sorted({r.t for r in rep.rows}) == [0.1, 0.15]
    assert rep.passed
    assert rep.worst("liyau").t == 0.15


def test_pass_flag_uses_relative_slack():
    cfg = V.EstimateConfig()
    rhs = V.rhs_liyau(0.1)
    s = V.CheckpointSummary(0.1, 1.0, -0.9e-3 * rhs, 0, 0, 1.0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0)
    assert V.subgrad_report([s], cfg).rows[0].passed
    s.margin1 = -1.1e-3 * rhs
    assert not V.subgrad_report([s], cfg).rows[0].passed


# ---------------------------------------------------------------------------
# entropy functionals along a short trajectory


@pytest.fixture(scope="module")
def trajectory(lat):
    cfg = V.EstimateConfig(t_min=0.05, t_max=0.08)
    times = [round(0.05 + 0.0025 * i, 12) for i in range(13)]
    st = normalize(make_state(lat, initial_data(lat, "mixed", 3)), lat)
    sums = []
    evolve(st, lat, times[-1], lat.stable_dt(), checkpoints=times,
           callback=lambda s, _: sums.append(V.summarize(lat, s.t, s.u, cfg)))
    return cfg, sums


def test_entropy_requires_normalized(lat):
    cfg = V.EstimateConfig()
    sums = [V.summarize(lat, t, np.full(lat.size, 2.0), cfg) for t in (0.1, 0.2, 0.3)]
    with pytest.raises(V.PreconditionError):
        V.entropy_trace(sums, cfg, 1.0)


def test_entropy_checks_pass_on_trajectory(trajectory):
    cfg, sums = trajectory
    traces = [V.entropy_trace(sums, cfg, a) for a in cfg.a_values]
    rows = [r for tr in traces for r in V.entropy_rows(tr, cfg)] + V.a_monotone_rows(traces, cfg)
    failed = [r for r in rows if not r.passed]
    assert not failed, failed[:3]
    checks = {r.check.split("[")[0] for r in rows}
    assert {"dertN", "WNT", "dertW", "nash-dNt", "nash-integrand", "perelman-chain", "perelman-bound", "nash-a-monotone"} <= checks
    assert traces[-1].const_term == 0.0


def test_subgradient_estimates_on_trajectory(trajectory):
    cfg, sums = trajectory
    rows = V.subgrad_report(sums, cfg).rows + V.integral_subgrad_check(sums, cfg)
    assert all(r.passed for r in rows)


def test_nash_integrand_decreases_with_a(trajectory):
    cfg, sums = trajectory
    vals = [V.entropy_trace(sums, cfg, a).integrand for a in (1.0, 2.0, 8.0)]
    assert np.all(np.diff(np.array(vals), axis=0) <= 1e-12)


# ---------------------------------------------------------------------------
# output


def test_rows_csv_and_summary():
    rows = [V.Row(0.1, "liyau", 1.0, 605.0, 604.0, True), V.Row(0.2, "liyau", 2.0, 302.5, -1.0, False)]
    text = V.rows_csv(rows)
    assert text.splitlines()[0] == "t,check,lhs,rhs,margin,pass"
    assert text.splitlines()[2].endswith(",0")
    summary = V.summary_text(rows)
    assert "FAIL(1)" in summary and "overall FAIL" in summary
    assert "worst_margin=-1.000000e+00" in summary
