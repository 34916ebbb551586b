"""Heat-flow runs with estimate verification, and re-verification from disk.

Output directory layout::

    config.ini        resolved configuration (canonical text)
    steps.csv         per-step log: t, mass, min/max u, drift rate
    estimates.csv     one row per (t, check)
    entropy.csv       functionals and their time derivatives per a
    summary.txt       worst margin per check family
    checkpoints/      binary snapshots, every save_every-th checkpoint
"""

from __future__ import annotations

import glob
import os
from dataclasses import dataclass

import numpy as np

from . import verifier as V
from .initial import initial_data
from .lattice import (
    Lattice7,
    StabilityError,
    config_hash,
    evolve,
    make_state,
    normalize,
    read_checkpoint,
    write_checkpoint,
    write_step_log,
)

# arrays of lattice size alive at once in the per-checkpoint diagnostics
_ARRAYS_PER_SITE = 96
# explicit RK2 is stable on the real spectrum for dt·ρ ≤ 2; demand half of it
RK2_LIMIT = 1.0
DRIFT_TOL = 1e-6


class ResourceError(RuntimeError):
    """The requested grid does not fit in the available memory."""


def available_memory():
    """Bytes available to this process: MemAvailable capped by a cgroup limit."""
    avail = None
    try:
        with open("/proc/meminfo", encoding="ascii") as fh:
            for line in fh:
                if line.startswith("MemAvailable:"):
                    avail = int(line.split()[1]) * 1024
    except OSError:
        pass
    for path in ("/sys/fs/cgroup/memory.max", "/sys/fs/cgroup/memory/memory.limit_in_bytes"):
        try:
            with open(path, encoding="ascii") as fh:
                raw = fh.read().strip()
        except OSError:
            continue
        if raw.isdigit():
            limit = int(raw)
            avail = limit if avail is None else min(avail, limit)
    return avail


def required_memory(nx, nw):
    return nx**4 * nw**3 * 8 * _ARRAYS_PER_SITE


def check_memory(nx, nw):
    need, avail = required_memory(nx, nw), available_memory()
    if avail is not None and need > avail:
        raise ResourceError(
            f"grid N_x={nx} N_omega={nw} needs about {need / 2**30:.1f} GiB, only {avail / 2**30:.1f} GiB available"
        )
    return need


@dataclass
class RunResult:
    rows: list
    traces: list
    summaries: list
    passed: bool
    worst_drift: float


def _estimate_config(cfg):
    return V.EstimateConfig(k=cfg.k, a_values=tuple(cfg.a), c=cfg.c, t_min=cfg.t_min, t_max=cfg.t_max)


def time_step(cfg, lattice):
    """Resolve the dt policy and validate it against the stencil's spectral radius."""
    dt = lattice.stable_dt() if cfg.dt == "auto" else float(cfg.dt)
    rho = lattice.spectral_radius(iterations=50)
    if dt * rho > RK2_LIMIT:
        raise StabilityError(f"dt={dt:.6g} with spectral radius {rho:.6g} gives dt*rho={dt * rho:.3g} > {RK2_LIMIT}")
    return dt, rho


def check_rows(summaries, ecfg, drift_by_t=None, entropy=True):
    """All estimate and entropy rows for a sequence of checkpoint summaries."""
    rows = list(V.subgrad_report(summaries, ecfg).rows)
    rows += V.integral_subgrad_check(summaries, ecfg, a=1.0)
    traces = []
    if entropy and len(summaries) >= 3:
        traces = [V.entropy_trace(summaries, ecfg, a) for a in ecfg.a_values]
        for tr in traces:
            rows += V.entropy_rows(tr, ecfg)
        if len(traces) > 1:
            rows += V.a_monotone_rows(traces, ecfg)
    for t, drift in (drift_by_t or {}).items():
        rows.append(V.Row(t, "mass-drift", drift, DRIFT_TOL, DRIFT_TOL - drift, drift <= DRIFT_TOL))
    return rows, traces


def write_outputs(out_dir, rows, traces, prefix=""):
    with open(os.path.join(out_dir, prefix + "estimates.csv"), "w", encoding="utf-8") as fh:
        fh.write(V.rows_csv(rows))
    if traces:
        with open(os.path.join(out_dir, prefix + "entropy.csv"), "w", encoding="utf-8") as fh:
            fh.write(V.trace_csv(traces))
    text = V.summary_text(rows)
    with open(os.path.join(out_dir, prefix + "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


def run_solve(cfg, out_dir, log=print):
    """Evolve the configured initial data, verify every checkpoint, write outputs."""
    check_memory(cfg.nx, cfg.nw)
    os.makedirs(os.path.join(out_dir, "checkpoints"), exist_ok=True)
    with open(os.path.join(out_dir, "config.ini"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())

    lattice = Lattice7(cfg.nx, cfg.nw)
    dt, rho = time_step(cfg, lattice)
    log(f"lattice {lattice.describe()} dt={dt:.6g} dt*rho={dt * rho:.3g}")
    ecfg = _estimate_config(cfg)
    times = cfg.checkpoint_times
    state = normalize(make_state(lattice, initial_data(lattice, cfg.init, cfg.seed), meta=config_hash(cfg.to_text())), lattice)

    summaries = []

    def on_checkpoint(st, info):
        i = len(summaries)
        summaries.append(V.summarize(lattice, st.t, st.u, ecfg))
        if i % cfg.save_every == 0 or i == len(times) - 1:
            write_checkpoint(os.path.join(out_dir, "checkpoints", f"ckpt_{i:05d}.qcht"), st, lattice)

    state, step_log = evolve(state, lattice, times[-1], dt, checkpoints=times, callback=on_checkpoint)
    # worst drift per unit time over the steps leading to each checkpoint
    drift = {}
    k = 0
    for row in step_log:
        t = row[1]
        while k < len(times) and times[k] < t - 1e-12:
            k += 1
        if k < len(times):
            key = times[k]
            drift[key] = max(drift.get(key, 0.0), abs(row[5]))
    write_step_log(os.path.join(out_dir, "steps.csv"), step_log)

    rows, traces = check_rows(summaries, ecfg, drift)
    text = write_outputs(out_dir, rows, traces)
    log(text.rstrip())
    worst = max(abs(r[5]) for r in step_log) if step_log else 0.0
    return RunResult(rows, traces, summaries, all(r.passed for r in rows), worst)


def run_verify(run_dir, cfg, log=print):
    """Recompute the estimate checks from the checkpoints stored in ``run_dir``."""
    paths = sorted(glob.glob(os.path.join(run_dir, "checkpoints", "*.qcht")))
    if not paths:
        raise FileNotFoundError(f"no checkpoints under {run_dir}")
    ecfg = _estimate_config(cfg)
    lattice = None
    summaries = []
    for path in paths:
        nx, nw, t, mass, u = read_checkpoint(path)
        if lattice is None:
            check_memory(nx, nw)
            lattice = Lattice7(nx, nw)
        elif (nx, nw) != (lattice.nx, lattice.nw):
            raise ValueError(f"{path}: grid differs from the other checkpoints")
        summaries.append(V.summarize(lattice, t, u, ecfg))
    # the entropy checks difference across checkpoints, so they need the run's spacing
    gaps = np.diff([s.t for s in summaries])
    dense = len(gaps) > 0 and bool(np.all(np.abs(gaps - cfg.checkpoint_dt) < 1e-9))
    rows, traces = check_rows(summaries, ecfg, entropy=dense)
    text = write_outputs(run_dir, rows, traces, prefix="verify_")
    log(f"verified {len(paths)} checkpoints")
    if not dense:
        log("entropy checks skipped: they need every checkpoint on disk (save_every = 1)")
    log(text.rstrip())
    return RunResult(rows, traces, summaries, all(r.passed for r in rows), float("nan"))


def read_rows_csv(path):
    """Rows of an estimates CSV as :class:`Row` objects."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != ["t", "check", "lhs", "rhs", "margin", "pass"]:
            raise ValueError(f"{path}: not an estimates CSV")
        for line in fh:
            t, check, lhs, rhs, margin, ok = line.rstrip("\n").split(",")
            rows.append(V.Row(float(t), check, float(lhs), float(rhs), float(margin), ok == "1"))
    return rows
