"""Command-line entry point: ``qcheat {identities,solve,verify,report}``.

Exit codes: 0 pass, 1 check failure, 2 usage or configuration error,
3 numerical instability.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_UNSTABLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _threads_ok():
    env = os.environ.get("QCHEAT_THREADS")
    if env is None or env == "":
        return
    try:
        ok = int(env) >= 1
    except ValueError:
        ok = False
    if not ok:
        raise UsageError(f"QCHEAT_THREADS must be a positive integer, got {env!r}")


# ---------------------------------------------------------------------------
# identities


def cmd_identities(args):
    from . import identities as I
    from .models import model_names

    if args.model not in model_names():
        raise UsageError(f"unknown model {args.model!r}; choose from {', '.join(model_names())}")
    checks = args.checks or I.check_ids()
    unknown = [c for c in checks if c not in I.REGISTRY]
    if unknown:
        raise UsageError(f"unknown check id(s): {', '.join(unknown)}")
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    reports = []
    for check in checks:
        rep = I.run_check(check, args.model, args.samples, args.seed, args.tol)
        print(rep.verdict(), flush=True)
        reports.append(rep)
    out = args.csv or os.path.join(args.out, f"identities_{args.model}.csv")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(I.reports_csv(reports))
    failed = [r.check_id for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed on {args.model}; csv: {out}")
    return EXIT_FAIL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# solve / verify


def _run_config(args):
    from .config import RunConfig

    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {
        "nx": args.grid[0] if args.grid else None,
        "nw": args.grid[1] if args.grid else None,
        "dt": args.dt,
        "t_min": args.t_min,
        "t_max": args.t_max,
        "checkpoint_dt": args.checkpoint_dt,
        "save_every": args.save_every,
        "init": args.init,
        "seed": args.seed,
        "k": args.k,
        "a": args.a,
        "c": args.c,
        "out": args.out,
    }
    return cfg.updated(overrides)


def cmd_solve(args):
    from .runner import run_solve

    cfg = _run_config(args)
    result = run_solve(cfg, cfg.out)
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_verify(args):
    from .config import RunConfig
    from .runner import run_verify

    path = os.path.join(args.run_dir, "config.ini")
    cfg = RunConfig.load(path) if os.path.exists(path) else RunConfig()
    result = run_verify(args.run_dir, cfg)
    return EXIT_OK if result.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# report


def _csv_files(paths):
    files = []
    for p in paths:
        if os.path.isdir(p):
            files += sorted(glob.glob(os.path.join(p, "*.csv")))
        elif os.path.exists(p):
            files.append(p)
        else:
            raise UsageError(f"no such file or directory: {p}")
    return files


def cmd_report(args):
    from . import verifier as V
    from .runner import read_rows_csv

    files = _csv_files(args.paths)
    any_fail = False
    seen = 0
    for path in files:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
        if header.startswith("t,check,"):
            rows = read_rows_csv(path)
            print(f"== {path}")
            print(V.summary_text(rows).rstrip())
            any_fail |= not all(r.passed for r in rows)
            seen += 1
        elif header.startswith("check_id,"):
            print(f"== {path}")
            with open(path, encoding="utf-8") as fh:
                cols = fh.readline().strip().split(",")
                for line in fh:
                    rec = dict(zip(cols, line.rstrip("\n").split(",")))
                    status = "PASS" if rec["pass"] == "1" else "FAIL"
                    any_fail |= status == "FAIL"
                    print(f"{rec['check_id']:<17} {rec['model']:<9} {status}  value={float(rec['value']):.3e} tol={float(rec['tolerance']):.1e}")
            seen += 1
    if not seen:
        raise UsageError("no estimates or identities CSV files found")
    return EXIT_FAIL if any_fail else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = _Parser(prog="qcheat", description="qc heat flow: identity suite, solver runs and estimate verification")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("identities", help="run the identity suite on one model")
    q.add_argument("--model", required=True)
    q.add_argument("--samples", type=int, default=200)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--tol", type=float, default=None, help="override the model's default tolerance")
    q.add_argument("--checks", nargs="+", metavar="ID", help="subset of check ids")
    q.add_argument("--out", default="qcheat-out", help="directory for the CSV")
    q.add_argument("--csv", default=None, help="explicit CSV path")
    q.set_defaults(func=cmd_identities)

    s = sub.add_parser("solve", help="run the heat flow and verify the estimates")
    s.add_argument("--config", help="INI file with a [run] section")
    s.add_argument("--grid", nargs=2, type=int, metavar=("NX", "NW"))
    s.add_argument("--dt", help="'auto' or a step size")
    s.add_argument("--t-min", type=float, dest="t_min")
    s.add_argument("--t-max", type=float, dest="t_max")
    s.add_argument("--checkpoint-dt", type=float, dest="checkpoint_dt")
    s.add_argument("--save-every", type=int, dest="save_every")
    s.add_argument("--init")
    s.add_argument("--seed", type=int)
    s.add_argument("--k", type=float)
    s.add_argument("--a", type=float, nargs="+")
    s.add_argument("--c", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="re-run the estimate checks on stored checkpoints")
    v.add_argument("run_dir")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="summarize estimates and identities CSV files")
    r.add_argument("paths", nargs="+")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    from .config import ConfigError

    try:
        args = build_parser().parse_args(argv)
        _threads_ok()
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"qcheat: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        return _classify(exc)


def _classify(exc):
    from .lattice import LatticeError, StabilityError
    from .runner import ResourceError

    if isinstance(exc, StabilityError):
        print(f"qcheat: numerical instability: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    if isinstance(exc, (LatticeError, ResourceError, FileNotFoundError)):
        print(f"qcheat: {exc}", file=sys.stderr)
        return EXIT_USAGE
    raise exc


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
