"""
Command-line interface.

Every output begins with ``#`` comment lines recording the tool version, the
full configuration and the seed, followed by a timestamp line.  Re-running
the recorded configuration reproduces the rest of the file byte for byte.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__, copula, data, estimation, gof, montecarlo
from .estimation import Method

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_grid(text: str) -> list[float]:
    """``"a,b,c"`` or ``"start:stop:step"`` (stop inclusive)."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(p) for p in text.split(":"))
            if step <= 0 or stop < start:
                raise UsageError(f"bad range {text!r}")
            count = int(round((stop - start) / step)) + 1
            return [round(start + k * step, 12) for k in range(count)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}") from None


def _int_grid(text: str) -> list[int]:
    vals = parse_grid(text)
    if any(v != int(v) or v < 2 for v in vals):
        raise UsageError(f"n grid must hold integers >= 2: {text!r}")
    return [int(v) for v in vals]


def _fmt(x, args) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.{3 if args.paper_format else 6}f}"


def _header(args) -> str:
    # --threads and --out do not affect results and are left out on purpose
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "threads")}
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return (f"# frankcop {__version__}\n"
            f"# config: {json.dumps(config, sort_keys=True)}\n"
            f"# seed: {args.seed}\n"
            f"# generated: {stamp}\n")


def _sample(args) -> data.BivariateSample:
    if not (args.input and args.x and args.y):
        raise UsageError("--in, --x and --y are required")
    return data.load_dataset(args.input, args.x, args.y)


def _pairs(sample: data.BivariateSample) -> np.ndarray:
    return gof.pseudo_observations(sample).pairs


# --- commands ---------------------------------------------------------------

def cmd_estimate(args, out) -> None:
    s = _sample(args)
    res = estimation.estimate_all(_pairs(s))
    out.write("method,estimate,iterations,converged,objective\n")
    for m, r in res.items():
        d = r.diagnostics
        out.write(f"{m.value},{_fmt(r.estimate, args)},{d.iterations},"
                  f"{_fmt(d.converged, args)},{d.objective_at_solution:.6e}\n")


def cmd_gof(args, out) -> None:
    s = _sample(args)
    table = gof.load_table(args.table)
    rep = gof.gof_test(s, table, levels=tuple(args.level), bootstrap=args.bootstrap,
                       seed=args.seed, threads=args.threads)
    out.write("quantity,value\n")
    rows = [("n", rep.n), ("theta_hat", rep.theta_hat), ("sn_obs", rep.sn), ("tn_obs", rep.tn),
            ("theta_use", rep.theta_use), ("reoriented", rep.reoriented)]
    for name, reading in (("policy", rep.policy), ("signed", rep.signed)):
        rows += [(f"{name}_theta_table", reading.theta_table), (f"{name}_sn", reading.sn),
                 (f"{name}_tn", reading.tn)]
        for lv in args.level:
            for st in ("sn", "tn"):
                rows.append((f"{name}_critical_{st}_{lv:.2f}", reading.critical[lv][st]))
                rows.append((f"{name}_rejected_{st}_{lv:.2f}", reading.rejected[lv][st]))
    if args.bootstrap:
        rows += [("p_boot_sn", rep.p_boot_sn), ("p_boot_tn", rep.p_boot_tn),
                 ("bootstrap_b", rep.bootstrap_b), ("bootstrap_redraws", rep.bootstrap_redraws)]
    for k, v in rows:
        out.write(f"{k},{_fmt(v, args)}\n")


def cmd_bootstrap(args, out) -> None:
    s = _sample(args)
    res = gof.bootstrap_pvalues(s, args.bootstrap or 10_000, args.seed, args.threads)
    out.write("theta_hat,sn_obs,tn_obs,p_boot_sn,p_boot_tn,b,redraws\n")
    o = res.observed
    out.write(",".join([_fmt(o.theta_hat, args), _fmt(o.sn, args), _fmt(o.tn, args),
                        _fmt(res.p_sn, args), _fmt(res.p_tn, args), str(res.b),
                        str(res.redraws)]) + "\n")


def cmd_crit_table(args, out) -> None:
    if not (args.n_grid and args.theta_grid):
        raise UsageError("--n-grid and --theta-grid are required")
    cells = []
    for n in _int_grid(args.n_grid):
        for th in parse_grid(args.theta_grid):
            cells += gof.simulate_critical_values(n, th, tuple(args.level), args.reps, args.seed,
                                                  args.margins, args.threads)
    if args.paper_format:
        out.write("level,n,theta,sn,tn,reps,seed\n")
        for c in sorted(cells, key=lambda c: (c.level, c.n, c.theta)):
            out.write(f"{c.level:.2f},{c.n},{c.theta:g},{c.sn:.3f},{c.tn:.3f},{c.reps},{c.seed}\n")
    else:
        gof.CriticalValueTable(cells).write(out)


def cmd_bias_mse(args, out) -> None:
    if not (args.n_grid and args.theta_grid):
        raise UsageError("--n-grid and --theta-grid are required")
    try:
        ests = tuple(Method(e.strip().upper()) for e in args.estimators.split(","))
        plan = montecarlo.ExperimentPlan(tuple(_int_grid(args.n_grid)),
                                         tuple(parse_grid(args.theta_grid)), args.reps,
                                         args.batches, ests, args.seed, args.centering)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = montecarlo.run_plan(plan, args.threads)
    montecarlo.write_csv(rows, out, 3 if args.paper_format else 6)
    if args.long_out:
        with open(args.long_out, "w", newline="") as fh:
            fh.write(_header(args))
            montecarlo.write_long_csv(rows, fh)


def cmd_correlations(args, out) -> None:
    s = _sample(args)
    nonpar = data.sample_correlations(s, args.tau_variant)
    theta = estimation.mle(_pairs(s)).estimate
    par = data.parametric_correlations(theta)
    out.write("kind,theta_hat,kendall,spearman,pearson\n")
    out.write(f"sample,,{_fmt(nonpar.kendall, args)},{_fmt(nonpar.spearman, args)},"
              f"{_fmt(nonpar.pearson, args)}\n")
    out.write(f"parametric,{_fmt(theta, args)},{_fmt(par.kendall, args)},"
              f"{_fmt(par.spearman, args)},\n")


def cmd_rho_curves(args, out) -> None:
    grid = parse_grid(args.theta_grid or "-25:25:0.5")
    out.write("theta,kendall_tau,spearman_rho,jeffreys_prior\n")
    for th in grid:
        out.write(f"{th:g},{_fmt(copula.kendall_tau(th), args)},"
                  f"{_fmt(copula.spearman_rho(th), args)},"
                  f"{_fmt(estimation.jeffreys_prior(th), args)}\n")


COMMANDS = {
    "estimate": cmd_estimate,
    "gof": cmd_gof,
    "crit-table": cmd_crit_table,
    "bias-mse": cmd_bias_mse,
    "bootstrap": cmd_bootstrap,
    "correlations": cmd_correlations,
    "rho-curves": cmd_rho_curves,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="frankcop", description="Frank copula estimation and goodness-of-fit")
    p.add_argument("--version", action="version", version=f"frankcop {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--in", dest="input", help="CSV file (north.csv/south.csv are bundled)")
        sp.add_argument("--x")
        sp.add_argument("--y")
        sp.add_argument("--theta-grid", help="'a,b,c' or 'start:stop:step'")
        sp.add_argument("--n-grid")
        sp.add_argument("--reps", type=int, default=10_000)
        sp.add_argument("--batches", type=int, default=4)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--level", type=float, action="append",
                        help="critical level (repeatable; default 0.90 and 0.95)")
        sp.add_argument("--bootstrap", type=int, metavar="B")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: all cores; 1 = serial)")
        sp.add_argument("--paper-format", action="store_true", help="3-decimal rendering")
        if name == "gof":
            sp.add_argument("--table", help="critical-value CSV (default: bundled tables)")
        if name == "crit-table":
            sp.add_argument("--margins", choices=("known", "ranks"), default="known")
        if name == "bias-mse":
            sp.add_argument("--estimators", default="MLE_SCORE,BFPE,BJPE")
            sp.add_argument("--centering", choices=("true", "mle"), default="true")
            sp.add_argument("--long-out", help="companion long-format CSV")
        if name == "correlations":
            sp.add_argument("--tau-variant", choices=("a", "b"), default="b")
        sp.set_defaults(func=COMMANDS[name])
    return p


def _run(args) -> None:
    if args.level is None:
        args.level = [0.90, 0.95]
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads must be positive")
    buf = io.StringIO()
    args.func(args, buf)
    text = _header(args) + buf.getvalue()
    if not args.out:
        sys.stdout.write(text)
        return
    # write beside the target and rename, so failures leave no partial file
    directory = os.path.dirname(os.path.abspath(args.out))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".frankcop-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, args.out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _run(args)
    except UsageError as exc:
        print(f"frankcop: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (data.DataError, gof.CoverageError, copula.DomainError, OSError) as exc:
        print(f"frankcop: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (estimation.ConvergenceError, montecarlo.SimulationError, ArithmeticError,
            ValueError) as exc:
        print(f"frankcop: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
