"""Command-line runner: one subcommand per estimator.

Configuration comes from an optional JSON file (``--config``) whose keys
are option names (``n_reps``, ``lam``, ...); flags given on the command line
override it. ``--dump-config`` prints the effective configuration, which
can be fed back through ``--config``.

Exit codes: 0 ok, 1 configuration error, 2 invariant breach,
3 result dominated by truncated runs.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

import numpy as np

from . import contact, events, exclusion, genealogy, green, renewal, suites
from .core import DistributionSpec, SeededStream
from .output import write_event_log, write_table

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_TRUNCATED = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(float(text))
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _dist(text):
    try:
        return DistributionSpec.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _dim(text):
    d = int(text)
    if d not in (1, 2, 3):
        raise argparse.ArgumentTypeError("d must be 1, 2 or 3")
    return d


class Result:
    """What a command produced: a table plus a one-line summary and an exit code."""

    def __init__(self, schema, columns, rows, summary, code=EXIT_OK, sort_keys=None):
        self.schema = schema
        self.columns = columns
        self.rows = rows
        self.summary = summary
        self.code = code
        self.sort_keys = sort_keys


def _est_row(rep, **fields):
    row = dict(fields)
    row.update(n_reps=rep.n_reps, mean=rep.mean, std_error=rep.std_error)
    return row


# -- commands ---------------------------------------------------------------


def cmd_excursion_mean(a, s):
    target = a.target or ("U_X" if exclusion.kind_code(a.kind) == exclusion.EXCLUSION else "U_Y")
    rep = exclusion.excursion_mean(a.kind, target, a.d, a.n_reps, s, workers=a.workers)
    exact = exclusion.excursion_constants(a.d)[target]
    row = _est_row(rep, kind=a.kind, d=a.d, target=target, exact=exact, seed=a.seed)
    cols = ["kind", "d", "target", "n_reps", "mean", "std_error", "exact", "seed"]
    return Result("excursion-mean", cols, [row],
                  f"E[{target}] d={a.d}: {rep.mean:.6f} ± {rep.std_error:.2g} (exact {exact:.6f})")


def cmd_local_time(a, s):
    reps = exclusion.local_time_curve(a.kind, a.tracked, sorted(a.t), a.d, a.n_reps, s,
                                      rate=a.rate, workers=a.workers)
    rows = [_est_row(r, kind=a.kind, d=a.d, tracked=a.tracked, horizon=r.extra["horizon"],
                     seed=a.seed) for r in reps]
    cols = ["kind", "d", "tracked", "horizon", "n_reps", "mean", "std_error", "seed"]
    last = reps[-1]
    return Result("local-time", cols, rows,
                  f"local time at t={last.extra['horizon']:g}: {last.mean:.6f} ± {last.std_error:.2g}",
                  sort_keys=["horizon"])


def cmd_green_constant(a, s):
    rows = [{"method": "bessel_quadrature", "value": green.green_quadrature_bessel(), "std_error": 0.0,
             "n_reps": 0, "seed": a.seed},
            {"method": "lattice_quadrature", "value": green.green_quadrature_lattice(), "std_error": 0.0,
             "n_reps": 0, "seed": a.seed}]
    if a.walks > 0:
        w = green.green_walk_estimate(a.walks, s, radius=a.radius, workers=a.workers)
        rows.append({"method": "walk", "value": w.mean, "std_error": w.std_error,
                     "n_reps": w.n_reps, "seed": a.seed})
    cols = ["method", "value", "std_error", "n_reps", "seed"]
    return Result("green-constant", cols, rows,
                  f"G(0,0) = {green.G_D3:.10f}; (G-1)/2 = {green.LOCAL_TIME_D3:.6f}")


def cmd_renewal_ratio(a, s):
    spec = renewal.RenewalSpec(a.u1, a.u2, a.v)
    rows = []
    for t in sorted(a.t):
        rep = renewal.kappa_ratio(spec, t, a.n_reps, s)
        rows.append({"spec": str(spec), "horizon": t, "ratio": rep.mean, "std_error": rep.std_error,
                     "target": rep.extra["target"], "n_reps": rep.n_reps, "seed": a.seed})
    cols = ["spec", "horizon", "ratio", "std_error", "target", "n_reps", "seed"]
    last = rows[-1]
    return Result("renewal-ratio", cols, rows,
                  f"ratio at t={last['horizon']:g}: {last['ratio']:.5f} ± {last['std_error']:.2g} "
                  f"(target {last['target']:.5f})", sort_keys=["horizon"])


def cmd_delta_max(a, s):
    rows = []
    for k in sorted(a.k):
        rep = renewal.delta_max_statistic(a.u2, k, a.n_reps, s)
        rows.append({"spec": str(a.u2), "k": k, "statistic": rep.mean, "std_error": rep.std_error,
                     "scaled_k34": rep.extra["scaled"], "n_reps": rep.n_reps, "seed": a.seed})
    cols = ["spec", "k", "statistic", "std_error", "scaled_k34", "n_reps", "seed"]
    return Result("delta-max", cols, rows,
                  "E[max Delta]/k^(3/4): " + ", ".join(f"{r['scaled_k34']:.4f}" for r in rows),
                  sort_keys=["k"])


def cmd_nt_sublinearity(a, s):
    spec = renewal.RenewalSpec(a.u, a.u, a.v)
    reps = renewal.n_t_sublinearity(spec, a.t, a.n_reps, s)
    rows = [{"spec": f"u={a.u};v={a.v}", "horizon": r.extra["horizon"], "n_t_over_t": r.mean,
             "std_error": r.std_error, "n_reps": r.n_reps, "seed": a.seed} for r in reps]
    cols = ["spec", "horizon", "n_t_over_t", "std_error", "n_reps", "seed"]
    return Result("nt-sublinearity", cols, rows,
                  "E[N_t]/t: " + ", ".join(f"{r['n_t_over_t']:.4g}" for r in rows),
                  sort_keys=["horizon"])


def cmd_psi_mean(a, s):
    rep = genealogy.psi_mean(a.lam, a.t, a.n_reps, s, cap=a.cap)
    row = _est_row(rep, lam=a.lam, horizon=a.t, target=rep.extra["target"],
                   truncated=rep.extra["truncated"], seed=a.seed)
    cols = ["lam", "horizon", "n_reps", "mean", "std_error", "target", "truncated", "seed"]
    code = EXIT_TRUNCATED if rep.extra["truncated"] > a.n_reps / 2 else EXIT_OK
    return Result("psi-mean", cols, [row],
                  f"E[#Psi at {a.t:g}] = {rep.mean:.5f} ± {rep.std_error:.2g} "
                  f"(target {rep.extra['target']:.5f})", code)


def cmd_coupled_run(a, s):
    from .core import UniformBuffer
    buf = UniformBuffer(s.child(f"coupled-run/{a.lam}/{a.N}/d{a.d}"))
    runs = []
    for r in range(a.n_reps):
        run = genealogy.evolve_coupled(a.lam, a.N, a.t, buf, d=a.d, cap=a.cap, audit=not a.no_audit,
                                       log=bool(a.event_log) and r == 0)
        if r == 0 and a.event_log:
            write_event_log(a.event_log, run.log, a.seed)
        runs.append(run)
    ok = [r for r in runs if not r.truncated]
    n_trunc = len(runs) - len(ok)
    cps = runs[0].checkpoints
    rows = []
    if len(ok) >= 2:
        P = np.array([r.psi_counts for r in ok], dtype=float)
        X = np.array([r.xi_counts for r in ok], dtype=float)
        for k, t in enumerate(cps):
            rows.append({"k": k, "time": float(t), "psi_mean": P[:, k].mean(),
                         "psi_se": P[:, k].std(ddof=1) / math.sqrt(len(ok)),
                         "xi_mean": X[:, k].mean(), "xi_se": X[:, k].std(ddof=1) / math.sqrt(len(ok)),
                         "n_reps": len(ok), "truncated": n_trunc, "seed": a.seed})
    cols = ["k", "time", "psi_mean", "psi_se", "xi_mean", "xi_se", "n_reps", "truncated", "seed"]
    code = EXIT_TRUNCATED if n_trunc > len(runs) / 2 else EXIT_OK
    audits = sum(r.n_audits for r in runs)
    summary = (f"{len(runs)} coupled runs, {audits} audits, 0 invariant violations, "
               f"{n_trunc} truncated")
    return Result("coupled-run", cols, rows, summary, code, sort_keys=["k"])


def cmd_event_e(a, s):
    rep = events.estimate_event_E(a.lam, a.N, a.n_reps, s)
    row = _est_row(rep, lam=a.lam, N=a.N, closed_form=rep.extra["closed_form"], seed=a.seed)
    cols = ["lam", "N", "n_reps", "mean", "std_error", "closed_form", "seed"]
    return Result("event-e", cols, [row],
                  f"P[E] = {rep.mean:.6f} ± {rep.std_error:.2g} (closed form {rep.extra['closed_form']:.6f})")


def _cmd_event(pattern):
    fn = events.estimate_I_prob if pattern == "I" else events.estimate_J_prob

    def cmd(a, s):
        rep = fn(a.lam, a.N, a.n_reps, s, d=a.d, method=a.method)
        row = _est_row(rep, event=pattern, lam=a.lam, N=a.N, d=a.d, method=a.method,
                       occurrences=rep.extra["occurrences"],
                       count_violations=rep.extra["count_violations"], seed=a.seed)
        cols = ["event", "lam", "N", "d", "method", "n_reps", "mean", "std_error", "occurrences",
                "count_violations", "seed"]
        bad = rep.extra["count_violations"] + rep.extra["block_mismatches"]
        return Result(f"event-{pattern.lower()}", cols, [row],
                      f"P[{pattern}] = {rep.mean:.4g} ± {rep.std_error:.2g} "
                      f"({rep.extra['occurrences']} occurrences)",
                      EXIT_INVARIANT if bad else EXIT_OK)
    return cmd


def cmd_criterion(a, s):
    if a.p_i is not None:
        p = a.p_i
        p_lo = p
        src = "given"
    else:
        rep = events.estimate_I_prob(a.lam, a.N, a.n_reps, s, d=a.d)
        p = rep
        p_lo = max(0.0, rep.mean - a.z * rep.std_error)
        src = f"estimated {rep.mean:.4g} ± {rep.std_error:.2g}"
    verdict = events.extinction_criterion(a.lam, a.N, p, z=a.z)
    value = events.criterion_value(a.lam, a.N, p_lo)
    row = {"lam": a.lam, "N": a.N, "p_I_lower": p_lo, "criterion_value": value,
           "verdict": verdict.value, "seed": a.seed}
    cols = ["lam", "N", "p_I_lower", "criterion_value", "verdict", "seed"]
    return Result("criterion", cols, [row], f"{verdict.value} (value {value:.8f}, p_I {src})")


def cmd_survival(a, s):
    rep = contact.survival_probability(a.lam, a.N, a.T, a.cap, a.n_reps, s, d=a.d, workers=a.workers)
    row = {"d": a.d, "N": a.N, "lambda": a.lam, "T": a.T, "cap": a.cap, "n_reps": rep.n_reps,
           "survival_prob": rep.mean, "std_error": rep.std_error,
           "censored_by_cap_fraction": rep.extra["censored_by_cap_fraction"], "seed": a.seed}
    cols = ["d", "N", "lambda", "T", "cap", "n_reps", "survival_prob", "std_error",
            "censored_by_cap_fraction", "seed"]
    return Result("survival", cols, [row],
                  f"survival = {rep.mean:.4f} ± {rep.std_error:.2g} "
                  f"(alive {rep.extra['alive_fraction']:.4f}, capped {rep.extra['censored_by_cap_fraction']:.4f})")


def cmd_lambda_c(a, s):
    iv = contact.estimate_lambda_c(a.N, a.d, a.T, a.cap, a.threshold, a.tol, s, lo=a.lo, hi=a.hi,
                                   n_reps=a.n_reps, workers=a.workers)
    rows = [{"probe": i, "lambda": p.lam, "n_reps": p.n_reps, "survival": p.survival,
             "std_error": p.std_error, "above": int(p.above), "seed": a.seed}
            for i, p in enumerate(iv.probes)]
    cols = ["probe", "lambda", "n_reps", "survival", "std_error", "above", "seed"]
    return Result("lambda-c-probes", cols, rows,
                  f"proxy crossing in [{iv.lo:.5f}, {iv.hi:.5f}] ({iv.caveat})", sort_keys=["probe"])


def cmd_bound(a, s):
    b = contact.asymptotic_lower_bound(a.d, a.N)
    row = {"d": a.d, "N": a.N, "bound": b, "seed": a.seed}
    return Result("bound", ["d", "N", "bound", "seed"], [row], f"lower bound {b:.8f}")


def cmd_suite(a, s):
    results = suites.run_suite(a.name, seed=a.seed, echo=lambda line: print(line, file=sys.stderr))
    rows = [{"criterion": c.criterion, "check": c.name, "measured": c.measured, "target": c.target,
             "passed": int(c.passed), "detail": c.detail, "seed": a.seed} for c in results]
    cols = ["criterion", "check", "measured", "target", "passed", "detail", "seed"]
    n_fail = sum(not c.passed for c in results)
    return Result(f"suite-{a.name}", cols, rows,
                  f"suite {a.name}: {len(results) - n_fail}/{len(results)} checks passed",
                  EXIT_INVARIANT if n_fail else EXIT_OK)


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=7)
    common.add_argument("--reps", dest="n_reps", type=_positive_int, default=10_000)
    common.add_argument("--workers", type=_positive_int, default=1)
    common.add_argument("--out", default="-", help="output path, '-' for stdout")
    common.add_argument("--format", dest="fmt", choices=["csv", "json"], default="csv")
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--dump-config", action="store_true",
                        help="print the effective configuration as JSON and exit")

    p = _Parser(prog="cpstir", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("excursion-mean", cmd_excursion_mean, "exit-time means from the neighbor shell")
    sp.add_argument("--kind", default="X", choices=["X", "Y"])
    sp.add_argument("--target", choices=list(exclusion.EXCURSION_TARGETS))
    sp.add_argument("--d", type=_dim, default=2)

    sp = add("local-time", cmd_local_time, "time spent near the origin up to t")
    sp.add_argument("--kind", default="X", choices=["X", "Y"])
    sp.add_argument("--tracked", default="N0", choices=["N0", "N0bar"])
    sp.add_argument("--d", type=_dim, default=3)
    sp.add_argument("--t", type=float, nargs="+", default=[1e4])
    sp.add_argument("--rate", type=float, default=1.0)

    sp = add("green-constant", cmd_green_constant, "G(0,0) for the 3-d walk")
    sp.add_argument("--walks", type=int, default=0, help="walks for the simulation cross-check")
    sp.add_argument("--radius", type=float, default=20.0)

    sp = add("renewal-ratio", cmd_renewal_ratio, "ratio of mean u-state times")
    sp.add_argument("--u1", type=_dist, default=DistributionSpec.deterministic(1.0))
    sp.add_argument("--u2", type=_dist, default=DistributionSpec.exponential(1.0))
    sp.add_argument("--v", type=_dist, default=DistributionSpec.pareto(0.5, 1.0))
    sp.add_argument("--t", type=float, nargs="+", default=[1e6])

    sp = add("delta-max", cmd_delta_max, "E[max Delta_m] for a mean-one u2")
    sp.add_argument("--u2", type=_dist, default=DistributionSpec.exponential(1.0))
    sp.add_argument("--k", type=int, nargs="+", default=[100, 1000, 10000])

    sp = add("nt-sublinearity", cmd_nt_sublinearity, "E[N_t]/t along a horizon grid")
    sp.add_argument("--u", type=_dist, default=DistributionSpec.deterministic(1.0))
    sp.add_argument("--v", type=_dist, default=DistributionSpec.pareto(0.5, 1.0))
    sp.add_argument("--t", type=float, nargs="+", default=[1e2, 1e3, 1e4, 1e5, 1e6])

    sp = add("psi-mean", cmd_psi_mean, "mean size of the free genealogy")
    sp.add_argument("--lam", type=float, default=1.2)
    sp.add_argument("--t", type=float, default=5.0)
    sp.add_argument("--cap", type=int, default=100_000)

    sp = add("coupled-run", cmd_coupled_run, "coupled free/thinned genealogy with audits")
    sp.add_argument("--lam", type=float, default=1.5)
    sp.add_argument("--N", type=float, default=10.0)
    sp.add_argument("--t", type=float, default=5.0)
    sp.add_argument("--d", type=_dim, default=2)
    sp.add_argument("--cap", type=int, default=100_000)
    sp.add_argument("--no-audit", action="store_true")
    sp.add_argument("--event-log", help="write the first run's event log to this CSV")

    sp = add("event-e", cmd_event_e, "frequency of the clock pattern E")
    sp.add_argument("--lam", type=float, default=1.0)
    sp.add_argument("--N", type=float, default=100.0)

    for name, pat in (("event-i", "I"), ("event-j", "J")):
        sp = add(name, _cmd_event(pat), f"probability of the collision event {pat}")
        sp.add_argument("--lam", type=float, default=1.0)
        sp.add_argument("--N", type=float, default=100.0)
        sp.add_argument("--d", type=_dim, default=2)
        sp.add_argument("--method", choices=["direct", "conditional"], default="conditional")

    sp = add("criterion", cmd_criterion, "one-window extinction criterion")
    sp.add_argument("--lam", type=float, default=1.0)
    sp.add_argument("--N", type=float, default=100.0)
    sp.add_argument("--d", type=_dim, default=2)
    sp.add_argument("--p-i", dest="p_i", type=float, help="use this P[I] instead of estimating")
    sp.add_argument("--z", type=float, default=3.0)

    sp = add("survival", cmd_survival, "capped finite-horizon survival probability")
    sp.add_argument("--lam", type=float, default=2.0)
    sp.add_argument("--N", type=float, default=0.0)
    sp.add_argument("--T", type=float, default=50.0)
    sp.add_argument("--cap", type=int, default=10_000)
    sp.add_argument("--d", type=_dim, default=2)

    sp = add("lambda-c", cmd_lambda_c, "bisection for the survival-proxy threshold")
    sp.add_argument("--N", type=float, default=0.0)
    sp.add_argument("--d", type=_dim, default=2)
    sp.add_argument("--T", type=float, default=50.0)
    sp.add_argument("--cap", type=int, default=10_000)
    sp.add_argument("--threshold", type=float, default=0.02)
    sp.add_argument("--tol", type=float, default=0.05)
    sp.add_argument("--lo", type=float, default=1.0)
    sp.add_argument("--hi", type=float, default=3.0)

    sp = add("bound", cmd_bound, "large-N lower bound on the critical rate")
    sp.add_argument("--d", type=_dim, default=3)
    sp.add_argument("--N", type=float, default=100.0)

    sp = add("suite", cmd_suite, "run an acceptance bundle")
    sp.add_argument("name", choices=sorted(suites.SUITES))
    return p


_NOT_CONFIG = {"func", "config", "dump_config", "command"}


def config_of(args: argparse.Namespace) -> dict:
    """Serializable configuration of a parsed command line."""
    out = {"command": args.command}
    for k, v in sorted(vars(args).items()):
        if k in _NOT_CONFIG:
            continue
        out[k] = str(v) if isinstance(v, DistributionSpec) else v
    return out


def parse(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        cmd = cfg.pop("command", args.command)
        if cmd != args.command:
            raise ConfigError(f"config is for {cmd!r}, not {args.command!r}")
        sp = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sp._actions}
        unknown = set(cfg) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        typed = {}
        for act in sp._actions:
            if act.dest in cfg:
                v = cfg[act.dest]
                if act.type is not None and v is not None:
                    try:
                        v = ([act.type(str(x)) for x in v] if isinstance(v, list)
                             else act.type(str(v)))
                    except (argparse.ArgumentTypeError, ValueError) as e:
                        raise ConfigError(f"bad value for {act.dest!r}: {e}") from None
                if act.choices is not None and v not in act.choices:
                    raise ConfigError(f"{act.dest!r} must be one of {list(act.choices)}")
                typed[act.dest] = v
        sp.set_defaults(**typed)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse(argv)
    except ConfigError as e:
        print(f"cpstir: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        print(json.dumps(config_of(args), indent=2))
        return EXIT_OK
    stream = SeededStream(args.seed, args.command)
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        warnings.showwarning = lambda msg, cat, *rest, **kw: print(f"warning: {msg}", file=sys.stderr)
        try:
            res = args.func(args, stream)
        except genealogy.InvariantViolation as e:
            print(f"cpstir: invariant breach: {e}", file=sys.stderr)
            return EXIT_INVARIANT
        except (ValueError, KeyError) as e:
            print(f"cpstir: config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
    text = write_table(None if args.out == "-" else args.out, res.schema, res.columns, res.rows,
                       args.seed, args.fmt, res.sort_keys)
    if args.out == "-":
        sys.stdout.write(text)
    print(res.summary, file=sys.stderr)
    if res.code == EXIT_TRUNCATED:
        print("cpstir: more than half the runs were truncated", file=sys.stderr)
    return res.code


if __name__ == "__main__":
    sys.exit(main())
