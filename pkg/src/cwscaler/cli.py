"""Command-line front end: ``cw-scaler <command> [flags]``.

Exit codes: 0 success (all checks pass), 1 a checked inequality or trend
failed, 2 usage or domain error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .concentration import chatterjee_bound, check_slope, exact_lhs_tail, find_interval, tail_decay
from .diagnostics import autocov_compare, convergence_report, moment_errors, ou_params
from .exceptions import CWError, DomainError, ResourceError
from .lumped_kernel import build_kernel, moment_profile
from .model_core import (
    ExactMagnetizationDistribution,
    ModelParams,
    eta_statistics,
    exact_distribution,
    solve_cw_roots,
)
from .simulate import RngSpec, run_ctmc, run_ensemble, run_lumped_chain, run_ou, run_spin_chain

log = logging.getLogger("cwscaler")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2
CACHE_ENV = "CW_SCALER_CACHE"


class UsageError(DomainError):
    pass


# --------------------------------------------------------------------- parsing


def _int_list(text: str) -> list:
    out = []
    for tok in str(text).replace(" ", "").split(","):
        if not tok:
            continue
        out.append(int(float(tok)))
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return out


def _float_list(text: str) -> list:
    """Comma list ``0,0.5,1`` or range ``start:stop:step`` (stop inclusive)."""
    text = str(text).replace(" ", "")
    if ":" in text:
        try:
            start, stop, step = (float(x) for x in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad range {text!r}; use start:stop:step") from None
        if step <= 0:
            raise argparse.ArgumentTypeError("range step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _read_config(path: str) -> dict:
    """Flat ``key = value`` file; keys are flag names without dashes."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_string("[experiment]\n" + fh.read())
    return {k.replace("-", "_"): v for k, v in parser["experiment"].items()}


def _common(p: argparse.ArgumentParser, n_schedule: bool = False, n: bool = False) -> None:
    p.add_argument("--beta", type=float, required=False, help="inverse temperature (> 0)")
    p.add_argument("--h", type=float, required=False, help="external field")
    if n:
        p.add_argument("--n", type=int, help="number of spins")
    if n_schedule:
        p.add_argument("--n-schedule", type=_int_list, help="ascending comma list of n, e.g. 100,1000,10000")
    p.add_argument("--out", help="output directory (stdout when omitted)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="format for tabular output")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    p.add_argument("--config", help="key=value file; command-line flags take precedence")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cw-scaler", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser("solve", help="roots of m = tanh(beta (m + h))", formatter_class=fmt,
                       epilog="CSV columns: root, rate, isMinimizer")
    _common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("exact-dist", help="exact law of the magnetization level", formatter_class=fmt,
                       epilog="CSV columns: k, m, eta, prob")
    _common(p, n=True)
    p.set_defaults(func=cmd_exact_dist)

    p = sub.add_parser("simulate", help="sample paths from one engine", formatter_class=fmt,
                       epilog="CSV columns: t, value (eta for lattice engines, Y for ou)\n"
                              "with --paths > 1 also writes ensemble.json")
    _common(p, n=True)
    p.add_argument("--engine", choices=("spin", "lumped", "ctmc", "ou"), default="ctmc")
    p.add_argument("--steps", type=int, default=10_000, help="steps for spin/lumped engines")
    p.add_argument("--horizon", type=float, default=10.0, help="time horizon for ctmc/ou engines")
    p.add_argument("--dt", type=float, default=0.01, help="grid spacing for the ou engine")
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--start", default="stationary", help="stationary, cold, or an integer level")
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check-concentration", help="tail bound, interval and outside-window decay",
                       formatter_class=fmt,
                       epilog="concentration.csv columns: beta, h, n, t, exactTail, bound, ok\n"
                              "interval.json: iota0, M1, M2, margin; tail.json: outside-window masses")
    _common(p, n_schedule=True)
    p.add_argument("--t-grid", type=_float_list, default="0:6:0.25", help="comma list or start:stop:step")
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--alpha", type=_float_list, default="1,2,3")
    p.set_defaults(func=cmd_check_concentration)

    p = sub.add_parser("check-moments", help="local moments of the lumped kernel", formatter_class=fmt,
                       epilog="kernel_n<N>.csv columns: k, eta, pUp, pDown, pStay, drift, secondMoment\n"
                              "moments.json: sup errors per n")
    _common(p, n_schedule=True)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--window", type=float, default=1.0, help="fixed |eta| window for the pointwise drift check")
    p.set_defaults(func=cmd_check_moments)

    p = sub.add_parser("diffusion", help="convergence report plus a CTMC autocovariance run",
                       formatter_class=fmt,
                       epilog="report.json; perN.csv columns: n, variance, ks, momentErrSup, generatorErr\n"
                              "autocov.csv columns: lag, empirical, analytic, stderr")
    _common(p, n_schedule=True)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--horizon", type=float, default=200.0)
    p.add_argument("--n", type=int, help="system size of the CTMC run (default: 10000)")
    p.add_argument("--lags", type=_float_list, default="0.2,0.5,1.0")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_diffusion)

    p = sub.add_parser("report", help="exact convergence reports over a (beta, h) grid", formatter_class=fmt,
                       epilog="report.json (list of reports); summary.csv columns: beta, h, n, variance,\n"
                              "targetVariance, ks, momentErrSup, generatorErr")
    p.add_argument("--beta", type=_float_list, help="comma list of beta values")
    p.add_argument("--h", type=_float_list, help="comma list of h values")
    p.add_argument("--n-schedule", type=_int_list)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--config")
    p.set_defaults(func=cmd_report)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            cfg = _read_config(args.config)
        except (OSError, configparser.Error) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = set(cfg) - known
        if unknown:
            parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        subparser.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------- output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


class Sink:
    """Writes named artifacts into ``--out`` or onto stdout."""

    def __init__(self, out, fmt="csv"):
        self.out = Path(out) if out else None
        self.fmt = fmt
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)

    def _emit(self, name: str, text: str) -> None:
        if self.out:
            (self.out / name).write_text(text)
            log.info("wrote %s", self.out / name)
        else:
            if name:
                sys.stdout.write(f"# {name}\n")
            sys.stdout.write(text)

    def table(self, stem: str, header, rows) -> None:
        rows = [list(r) for r in rows]
        if self.fmt == "json":
            self._emit(f"{stem}.json", _dumps([dict(zip(header, r)) for r in rows]))
            return
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([_cell(v) for v in r])
        self._emit(f"{stem}.csv", buf.getvalue())

    def json(self, stem: str, obj) -> None:
        self._emit(f"{stem}.json", _dumps(obj))


# ----------------------------------------------------------------------- cache


def cached_exact_distribution(params: ModelParams) -> ExactMagnetizationDistribution:
    """Exact distribution, memoized on disk under ``$CW_SCALER_CACHE`` when set."""
    root = os.environ.get(CACHE_ENV)
    if not root:
        return exact_distribution(params)
    key = hashlib.sha256(f"{params.beta!r}|{params.h!r}|{params.n}".encode()).hexdigest()[:24]
    path = Path(root) / f"exact_{key}.npz"
    if path.exists():
        with np.load(path) as data:
            log_weights = data["log_weights"]
            probs = data["probs"]
            log_probs = data["log_probs"]
        return ExactMagnetizationDistribution(params, log_weights, probs, log_probs)
    dist = exact_distribution(params)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, log_weights=dist.log_weights, probs=dist.probs, log_probs=dist.log_probs)
    return dist


# -------------------------------------------------------------------- commands


def _params(args, n=None) -> ModelParams:
    if args.beta is None or args.h is None:
        raise UsageError("--beta and --h are required")
    return ModelParams(args.beta, args.h, n if n is not None else (getattr(args, "n", None) or 1))


def _schedule(args, default):
    sched = args.n_schedule or default
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise UsageError("--n-schedule must be strictly ascending")
    return sched


def _positive_field(params: ModelParams) -> ModelParams:
    """Subcritical parameters reflected to h > 0 (results map back by symmetry)."""
    params.require_subcritical()
    return params if params.h > 0 else params.mirrored()


def cmd_solve(args) -> int:
    params = _params(args)
    roots = solve_cw_roots(params)
    minimizers = set(roots.minimizers)
    sink = Sink(args.out, args.format)
    sink.table(
        "roots",
        ["root", "rate", "isMinimizer"],
        [(r, v, r in minimizers) for r, v in zip(roots.roots, roots.rate_values)],
    )
    sink.json(
        "solve",
        {
            "beta": params.beta,
            "h": params.h,
            "phase": params.phase.value,
            "roots": list(roots.roots),
            "rateValues": list(roots.rate_values),
            "m0": roots.m0,
            "symmetricTie": roots.symmetric_tie,
            "degenerate": roots.degenerate,
        },
    )
    return EXIT_OK


def cmd_exact_dist(args) -> int:
    if not args.n:
        raise UsageError("--n is required")
    params = _params(args)
    dist = cached_exact_distribution(params)
    m0 = solve_cw_roots(params).m0
    eta = dist.eta(m0)
    Sink(args.out, args.format).table(
        "exact_dist", ["k", "m", "eta", "prob"], zip(dist.k, dist.m, eta, dist.probs)
    )
    return EXIT_OK


def _start(text):
    text = str(text)
    return int(text) if text.lstrip("-").isdigit() else text


def cmd_simulate(args) -> int:
    if args.paths < 1:
        raise UsageError("--paths must be positive")
    engine = args.engine
    if engine == "ou":
        params = _params(args, n=1)
        ou = ou_params(params)

        def run(rng):
            return run_ou(ou, args.horizon, args.dt, rng)

    else:
        if not args.n:
            raise UsageError("--n is required for lattice engines")
        params = _params(args)
        m0 = solve_cw_roots(params).m0
        start = _start(args.start)
        if engine == "spin":

            def run(rng):
                return run_spin_chain(params, args.steps, rng, args.record_every, start=start, m0=m0)

        else:
            kernel = build_kernel(params, m0)
            if engine == "lumped":

                def run(rng):
                    return run_lumped_chain(kernel, args.steps, rng, start=start, record_every=args.record_every)

            else:

                def run(rng):
                    return run_ctmc(kernel, args.horizon, rng, start=start)

    paths = run_ensemble(run, args.paths, args.seed, workers=min(args.threads, args.paths))
    sink = Sink(args.out, args.format)
    for i, path in enumerate(paths):
        stem = "path" if args.paths == 1 else f"path_{i:04d}"
        sink.table(stem, ["t", "value"], zip(path.times, path.values))
    if args.paths > 1:
        sink.json(
            "ensemble",
            {
                "seed": args.seed,
                "engine": engine,
                "params": params.as_dict(),
                "paths": [dict(streamId=i, **p.summary()) for i, p in enumerate(paths)],
            },
        )
    return EXIT_OK


def cmd_check_concentration(args) -> int:
    params = _params(args)
    sched = _schedule(args, [10, 100, 1000, 10_000])
    ok = True
    rows = []
    for n in sched:
        p = params.with_n(n)
        dist = cached_exact_distribution(p)
        for t in args.t_grid:
            if t < 0:
                raise UsageError("t-grid values must be non-negative")
            lhs = exact_lhs_tail(p, t, dist)
            bound = chatterjee_bound(t, params.beta)
            rows.append((params.beta, params.h, n, t, lhs, bound, lhs <= bound))
            ok &= lhs <= bound
    sink = Sink(args.out, args.format)
    sink.table("concentration", ["beta", "h", "n", "t", "exactTail", "bound", "ok"], rows)

    if params.is_subcritical:
        base = _positive_field(params)
        slope = check_slope(base.beta, base.h)
        interval = find_interval(base)
        tails = tail_decay(params, args.delta, args.alpha, sched, iota0=interval.iota0)
        sink.json("interval", dict(interval.as_dict(), mirrored=params.h < 0, slope=slope._asdict()))
        sink.json("tail", tails.as_dict())
        ok &= slope.ok and slope.m1_below_m0 and slope.f_left_above_right
    else:
        log.warning("phase %s: interval and tail-decay checks need beta > 1 and h != 0; skipped", params.phase.value)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def cmd_check_moments(args) -> int:
    params = _params(args, n=1)
    params.require_subcritical("check-moments")
    sched = _schedule(args, [100, 1000, 10_000, 100_000])
    ou = ou_params(params)
    sink = Sink(args.out, args.format)
    per_n = []
    ok = True
    for n in sched:
        kernel = build_kernel(params.with_n(n), ou.m0)
        prof = moment_profile(kernel)
        sink.table(
            f"kernel_n{n}",
            ["k", "eta", "pUp", "pDown", "pStay", "drift", "secondMoment"],
            zip(kernel.k, kernel.eta, kernel.p_up, kernel.p_down, kernel.p_stay, prof.drift, prof.second_moment),
        )
        errs = moment_errors(kernel, ou, args.delta)
        fixed = np.abs(prof.eta) <= args.window
        drift_fixed = float(np.max(np.abs(prof.drift + 2 * ou.ell * prof.eta)[fixed])) if fixed.any() else 0.0
        identity = float(np.max(np.abs(prof.p_moment(3) - prof.second_moment * 2 / math.sqrt(n))))
        ok &= identity <= 1e-14
        per_n.append(
            {
                "n": n,
                "driftErrSup": errs.drift,
                "secondMomentErrSup": errs.second_moment,
                "thirdMomentSup": errs.third_moment,
                "driftErrFixedWindow": drift_fixed,
                "thirdMomentIdentityErr": identity,
            }
        )
    second = [c["secondMomentErrSup"] for c in per_n]
    fixed = [c["driftErrFixedWindow"] for c in per_n]
    drift = [c["driftErrSup"] for c in per_n]
    summary = {
        "params": {"beta": params.beta, "h": params.h},
        "delta": args.delta,
        "window": args.window,
        "ouParams": ou.as_dict(),
        "perN": per_n,
        "secondMomentSlope": _slope(sched, second) if len(sched) > 1 else None,
        "driftSupSlope": _slope(sched, drift) if len(sched) > 1 else None,
        "driftFixedWindowSlope": _slope(sched, fixed) if len(sched) > 1 else None,
        "secondMomentDecreasing": all(b < a for a, b in zip(second, second[1:])),
        "driftFixedWindowDecreasing": all(b < a for a, b in zip(fixed, fixed[1:])),
    }
    ok &= summary["secondMomentDecreasing"] and summary["driftFixedWindowDecreasing"]
    sink.json("moments", summary)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def cmd_diffusion(args) -> int:
    params = _params(args, n=1)
    params.require_subcritical("diffusion")
    sched = _schedule(args, [100, 1000, 10_000])
    report = convergence_report(params, sched, args.delta, workers=args.threads)
    ou = report.ou

    n_ctmc = args.n or 10_000
    p = params.with_n(n_ctmc)
    dist = cached_exact_distribution(p)
    exact_mean = eta_statistics(dist, ou.m0).mean
    path = run_ctmc(build_kernel(p, ou.m0), args.horizon, RngSpec(args.seed).generator())
    auto = autocov_compare(path, ou, args.lags, center=exact_mean)
    report.autocov = [dict(r._asdict(), n=n_ctmc, seed=args.seed) for r in auto.rows]

    checks = {
        "ksDecreasing": _strictly_decreasing(report.ks_distances),
        "generatorDecreasing": _strictly_decreasing(report.generator_errors),
        "varianceErrorDecreasing": _strictly_decreasing([abs(v - ou.stationary_variance) for v in report.variances]),
        "autocovWithin3Stderr": auto.within(3.0),
    }
    sink = Sink(args.out, args.format)
    sink.json("report", dict(report.as_dict(), checks=checks, horizonShort=auto.short_horizon))
    sink.table(
        "perN",
        ["n", "variance", "ks", "momentErrSup", "generatorErr"],
        [(c["n"], c["variance"], c["ks"], c["momentErrSup"], c["generatorErr"]) for c in report.as_dict()["perN"]],
    )
    sink.table("autocov", ["lag", "empirical", "analytic", "stderr"], [tuple(r) for r in auto.rows])
    return EXIT_OK if all(checks.values()) else EXIT_CHECK_FAILED


def cmd_report(args) -> int:
    if not args.beta or not args.h:
        raise UsageError("--beta and --h are required")
    sched = _schedule(args, [100, 1000, 10_000])
    reports, rows = [], []
    for beta in args.beta:
        for h in args.h:
            params = ModelParams(beta, h)
            rep = convergence_report(params, sched, args.delta, workers=args.threads)
            reports.append(rep.as_dict())
            for c in rep.cells:
                rows.append(
                    (beta, h, c.n, c.variance, rep.target_variance, c.ks,
                     max(c.drift_err_sup, c.second_moment_err_sup), c.generator_err)
                )
    sink = Sink(args.out, args.format)
    sink.json("report", reports)
    sink.table(
        "summary",
        ["beta", "h", "n", "variance", "targetVariance", "ks", "momentErrSup", "generatorErr"],
        rows,
    )
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DomainError, ResourceError, argparse.ArgumentTypeError) as exc:
        print(f"cw-scaler {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CWError as exc:
        print(f"cw-scaler {args.command}: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
