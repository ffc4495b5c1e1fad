"""Command-line interface: ``fragdist <subcommand> ...``.

JSON arguments may be given inline or as a path to a JSON file.  Results go
to stdout as JSON or CSV with numbers rounded to 12 significant digits.
Domain errors exit with status 1 and print ``{"code": ..., "message": ...}``
to stderr; malformed command lines exit with status 2.

The environment variable ``FRAGDIST_TOL`` sets the default tail tolerance.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from .counterexamples import oscillation_report
from .dist_core import DEFAULT_TOL, ClusterDistribution, NegBinParams, PmfVector
from .errors import FragdistError, InvalidParameter
from .fragility import fd_convergence_table, fd_limit, fragility_index
from .metrics import tv_distance
from .models import exact_pmf, model_from_dict, sample, verify_bound
from .stein import canonical_family, monotonicity_sweep, stein_factors

TOL_ENV = "FRAGDIST_TOL"
SIG_DIGITS = 12
DEFAULT_RATES = "1e-2,1e-3,1e-4,1e-5"


class _ArgumentError(Exception):
    pass


def fmt(x: float) -> str:
    return f"{x:.{SIG_DIGITS}g}"


def _round(obj):
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(fmt(x)) if math.isfinite(x) else None
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_round(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_round(obj), sort_keys=False)


def load_json(text: str, what: str):
    """Parse inline JSON, or read it from a file when ``text`` names one."""
    candidate = text.strip()
    if candidate[:1] not in "{[" and Path(candidate).is_file():
        candidate = Path(candidate).read_text()
    try:
        return json.loads(candidate)
    except json.JSONDecodeError as exc:
        raise _ArgumentError(f"--{what}: not valid JSON or a readable JSON file ({exc.msg})") from None


def default_tol() -> float:
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise InvalidParameter(f"{TOL_ENV}={raw!r} is not a number") from None
    if not 0 < tol < 1:
        raise InvalidParameter(f"{TOL_ENV} must lie in (0, 1), got {tol}")
    return tol


def _tol(args) -> float:
    return args.tol if args.tol is not None else default_tol()


def _cluster(payload) -> ClusterDistribution:
    if isinstance(payload, dict):
        payload = payload.get("pi")
    if not isinstance(payload, list):
        raise InvalidParameter('cluster law must be a list or {"pi": [...]}')
    return ClusterDistribution(payload)


def family_params(family: str, payload):
    """Convert a JSON parameter payload into what the stein module expects."""
    family = canonical_family(family)
    try:
        if family == "cond_poisson":
            if isinstance(payload, dict):
                payload = payload.get("lam", payload.get("lambda"))
            return float(payload)
        if family == "cond_negbin":
            if isinstance(payload, dict):
                return NegBinParams(float(payload["r"]), float(payload["p"]))
            r, p = payload
            return NegBinParams(float(r), float(p))
        if isinstance(payload, dict):
            payload = payload.get("lambdas", payload.get("lambda"))
        return [float(x) for x in payload]
    except (KeyError, TypeError, ValueError):
        raise InvalidParameter(f"cannot read {family} parameters from {payload!r}") from None


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_fd_limit(args, out):
    res = fd_limit(_cluster(load_json(args.pi, "pi")), args.m)
    payload = res.to_dict()
    payload["masses"] = res.law.as_dict()
    payload["fragility_index"] = fragility_index(res)
    out.write(dumps(payload) + "\n")


def cmd_fd_converge(args, out):
    try:
        rates = [float(r) for r in args.rates.split(",")]
    except ValueError:
        raise _ArgumentError(f"--rates: expected comma-separated numbers, got {args.rates!r}") from None
    table = fd_convergence_table(_cluster(load_json(args.pi, "pi")), args.m, rates, _tol(args))
    if args.format == "json":
        out.write(dumps({"m": args.m, "rows": [{"rate": r, "tv": tv} for r, tv in table]}) + "\n")
    else:
        out.write(_csv(["rate", "tv"], table))


def cmd_stein_factors(args, out):
    params = family_params(args.family, load_json(args.params, "params"))
    f = stein_factors(args.family, params, args.m, numeric=args.numeric, M=args.M)
    payload = {"family": canonical_family(args.family), **f.to_dict()}
    out.write(dumps(payload) + "\n")


def cmd_stein_sweep(args, out, err):
    params = family_params(args.family, load_json(args.params, "params"))
    sweep = monotonicity_sweep(args.family, params, args.m_max, args.M)
    if not sweep.monotone:
        err.write(f"warning: factors increase in m by up to {fmt(sweep.max_increase)}\n")
    if args.format == "json":
        out.write(dumps({"rows": [r.to_dict() for r in sweep.rows], "max_increase": sweep.max_increase,
                         "monotone": sweep.monotone}) + "\n")
    else:
        out.write(_csv(["m", "G1", "G2", "method"], [(r.m, r.G1, r.G2, r.method) for r in sweep.rows]))


def cmd_model_pmf(args, out):
    out.write(dumps(exact_pmf(model_from_dict(load_json(args.model, "model"))).to_dict()) + "\n")


def cmd_verify_bound(args, out):
    model = model_from_dict(load_json(args.model, "model"))
    approx = load_json(args.approx, "approx") if args.approx else None
    out.write(dumps(verify_bound(model, approx, args.m, _tol(args)).to_dict()) + "\n")


def cmd_sample(args, out):
    model = model_from_dict(load_json(args.model, "model"))
    batch = sample(model, args.seed, args.count, args.workers)
    out.write("count\n")
    out.write("\n".join(str(int(c)) for c in batch.counts) + "\n")


def cmd_counterexample(args, out):
    rep = oscillation_report(args.which, args.depth)
    if args.format == "csv":
        out.write(_csv(["k", "value_seqA", "value_seqB"], rep.rows()))
    else:
        out.write(dumps(rep.to_dict()) + "\n")


def cmd_tv(args, out):
    tol = _tol(args)
    a = PmfVector.from_dict(load_json(args.a, "a"), tol)
    b = PmfVector.from_dict(load_json(args.b, "b"), tol)
    out.write(dumps(tv_distance(a, b).to_dict()) + "\n")


def cmd_reproduce(args, out, err):
    numbers = sorted(acceptance.CRITERIA)
    if args.criteria:
        try:
            numbers = sorted({int(x) for x in args.criteria.split(",")})
        except ValueError:
            raise _ArgumentError(f"--criteria: expected comma-separated integers, got {args.criteria!r}") from None
        unknown = [k for k in numbers if k not in acceptance.CRITERIA]
        if unknown:
            raise _ArgumentError(f"--criteria: unknown criteria {unknown}")
    results = []
    for k in numbers:
        res = acceptance.run_criterion(k)
        err.write(res.line() + "\n")
        results.append(res)
    rep = acceptance.report(results)
    out.write(dumps(rep) + "\n")
    return 0 if rep["all_passed"] else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fragdist", description="Fragility distributions and conditional approximations.")
    p.add_argument("--tol", type=float, default=None, help=f"tail tolerance (default ${TOL_ENV} or {DEFAULT_TOL:g})")
    sub = p.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    s = sub.add_parser("fd-limit", help="limit fragility law of order m")
    s.add_argument("--pi", required=True, help='cluster law, e.g. \'{"pi": [0.5, 0.5]}\'')
    s.add_argument("--m", type=int, required=True)

    s = sub.add_parser("fd-converge", help="TV to the limit law as the rate shrinks")
    s.add_argument("--pi", required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--rates", default=DEFAULT_RATES, help="strictly decreasing, comma-separated")
    s.add_argument("--format", choices=["csv", "json"], default="csv")

    for name, helptext in (("stein-factors", "Stein factors for one m"), ("stein-sweep", "Stein factors for m = 0..m-max")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--family", required=True, help="poisson, negbin or cp")
        s.add_argument("--params", required=True, help='e.g. 2.0, {"r": 2, "p": 0.3} or [0.5, 0.2]')
        s.add_argument("--M", type=int, default=None, help="truncation point")
        if name == "stein-factors":
            s.add_argument("--m", type=int, required=True)
            s.add_argument("--numeric", action="store_true", help="solve the equations instead of closed forms")
        else:
            s.add_argument("--m-max", type=int, default=5)
            s.add_argument("--format", choices=["csv", "json"], default="csv")

    s = sub.add_parser("model-pmf", help="exact law of the exceedance count")
    s.add_argument("--model", required=True)

    s = sub.add_parser("verify-bound", help="exact conditional TV against the bound")
    s.add_argument("--model", required=True)
    s.add_argument("--approx", default=None)
    s.add_argument("--m", type=int, default=1)

    s = sub.add_parser("sample", help="seeded draws of the exceedance count")
    s.add_argument("--model", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("counterexample", help="oscillating tail ratios")
    s.add_argument("--which", required=True, choices=["r1", "biv", "tri1", "tri2"])
    s.add_argument("--depth", type=int, default=40)
    s.add_argument("--format", choices=["json", "csv"], default="json")

    s = sub.add_parser("tv", help="total variation distance of two PMF vectors")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)

    s = sub.add_parser("reproduce-paper", help="run the acceptance sweep")
    s.add_argument("--criteria", default=None, help="comma-separated subset, default all")
    return p


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stderr(err), contextlib.redirect_stdout(out):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.tol is not None and not 0 < args.tol < 1:
        parser.print_usage(err)
        err.write("fragdist: error: --tol must lie in (0, 1)\n")
        return 2
    handlers = {
        "fd-limit": cmd_fd_limit,
        "fd-converge": cmd_fd_converge,
        "stein-factors": cmd_stein_factors,
        "model-pmf": cmd_model_pmf,
        "verify-bound": cmd_verify_bound,
        "sample": cmd_sample,
        "counterexample": cmd_counterexample,
        "tv": cmd_tv,
    }
    try:
        if args.command == "stein-sweep":
            cmd_stein_sweep(args, out, err)
        elif args.command == "reproduce-paper":
            return cmd_reproduce(args, out, err)
        else:
            handlers[args.command](args, out)
    except _ArgumentError as exc:
        parser.print_usage(err)
        err.write(f"fragdist: error: {exc}\n")
        return 2
    except FragdistError as exc:
        err.write(json.dumps(exc.to_dict()) + "\n")
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
