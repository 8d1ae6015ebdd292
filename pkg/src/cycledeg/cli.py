"""Command line front end: ``cycledeg <subcommand> CONFIG [options]``.

Exit status is 0 on success, 1 on a computational failure and 2 when the
configuration cannot be read or parsed.
"""

from __future__ import annotations

import argparse
from dataclasses import replace
import sys

import numpy as np

from .adjointcycle import perron_residual
from .config import Analysis, load_config
from .degreecalc import theorem2_degree
from .errors import ConfigError, CycleDegError, PartialSweep
from .verifykit import check_existence_conditions, epsilon_sweep, find_perturbed_orbit


def fmt(v) -> str:
    """17 significant digits: round-trip exact for doubles."""
    return f"{float(v):.17g}"


def _vec(v) -> str:
    return "[" + ", ".join(fmt(a) for a in np.ravel(v)) + "]"


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _default_theta0(an: Analysis):
    zs = an.bf.sign_changes()
    if not zs:
        raise CycleDegError("no sign-changing zero of f; pass --theta0 explicitly")
    return zs[0].theta_star


# ---------------------------------------------------------------------------
# subcommands


def cmd_find_cycle(an: Analysis, args, out):
    c = an.cycle
    out(f"xi0 = {_vec(c.xi0)}")
    out(f"T = {fmt(c.T)}")
    out(f"T_least = {fmt(c.least_period)}")
    out(f"p = {c.p}")


def cmd_floquet(an: Analysis, args, out):
    c = an.cycle
    out("monodromy =")
    for row in c.monodromy:
        out("  " + _vec(row))
    out("multipliers =")
    for lam in c.multipliers:
        out(f"  {fmt(lam.real)} {'+' if lam.imag >= 0 else '-'} {fmt(abs(lam.imag))}i")
    out(f"trivial_index = {c.trivial_index}")
    out(f"beta = {c.beta}")
    out(f"nondegenerate = {str(c.nondegenerate).lower()}")


def cmd_adjoint(an: Analysis, args, out):
    adj = an.adjoint
    out(f"z0(0) = {_vec(adj.z(0.0))}")
    out(f"perron_constant = {fmt(adj.perron_constant)}")
    out(f"perron_residual = {fmt(perron_residual(an.cycle, adj))}")


def cmd_bifurcation(an: Analysis, args, out):
    if args.samples is not None or args.panels is not None:
        nums = replace(
            an.config.numerics,
            samples=args.samples or an.config.numerics.samples,
            panels=args.panels or an.config.numerics.panels,
        )
        if nums.samples < 16 or nums.panels < 1:
            raise ConfigError("--samples must be >= 16 and --panels >= 1")
        an.config = replace(an.config, numerics=nums)
        an.__dict__.pop("bf", None)
    bf = an.bf
    out(f"samples = {len(bf.theta) - 1}, panels = {bf.panels}, rule = {bf.rule}")
    out(f"max_abs_f = {fmt(bf.max_abs)}")
    if args.out:
        # the m + 1 samples include both endpoints 0 and T
        write_csv(args.out, ["theta", "f"], zip(bf.theta, bf.values))
        out(f"wrote {len(bf.theta)} rows to {args.out}")
    if bf.identically_zero:
        out("IdenticallyZeroSuspect: f vanishes at every sample")
    out("zeros:")
    out("  theta_star, kind, bracket_lo, bracket_hi, residual, slope_sign")
    for z in bf.zeros:
        out(f"  {fmt(z.theta_star)}, {z.kind}, {fmt(z.bracket[0])}, {fmt(z.bracket[1])}, "
            f"{fmt(z.residual)}, {z.slope_sign}")


def cmd_predict(an: Analysis, args, out):
    region = an.config.region
    if region is None:
        raise ConfigError("predict requires a region in the config")
    rep = theorem2_degree(an.spec, an.cycle, an.adjoint, an.bf, region)
    out(f"n = {rep.n}")
    out(f"d_psi = {rep.d_psi}")
    out(f"beta = {an.cycle.beta}")
    out("contributions:")
    out("  phase, beta, theta_exit, interval_degree, f_start, f_end")
    for c in rep.contributions:
        te = "none" if c.theta_exit is None else fmt(c.theta_exit)
        fe = "none" if c.f_end is None else fmt(c.f_end)
        out(f"  {fmt(c.phase)}, {c.beta}, {te}, {c.interval_degree}, {fmt(c.f_start)}, {fe}")
    for note in rep.notes:
        out(f"note: {note}")
    out(f"total={rep.total}")
    summary = check_existence_conditions(an.bf, rep)
    out("conditions:")
    for v in summary.verdicts:
        out(f"  {v.name}: {'applies' if v.applies else 'does not apply'} {v.witness}")
    if summary["identically_zero_suspect"].applies:
        out("IdenticallyZeroSuspect: f vanishes at every sample")
    if args.out:
        rows = [
            (c.phase, c.beta, np.nan if c.theta_exit is None else c.theta_exit, c.interval_degree,
             c.f_start, np.nan if c.f_end is None else c.f_end)
            for c in rep.contributions
        ]
        write_csv(args.out, ["phase", "beta", "theta_exit", "interval_degree", "f_start", "f_end"], rows)


def cmd_verify(an: Analysis, args, out):
    theta0 = args.theta0 if args.theta0 is not None else _default_theta0(an)
    zeros = [z.theta_star for z in an.bf.sign_changes()] or None
    orb = find_perturbed_orbit(an.spec, an.cycle, theta0, args.eps, zeros, an.config.numerics.tol)
    out(f"eps = {fmt(orb.eps)}")
    out(f"theta0 = {fmt(theta0)}")
    out(f"xi_eps = {_vec(orb.xi_eps)}")
    out(f"residual = {fmt(orb.residual)}")
    out(f"theta_hat = {fmt(orb.theta_hat)}")
    out(f"sup_distance = {fmt(orb.sup_distance)}")
    out(f"iterations = {orb.iterations}")


def cmd_sweep(an: Analysis, args, out):
    nums = an.config.numerics
    theta0 = args.theta0 if args.theta0 is not None else _default_theta0(an)
    eps0 = args.eps0 if args.eps0 is not None else nums.eps0
    halvings = args.halvings if args.halvings is not None else nums.halvings
    partial = None
    try:
        rep = epsilon_sweep(an.spec, an.cycle, an.adjoint, an.bf, theta0, eps0, halvings, nums.tol)
    except PartialSweep as exc:
        rep, partial = exc.report, exc
    out("eps, sup_distance")
    for e, d in rep.rows():
        out(f"  {fmt(e)}, {fmt(d)}")
    if args.out:
        write_csv(args.out, ["eps", "sup_distance"], rep.rows())
    out(f"slope = {fmt(rep.slope)} (residual {fmt(rep.slope_residual)}, {len(rep.eps)} points)")
    if partial is not None:
        out(f"largest converged eps = {fmt(rep.eps[-1])}")
        raise partial.cause


def cmd_selftest(args, out):
    from .selftest import run_selftest

    return 0 if run_selftest(out) else 1


COMMANDS = {
    "find-cycle": cmd_find_cycle,
    "floquet": cmd_floquet,
    "adjoint": cmd_adjoint,
    "bifurcation": cmd_bifurcation,
    "predict": cmd_predict,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def build_parser():
    p = argparse.ArgumentParser(prog="cycledeg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="JSON analysis config")
        if name == "bifurcation":
            sp.add_argument("--samples", type=int)
            sp.add_argument("--panels", type=int)
            sp.add_argument("--out", help="CSV of (theta, f) samples")
        if name == "predict":
            sp.add_argument("--out", help="CSV of contact contributions")
        if name in ("verify", "sweep"):
            sp.add_argument("--theta0", type=float, help="seed phase (default: first zero of f)")
        if name == "verify":
            sp.add_argument("--eps", type=float, required=True)
        if name == "sweep":
            sp.add_argument("--eps0", type=float)
            sp.add_argument("--halvings", type=int)
            sp.add_argument("--out", help="CSV of (eps, sup_distance)")
    sub.add_parser("selftest")
    return p


def run_subcommand(argv) -> int:
    def out(line):
        print(line, flush=True)

    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if args.command == "selftest":
            return cmd_selftest(args, out)
        an = Analysis(load_config(args.config))
        COMMANDS[args.command](an, args, out)
    except ConfigError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except CycleDegError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: InvalidArgument: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    sys.exit(run_subcommand(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
