"""Invariant checks on the bundled example configs (``cycledeg selftest``)."""

from __future__ import annotations

import math

import numpy as np

from .adjointcycle import perron_residual
from .config import Analysis, bundled_config
from .degreecalc import Region, brouwer_degree_psi, poincare_degree, theorem2_degree, winding_degree
from .exprcore import differentiate, evaluate, parse_expression, to_text
from .malkinfn import degree_on_interval, shift_f
from .odeflow import flow_with_variational


def _expr_roundtrip():
    e = parse_expression("sin(x1)*x2^2 - exp(-x1)/(1 + x2^2)", 2)
    x = np.array([0.3, -1.2])
    back = parse_expression(to_text(e), 2)
    d = evaluate(differentiate(e, "x1"), 0.0, x, 0.0)
    h = 1e-6
    fd = (evaluate(e, 0.0, x + [h, 0], 0.0) - evaluate(e, 0.0, x - [h, 0], 0.0)) / (2 * h)
    return abs(evaluate(back, 0.0, x, 0.0) - evaluate(e, 0.0, x, 0.0)) < 1e-14 and abs(d - fd) < 1e-6


def _variational_fd():
    spec = bundled_config("vanderpol").spec.with_period(1.0)
    x = np.array([1.5, 0.2])
    fr = flow_with_variational(spec, x, 1.0, 1e-11)
    h = 1e-6
    cols = []
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        cols.append((flow_with_variational(spec, x + e, 1.0, 1e-11).state
                     - flow_with_variational(spec, x - e, 1.0, 1e-11).state) / (2 * h))
    fd = np.column_stack(cols)
    return np.linalg.norm(fd - fr.variational) <= 1e-4 * np.linalg.norm(fd)


def _circle_floquet(an):
    mult = sorted(abs(an.cycle.multipliers))
    return (abs(mult[1] - 1) < 1e-8 and abs(mult[0] - math.exp(-4 * math.pi)) < 1e-6
            and an.cycle.beta == 0 and an.cycle.p == 1)


def _circle_f(an):
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    err = np.max(np.abs(an.bf(th) + 2 * np.pi * np.sin(th)))
    zs = sorted(z.theta_star for z in an.bf.sign_changes())
    T = an.cycle.T
    near = lambda a, b: min(abs(a - b), T - abs(a - b)) < 1e-8  # noqa: E731
    return err < 1e-6 and len(zs) == 2 and near(zs[0], 0.0) and near(zs[1], math.pi)


def _shift_rule(an):
    s = 0.7
    fs = shift_f(an.bf, s)
    th = np.linspace(0, an.cycle.T, 9)
    return np.max(np.abs(fs(th) - an.bf(th + s))) < 1e-12 * (1 + an.bf.max_abs)


def _interval_degree(an):
    return (degree_on_interval(an.bf, math.pi / 2, 3 * math.pi / 2) == 1
            and degree_on_interval(an.bf, math.pi / 4, 3 * math.pi / 4) == 0)


def _brouwer_vs_winding(an):
    spec, region = an.spec, an.config.region
    return brouwer_degree_psi(spec, region) == winding_degree(
        lambda P: spec.field_batch(P.T).T, region
    )


def _degree_identity(an):
    rep = theorem2_degree(an.spec, an.cycle, an.adjoint, an.bf, an.config.region)
    return rep.total == poincare_degree(an.spec, an.config.region, 1e-3)


def _winding_z2():
    sq = lambda P: np.column_stack([P[:, 0] ** 2 - P[:, 1] ** 2, 2 * P[:, 0] * P[:, 1]])  # noqa: E731
    return winding_degree(sq, Region.ball((0, 0), 1.0)) == 2


def checks():
    """(name, thunk) pairs; each thunk returns True on success."""
    circle = Analysis(bundled_config("circle"))
    ball = Analysis(bundled_config("circle_ball"))
    box = Analysis(bundled_config("circle_box"))
    vdp = Analysis(bundled_config("vanderpol"))
    return [
        ("exprcore: print/parse round trip and derivative", _expr_roundtrip),
        ("odeflow: variational matrix vs finite differences", _variational_fd),
        ("cyclefind: circle multipliers and beta", lambda: _circle_floquet(circle)),
        ("adjointcycle: Perron constant on circle", lambda: perron_residual(circle.cycle, circle.adjoint) <= 1e-6),
        ("adjointcycle: Perron constant on van der Pol", lambda: perron_residual(vdp.cycle, vdp.adjoint) <= 1e-6),
        ("malkinfn: closed form and zeros on circle", lambda: _circle_f(circle)),
        ("malkinfn: shift rule on van der Pol", lambda: _shift_rule(vdp)),
        ("malkinfn: interval degrees on circle", lambda: _interval_degree(circle)),
        ("degreecalc: winding number of z^2", _winding_z2),
        ("degreecalc: Brouwer degree vs winding (box)", lambda: _brouwer_vs_winding(circle)),
        ("degreecalc: Brouwer degree vs winding (ball)", lambda: _brouwer_vs_winding(ball)),
        ("degreecalc: Brouwer degree vs winding (van der Pol)", lambda: _brouwer_vs_winding(vdp)),
        ("degreecalc: predicted vs computed degree (box, cos)", lambda: _degree_identity(circle)),
        ("degreecalc: predicted vs computed degree (box, -cos)", lambda: _degree_identity(box)),
        ("degreecalc: predicted vs computed degree (ball)", lambda: _degree_identity(ball)),
    ]


def run_selftest(out=print) -> bool:
    ok = True
    for name, fn in checks():
        try:
            passed = bool(fn())
            detail = ""
        except Exception as exc:  # a crash is a failed check, not a crashed run
            passed = False
            detail = f" ({type(exc).__name__}: {exc})"
        ok &= passed
        out(f"{'PASS' if passed else 'FAIL'} {name}{detail}")
    out("selftest: " + ("all checks passed" if ok else "FAILED"))
    return ok

