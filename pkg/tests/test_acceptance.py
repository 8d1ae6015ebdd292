"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria".
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from cycledeg.adjointcycle import perron_residual
from cycledeg.config import Analysis, bundled_config
from cycledeg.cyclefind import Section, find_cycle
from cycledeg.degreecalc import (
    Region,
    brouwer_degree_psi,
    cycle_contacts,
    poincare_degree,
    theorem2_degree,
    winding_degree,
)
from cycledeg.exprcore import SystemSpec
from cycledeg.malkinfn import degree_on_interval, eval_f, eval_f_alt, sample_f
from cycledeg.odeflow import flow, flow_with_variational
from cycledeg.verifykit import epsilon_sweep, find_perturbed_orbit

from conftest import CIRCLE_PSI, VDP_PSI, circular_distance

RESULTS = {}
TWO_PI = 2 * math.pi


@contextmanager
def criterion(k, title):
    t0 = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        RESULTS[k] = f"criterion {k:2d} FAIL  {title}: {type(exc).__name__}: {exc}".splitlines()[0]
        raise
    extra = ", ".join(f"{a}={b}" for a, b in detail.items())
    RESULTS[k] = f"criterion {k:2d} PASS  {title} ({time.perf_counter() - t0:.2f} s{', ' + extra if extra else ''})"


@pytest.fixture(scope="module")
def systems():
    return {name: Analysis(bundled_config(name)) for name in ("circle", "circle_box", "circle_ball", "vanderpol")}


def test_c01_floquet_recovery():
    with criterion(1, "Floquet recovery on the circle system") as d:
        spec = SystemSpec.from_text(CIRCLE_PSI, ["cos(t)", "sin(t)"], TWO_PI)
        t0 = time.perf_counter()
        cyc = find_cycle(spec, [1.1, 0.0], Section(2, 0.0, 1))
        elapsed = time.perf_counter() - t0
        lam = cyc.multipliers[np.argsort(np.abs(cyc.multipliers))]
        d["lambda"] = f"{lam[0].real:.6e}"
        assert abs(lam[1] - 1) <= 1e-8
        assert abs(lam[0] - 3.4873e-6) <= 1e-6
        assert cyc.beta == 0
        assert elapsed < 1.0, f"runtime {elapsed:.2f} s"


def test_c02_perron_invariant(systems):
    with criterion(2, "Perron inner product is constant") as d:
        for name in ("circle", "vanderpol"):
            an = systems[name]
            r = perron_residual(an.cycle, an.adjoint, samples=256)
            d[name] = f"{r:.1e}"
            assert r <= 1e-6, name


def test_c03_closed_form(systems):
    with criterion(3, "bifurcation function equals -2 pi sin") as d:
        an = systems["circle"]
        th = np.arange(64) * (TWO_PI / 64)
        err = float(np.max(np.abs(an.bf(th) + TWO_PI * np.sin(th))))
        d["max_err"] = f"{err:.1e}"
        assert err <= 1e-6
        zs = [z.theta_star for z in an.bf.sign_changes()]
        assert len(zs) == 2
        for target in (0.0, math.pi):
            assert min(circular_distance(target, z, an.cycle.T) for z in zs) <= 1e-8


def test_c04_identity_gf(systems):
    with criterion(4, "quadrature and variational routes agree") as d:
        rng = np.random.default_rng(4)
        for name in ("circle", "vanderpol"):
            an = systems[name]
            bound = 1e-5 * (1 + an.bf.max_abs)
            worst = 0.0
            for th in rng.uniform(0, an.cycle.T, 16):
                a = eval_f(an.cycle, an.adjoint, an.spec, th)
                b = eval_f_alt(an.cycle, an.adjoint, an.spec, th)
                worst = max(worst, abs(a - b))
            d[name] = f"{worst:.1e}"
            assert worst <= bound, name


def test_c05_degree_identity():
    with criterion(5, "predicted degree equals computed degree") as d:
        t0 = time.perf_counter()
        cases = [("circle_ball", 1), ("circle_box", 2), ("circle", 0)]
        for name, expected in cases:
            an = Analysis(bundled_config(name))
            region = an.config.region
            total = theorem2_degree(an.spec, an.cycle, an.adjoint, an.bf, region).total
            assert total == expected, name
            for eps in (1e-2, 1e-3, 1e-4):
                assert poincare_degree(an.spec, region, eps) == total, (name, eps)
            d[name] = total
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0, f"runtime {elapsed:.1f} s"


def test_c06_empty_sum(systems):
    with criterion(6, "no contacts: total is (-1)^n deg psi") as d:
        for name in ("circle_ball", "vanderpol"):
            an = systems[name]
            region = an.config.region
            assert cycle_contacts(an.cycle, region).contacts == ()
            rep = theorem2_degree(an.spec, an.cycle, an.adjoint, an.bf, region)
            assert rep.contributions == ()
            assert rep.total == (-1) ** an.spec.n * brouwer_degree_psi(an.spec, region)
            d[name] = rep.total


def test_c07_convergence_to_zero_set(systems):
    with criterion(7, "perturbed orbits approach x0(t + Theta)") as d:
        an = systems["circle"]
        zs = [z.theta_star for z in an.bf.sign_changes()]
        orb = find_perturbed_orbit(an.spec, an.cycle, 0.0, 1e-4, zs)
        gap = min(circular_distance(orb.theta_hat, z, an.cycle.T) for z in zs)
        d["phase_gap"] = f"{gap:.1e}"
        assert gap <= 0.1
        rep = epsilon_sweep(an.spec, an.cycle, an.adjoint, an.bf, 0.0, 1e-2, 8)
        dist = np.array(rep.sup_distance)
        assert np.all(np.diff(dist) < 0)


def test_c08_rate(systems):
    with criterion(8, "sup distance is of order eps") as d:
        an = systems["circle"]
        t0 = time.perf_counter()
        rep = epsilon_sweep(an.spec, an.cycle, an.adjoint, an.bf, 0.0, 1e-2, 8)
        elapsed = time.perf_counter() - t0
        d["slope"] = f"{rep.slope:.4f}"
        assert len(rep.eps) == 9
        assert rep.slope >= 0.9
        assert elapsed < 60.0, f"runtime {elapsed:.1f} s"


def test_c09_oracle_agreement(systems):
    with criterion(9, "Brouwer degree equals winding number") as d:
        for name, an in systems.items():
            region = an.config.region
            a = brouwer_degree_psi(an.spec, region)
            b = winding_degree(lambda P, s=an.spec: s.field_batch(P.T).T, region)
            d[name] = a
            assert a == b, name


def test_c10_derivatives():
    with criterion(10, "symbolic and variational derivatives") as d:
        rng = np.random.default_rng(10)
        worst_j, worst_y = 0.0, 0.0
        for psi in (CIRCLE_PSI, VDP_PSI):
            spec = SystemSpec.from_text(psi, ["0", "0"], 1.0)
            for _ in range(20):
                x = rng.uniform(-2, 2, 2)
                h = 1e-6
                fd = np.column_stack([(spec.field(x + h * e) - spec.field(x - h * e)) / (2 * h) for e in np.eye(2)])
                J = spec.jacobian(x)
                worst_j = max(worst_j, np.max(np.abs(J - fd)) / max(1.0, np.max(np.abs(J))))
            for _ in range(5):
                xi = rng.uniform(-1.5, 1.5, 2)
                Y = flow_with_variational(spec, xi, 1.0, 1e-11).variational
                fd = np.column_stack([
                    (flow(spec, xi + h * e, 1.0, 1e-12).x[-1] - flow(spec, xi - h * e, 1.0, 1e-12).x[-1]) / (2 * h)
                    for e in np.eye(2)
                ])
                worst_y = max(worst_y, np.linalg.norm(Y - fd) / np.linalg.norm(fd))
        d["jacobian"] = f"{worst_j:.1e}"
        d["variational"] = f"{worst_y:.1e}"
        assert worst_j <= 1e-6
        assert worst_y <= 1e-4


def test_c11_scale_and_sign(systems):
    with criterion(11, "invariance under z0 -> -z0 and z0 -> 7 z0"):
        for name in ("circle_box", "vanderpol"):
            an = systems[name]
            region = an.config.region
            base_total = theorem2_degree(an.spec, an.cycle, an.adjoint, an.bf, region).total
            zs = [z.theta_star for z in an.bf.zeros]
            probes = [(0.3, 2.0), (1.0, 4.0)]  # endpoints away from the zeros of f
            base_deg = [degree_on_interval(an.bf, a, b) for a, b in probes]
            for k in (-1.0, 7.0):
                adj = an.adjoint.scaled(k)
                bf = sample_f(an.cycle, adj, an.spec)
                assert len(bf.zeros) == len(zs)
                assert max(abs(a.theta_star - b) for a, b in zip(bf.zeros, zs)) <= 1e-10
                assert [degree_on_interval(bf, a, b) for a, b in probes] == base_deg
                assert theorem2_degree(an.spec, an.cycle, adj, bf, region).total == base_total
