"""Numerical confirmation of predicted T-periodic solutions at small eps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .cyclefind import MAX_HALVINGS, MAX_NEWTON, integration_tol
from .errors import CycleDegError, NoConvergence, PartialSweep, SingularJacobian
from .odeflow import flow, flow_with_variational

DISTANCE_SAMPLES = 512


@dataclass(frozen=True)
class PerturbedOrbit:
    eps: float
    xi_eps: np.ndarray
    residual: float
    theta_hat: float
    sup_distance: float
    iterations: int = 0


@dataclass(frozen=True)
class SweepReport:
    eps: tuple[float, ...]
    sup_distance: tuple[float, ...]
    slope: float
    slope_residual: float
    orbits: tuple[PerturbedOrbit, ...] = field(default=(), repr=False)

    def rows(self):
        return list(zip(self.eps, self.sup_distance))


def nearest_phase(cycle, point, samples=DISTANCE_SAMPLES):
    """Phase s minimizing |x0(s) - point|, refined on the dense trajectory."""
    T = cycle.T
    s = np.arange(samples) * (T / samples)
    d = np.linalg.norm(cycle.state(s) - point, axis=1)
    i = int(np.argmin(d))
    h = T / samples
    res = minimize_scalar(
        lambda th: float(np.linalg.norm(cycle.state(th) - point)),
        bounds=(s[i] - h, s[i] + h),
        method="bounded",
        options={"xatol": 1e-12 * T},
    )
    return float(np.mod(res.x, T)), float(res.fun)


def sup_distance(cycle, traj, zeros=None, samples=DISTANCE_SAMPLES):
    """max_t of the distance from x_eps(t) to x0(t + Theta).

    With no zero set, distance to the whole curve x0([0, T]) is used.
    """
    n = cycle.spec.n
    t = np.arange(samples + 1) * (cycle.T / samples)
    xe = traj(t)[:, :n]
    if zeros:
        d = np.min(
            [np.linalg.norm(xe - cycle.state(t + th), axis=1) for th in zeros], axis=0
        )
        return float(np.max(d))
    return float(np.max(_distances_to_curve(cycle, xe)))


def _distances_to_curve(cycle, pts, samples=DISTANCE_SAMPLES, iters=60):
    """Distance from each row of ``pts`` to x0([0, T]); batched golden-section refinement."""
    T = cycle.T
    h = T / samples
    s = np.arange(samples) * h
    grid = cycle.state(s)
    d2 = np.sum((pts[:, None, :] - grid[None, :, :]) ** 2, axis=2)
    best = s[np.argmin(d2, axis=1)]
    lo, hi = best - h, best + h
    dist = lambda th: np.linalg.norm(cycle.state(th) - pts, axis=1)  # noqa: E731
    r = 0.5 * (math.sqrt(5) - 1)
    a, b = hi - r * (hi - lo), lo + r * (hi - lo)
    fa, fb = dist(a), dist(b)
    for _ in range(iters):
        left = fa < fb
        hi = np.where(left, b, hi)
        lo = np.where(left, lo, a)
        a_new = np.where(left, hi - r * (hi - lo), b)
        b_new = np.where(left, a, lo + r * (hi - lo))
        a, b = a_new, b_new
        fa, fb = dist(a), dist(b)
    return np.minimum(np.minimum(fa, fb), np.sqrt(np.min(d2, axis=1)))


def _curved_step(cycle, xi, dx, phase_tol=1e-2):
    """Damped update ``lam -> xi + lam*dx`` that follows the cycle for large phase moves.

    A long straight step along the tangent leaves the cycle quadratically,
    which stalls the line search; the tangential part is taken along x0.
    """
    th, _ = nearest_phase(cycle, xi)
    base = cycle.state(th)
    v = cycle.velocity(th)
    dth = float(dx @ v / (v @ v))
    if abs(dth) <= phase_tol:
        return lambda lam: xi + lam * dx
    normal = dx - dth * v
    offset = xi - base
    return lambda lam: cycle.state(th + lam * dth) + offset + lam * normal


def find_perturbed_orbit(spec, cycle, theta0, eps, zeros=None, tol=1e-10, seed=None,
                         cond_max=1e12) -> PerturbedOrbit:
    """Fixed point of the perturbed time-T map by damped Newton.

    Seeded at ``x0(theta0)`` (or ``seed`` when warm-starting).  At ``eps = 0``
    the map is degenerate along the cycle, so only the residual is checked.
    """
    if not 0.0 <= eps <= 0.1:
        raise ValueError("eps must lie in [0, 0.1]")
    n, T = spec.n, spec.T
    itol = integration_tol(tol)
    if seed is None:
        xi = flow(cycle.spec, cycle.xi0, theta0, itol).x[-1] if theta0 > 0 else cycle.xi0.copy()
    else:
        xi = np.asarray(seed, dtype=float).copy()
    bound = lambda x: 1e-9 * (1 + np.linalg.norm(x))  # noqa: E731

    fr = flow_with_variational(spec, xi, T, itol, eps=eps)
    F = fr.state - xi
    it = 0
    if eps == 0.0:
        if np.linalg.norm(F) > bound(xi):
            raise NoConvergence(f"x0(theta0) is not a fixed point of the unperturbed map (|F|={np.linalg.norm(F):.3e})")
    while np.linalg.norm(F) > bound(xi):
        if it >= MAX_NEWTON:
            raise NoConvergence(f"perturbed orbit: no convergence after {MAX_NEWTON} steps")
        J = fr.variational - np.eye(n)
        c = np.linalg.cond(J)
        if not c <= cond_max:
            raise SingularJacobian(f"I - x_eps'(T) has condition {c:.3e}")
        dx = np.linalg.solve(J, -F)
        step = _curved_step(cycle, xi, dx)
        r0 = np.linalg.norm(F)
        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = step(lam)
            cand = flow_with_variational(spec, trial, T, itol, eps=eps)
            Fc = cand.state - trial
            if np.linalg.norm(Fc) < r0:
                break
            lam *= 0.5
        xi = trial
        fr, F = cand, Fc
        it += 1

    traj = fr.trajectory
    theta_hat, _ = nearest_phase(cycle, xi)
    dist = sup_distance(cycle, traj, zeros)
    return PerturbedOrbit(eps, xi, float(np.linalg.norm(F)), theta_hat, dist, it)


def _fit_slope(eps, dist):
    le, ld = np.log(eps), np.log(dist)
    if len(eps) < 2 or not np.all(np.isfinite(ld)):
        return float("nan"), float("nan")
    coef, res, *_ = np.polyfit(le, ld, 1, full=True)
    return float(coef[0]), float(res[0]) if len(res) else 0.0


def epsilon_sweep(spec, cycle, adj, bf, theta0, eps0=1e-2, halvings=8, tol=1e-10) -> SweepReport:
    """Perturbed orbits at ``eps0 * 2**-k``, k = 0..halvings, warm-started.

    The log-log slope of sup_distance against eps estimates the convergence
    rate of the periodic solutions to the cycle.
    """
    if not 4 <= halvings <= 12:
        raise ValueError("halvings must lie in [4, 12]")
    if not 0 < eps0 <= 1e-2:
        raise ValueError("eps0 must lie in (0, 1e-2]")
    zeros = [z.theta_star for z in bf.sign_changes()] or None
    orbits = []
    seed = None
    for k in range(halvings + 1):
        e = eps0 * 2.0**-k
        try:
            orb = find_perturbed_orbit(spec, cycle, theta0, e, zeros, tol, seed=seed)
        except CycleDegError as exc:
            if not orbits:
                raise
            raise PartialSweep(_report(orbits), exc) from exc
        orbits.append(orb)
        seed = orb.xi_eps
    return _report(orbits)


def _report(orbits):
    eps = tuple(o.eps for o in orbits)
    dist = tuple(o.sup_distance for o in orbits)
    arr = np.array(dist)
    if np.all(arr > 1e-12):
        slope, resid = _fit_slope(np.array(eps), arr)
    else:
        slope, resid = float("nan"), float("nan")
    return SweepReport(eps, dist, slope, resid, tuple(orbits))


# ---------------------------------------------------------------------------
# existence verdicts


@dataclass(frozen=True)
class Verdict:
    name: str
    applies: bool
    witness: dict


@dataclass(frozen=True)
class ConditionSummary:
    verdicts: tuple[Verdict, ...]

    def __getitem__(self, name):
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)


def check_existence_conditions(bf, report) -> ConditionSummary:
    """Which existence statements the computed data certify."""
    entering = [c for c in report.contributions if c.theta_exit is not None]
    brackets = [z for z in bf.sign_changes()]
    signs = [(c.phase, int(np.sign(c.f_start)), int(np.sign(c.f_end))) for c in entering]
    v = [
        Verdict(
            "theorem3",
            report.total != 0,
            {"total": report.total, "d_psi": report.d_psi,
             "terms": [(c.phase, c.beta, c.interval_degree) for c in entering]},
        ),
        Verdict(
            "corollary3",
            report.d_psi != 0 and all(a == b for _, a, b in signs),
            {"d_psi": report.d_psi, "endpoint_signs": signs},
        ),
        Verdict(
            "theorem4",
            bool(brackets),
            {"brackets": [(z.bracket, int(np.sign(bf(z.bracket[0]))), int(np.sign(bf(z.bracket[1]))))
                          for z in brackets]},
        ),
    ]
    zeros = [z.theta_star for z in brackets]
    for name in ("corollary4", "corollary5", "malkin"):
        v.append(Verdict(name, bool(zeros), {"sign_change_zeros": zeros}))
    v.append(
        Verdict(
            "identically_zero_suspect",
            bf.identically_zero,
            {"max_abs_f": bf.max_abs},
        )
    )
    return ConditionSummary(tuple(v))
