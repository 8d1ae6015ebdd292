"""Newton shooting for nondegenerate limit cycles and their Floquet data."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCycle, NoConvergence, SectionMiss
from .odeflow import EventSpec, Trajectory, flow, flow_with_variational, integrate, locate_event

log = logging.getLogger(__name__)

MAX_NEWTON = 50
MAX_HALVINGS = 8


def integration_tol(tol):
    """Integrate well below the closure tolerance so the shooting map is exact enough."""
    return min(1e-3, max(1e-13, 1e-2 * tol))


@dataclass(frozen=True)
class Section:
    """Phase condition ``x_coord = value`` crossed in ``direction`` (+1/-1).

    ``coord`` is 1-based, matching the ``x1..xn`` variable names.
    """

    coord: int
    value: float
    direction: int = 1

    @property
    def k(self):
        return self.coord - 1


@dataclass(frozen=True)
class LimitCycle:
    spec: object
    xi0: np.ndarray
    T: float
    p: int
    trajectory: Trajectory
    monodromy: np.ndarray
    multipliers: np.ndarray
    trivial_index: int
    beta: int
    nondegenerate: bool

    @property
    def least_period(self):
        return self.T / self.p

    def state(self, t):
        """x0(t), extended T-periodically."""
        return self.trajectory(t)[..., : self.spec.n]

    def velocity(self, t):
        """dx0/dt = psi(x0(t)); accepts scalar or 1-d array ``t``."""
        x = self.state(t)
        if np.ndim(t) == 0:
            return self.spec.field(x)
        return self.spec.field_batch(x.T).T


def multipliers_and_beta(monodromy, mult_tol=1e-6):
    """Characteristic multipliers, index of the trivial one, and beta.

    beta is chosen so that ``(-1)**beta == sign det(I - M~)`` where ``M~`` is
    the monodromy restricted to the invariant complement ``range(M - I)`` of
    the trivial eigendirection; it equals the number of real multipliers
    above 1 plus two per complex pair outside the unit circle.
    """
    M = np.asarray(monodromy, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("monodromy must be finite")
    n = M.shape[0]
    lam = np.linalg.eigvals(M)
    trivial = int(np.argmin(np.abs(lam - 1)))
    near = int(np.sum(np.abs(lam - 1) <= mult_tol))
    if near != 1:
        raise DegenerateCycle(
            f"{near} characteristic multipliers within {mult_tol} of 1: {lam}"
        )
    others = np.delete(lam, trivial)
    real = np.abs(others.imag) <= 1e-12 * np.maximum(1.0, np.abs(others))
    count = int(np.sum(real & (others.real > 1 + mult_tol)))
    count += int(np.sum(~real & (np.abs(others) > 1 + mult_tol) & (others.imag > 0))) * 2

    if n == 1:
        return lam, trivial, 0, True
    # deflate: orthonormal basis of range(M - I) is invariant under M
    U, _, _ = np.linalg.svd(M - np.eye(n))
    Q = U[:, : n - 1]
    Mr = Q.T @ M @ Q
    sign = np.sign(np.linalg.det(np.eye(n - 1) - Mr))
    beta = count
    if sign != 0 and (-1) ** beta != sign:
        log.warning("multiplier count %d disagrees with det sign %s; using det", count, sign)
        beta += 1
    return lam, trivial, beta, True


def _section_row(n, k):
    row = np.zeros(n)
    row[k] = 1.0
    return row


def _newton(residual, jac_and_res, x, max_iter, tol_fn, what, mult_tol=1e-6):
    """Damped Newton: halve the step while the residual norm does not decrease."""
    G, J, extra = jac_and_res(x)
    for it in range(max_iter):
        if tol_fn(x, G, extra):
            return x, extra, it
        if np.linalg.cond(J) > 1e10:
            # a singular bordered Jacobian means a multiple multiplier 1
            multipliers_and_beta(extra.variational, mult_tol)
        try:
            dx = np.linalg.solve(J, -G)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(J, -G, rcond=None)[0]
        r0 = np.linalg.norm(G)
        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            xt = x + lam * dx
            try:
                Gt = residual(xt)
            except Exception:  # noqa: BLE001 - integration failure counts as no decrease
                Gt = None
            if Gt is not None and np.linalg.norm(Gt) < r0:
                break
            lam *= 0.5
        else:
            xt = x + lam * 2 * dx
        x = xt
        G, J, extra = jac_and_res(x)
    if tol_fn(x, G, extra):
        return x, extra, max_iter
    raise NoConvergence(f"{what}: no convergence after {max_iter} Newton steps (|G|={np.linalg.norm(G):.3e})")


def find_cycle(spec, seed, section: Section, tol=1e-10, mult_tol=1e-6) -> LimitCycle:
    """Shoot for a fixed point of the time-T map on the given section."""
    if not spec.T or spec.T <= 0:
        raise ValueError("spec.T must be a positive period")
    n, k, T = spec.n, section.k, spec.T
    itol = integration_tol(tol)
    keep = [i for i in range(n) if i != k]

    def residual(xi):
        d = flow(spec, xi, T, itol).x[-1] - xi
        return np.append(d[keep], xi[k] - section.value)

    def jac_and_res(xi):
        fr = flow_with_variational(spec, xi, T, itol)
        d = fr.state - xi
        G = np.append(d[keep], xi[k] - section.value)
        J = np.vstack([(fr.variational - np.eye(n))[keep], _section_row(n, k)])
        return G, J, fr

    def converged(xi, G, fr):
        close = np.linalg.norm(fr.state - xi) <= tol * (1 + np.linalg.norm(xi))
        return close and abs(G[-1]) <= tol * (1 + abs(section.value))

    xi = np.asarray(seed, dtype=float).copy()
    xi, fr, _ = _newton(residual, jac_and_res, xi, MAX_NEWTON, converged, "find_cycle", mult_tol)
    return _assemble(spec, xi, T, fr, section, tol, mult_tol)


def _assemble(spec, xi, T, fr, section, tol, mult_tol):
    n = spec.n
    v = spec.field(xi)
    speed = np.linalg.norm(v)
    if speed <= 1e-8 * (1 + np.linalg.norm(xi)) or v[section.k] * section.direction <= 1e-8 * speed:
        raise SectionMiss(
            f"orbit through {xi} does not cross x{section.coord}={section.value} "
            f"transversally in direction {section.direction:+d}"
        )
    lam, trivial, beta, nondeg = multipliers_and_beta(fr.variational, mult_tol)
    traj = fr.trajectory.with_period(T)
    cyc = LimitCycle(spec, xi, T, 1, traj, fr.variational, lam, trivial, beta, nondeg)
    p = least_period_divisor(cyc)
    if p != 1:
        cyc = LimitCycle(spec, xi, T, p, traj, fr.variational, lam, trivial, beta, nondeg)
    return cyc


def _first_returns(spec, seed, section, tol, horizon=2000.0, chunk=50.0, count=2):
    """Times and states of the first ``count`` section crossings from ``seed``."""
    k, c, d = section.k, section.value, section.direction
    ev = EventSpec(lambda x: x[k] - c, direction=d, transversality_tol=0.0)
    x = np.asarray(seed, dtype=float)
    t0 = 0.0
    hits = []
    while t0 < horizon and len(hits) < count:
        tr = integrate(lambda t, y: spec.field(y), x, (t0, t0 + chunk), tol)
        a = t0 if not hits else max(t0, hits[-1][0])
        while len(hits) < count:
            te = locate_event(tr, ev, (a, tr.t1))
            if te is None:
                break
            if te <= a + 1e-9 * chunk:
                # a crossing coinciding with the last one found
                a = a + 1e-9 * chunk
                continue
            hits.append((te, tr(te)))
            a = te
        t0, x = tr.t1, tr.x[-1]
    if len(hits) < count:
        raise NoConvergence(f"orbit from {seed} does not return to the section within t={horizon}")
    return hits


def period_solve(spec, seed, section: Section, tol=1e-10, mult_tol=1e-6):
    """Find a cycle and its least period by Newton on ``(xi, T)``.

    Returns ``(xi0, T_least)``.
    """
    n, k = spec.n, section.k
    itol = integration_tol(tol)
    (t1, x1), (t2, _) = _first_returns(spec, seed, section, tol=max(tol, 1e-9))
    z = np.append(x1, t2 - t1)

    def residual(z):
        xi, T = z[:n], z[n]
        if not T > 0:
            raise NoConvergence("period estimate became non-positive")
        d = flow(spec, xi, T, itol).x[-1] - xi
        return np.append(d, xi[k] - section.value)

    def jac_and_res(z):
        xi, T = z[:n], z[n]
        fr = flow_with_variational(spec, xi, T, itol)
        G = np.append(fr.state - xi, xi[k] - section.value)
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = fr.variational - np.eye(n)
        J[:n, n] = spec.field(fr.state)
        J[n, k] = 1.0
        return G, J, fr

    def converged(z, G, fr):
        xi = z[:n]
        return np.linalg.norm(G[:n]) <= tol * (1 + np.linalg.norm(xi)) and abs(G[n]) <= tol * (
            1 + abs(section.value)
        )

    z, fr, _ = _newton(residual, jac_and_res, z, MAX_NEWTON, converged, "period_solve", mult_tol)
    xi, T = z[:n], float(z[n])
    # raises DegenerateCycle / SectionMiss like find_cycle
    _assemble(spec.with_period(T), xi, T, fr, section, tol, mult_tol)
    return xi, T


def solve_cycle(spec, seed, section: Section, tol=1e-10, mult_tol=1e-6):
    """Cycle for ``spec``; solves for the period first when ``spec.T`` is None.

    Returns ``(spec_with_period, LimitCycle)``.
    """
    if spec.T is None:
        xi, T = period_solve(spec, seed, section, tol, mult_tol)
        spec = spec.with_period(T)
        seed = xi
    return spec, find_cycle(spec, seed, section, tol, mult_tol)


def least_period_divisor(cycle: LimitCycle, tol=1e-6, max_p=64) -> int:
    """Largest p <= max_p such that x(T/p, xi0) returns to xi0."""
    xi = cycle.xi0
    bound = tol * (1 + np.linalg.norm(xi))
    for p in range(max_p, 1, -1):
        tp = cycle.T / p
        # cheap screen on the dense trajectory, then confirm by integration
        if np.linalg.norm(cycle.state(tp) - xi) > max(1e3 * bound, 1e-4):
            continue
        end = flow(cycle.spec, xi, tp, 1e-11).x[-1]
        if np.linalg.norm(end - xi) <= bound:
            return p
    return 1
