"""Degree of the perturbed period map on a region from unperturbed data.

For a region U (ball or box) the degree of ``I - Omega_eps`` on U, with
``Omega_eps`` the time-T map of the perturbed system, is predicted as

    (-1)^n deg(psi, U) - sum over entering cycle contacts
                         (-1)^beta * deg(f_s, (0, theta_exit))

where ``f_s`` is the bifurcation function of the cycle shifted to the contact
phase ``s`` and ``theta_exit`` the first later phase at which the shifted
cycle leaves U.  The planar winding number supplies an independent check of
both sides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lcg
from .errors import (
    BoundaryZero,
    BoundaryZeroOfPsi,
    ConfigError,
    DegenerateEquilibrium,
    DimensionTooLarge,
    GrazingContact,
    HypothesisViolation,
    UnderResolved,
    ZeroOnBoundary,
)
from .malkinfn import degree_on_interval, shift_f
from .odeflow import EventSpec, flow, locate_event, scan_times

MULTISTART_PER_AXIS = 8
MAX_MULTISTART_DIM = 4
WINDING_POINTS = 4096


@dataclass(frozen=True)
class Region:
    """A ball ``|x - center| < radius`` or a box ``lo < x < hi``.

    ``g`` is the exact signed distance: negative inside, zero on the boundary.
    """

    kind: str
    center: tuple = ()
    radius: float = 0.0
    lo: tuple = ()
    hi: tuple = ()

    @classmethod
    def ball(cls, center, radius):
        if not radius > 0:
            raise ConfigError("ball radius must be positive")
        return cls("ball", center=tuple(map(float, center)), radius=float(radius))

    @classmethod
    def box(cls, lo, hi):
        lo, hi = tuple(map(float, lo)), tuple(map(float, hi))
        if len(lo) != len(hi) or not all(a < b for a, b in zip(lo, hi)):
            raise ConfigError("box needs lo < hi in every coordinate")
        return cls("box", lo=lo, hi=hi)

    @property
    def n(self):
        return len(self.center) if self.kind == "ball" else len(self.lo)

    @property
    def scale(self):
        if self.kind == "ball":
            return self.radius
        return float(np.max(np.subtract(self.hi, self.lo)))

    def bounds(self):
        if self.kind == "ball":
            c = np.array(self.center)
            return c - self.radius, c + self.radius
        return np.array(self.lo), np.array(self.hi)

    def g(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "ball":
            return np.linalg.norm(x - np.array(self.center), axis=-1) - self.radius
        q = np.maximum(np.array(self.lo) - x, x - np.array(self.hi))
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        return outside + np.minimum(np.max(q, axis=-1), 0.0)

    def boundary_point(self, u):
        """Positively oriented planar boundary parametrized by ``u`` in [0, 1)."""
        if self.n != 2:
            raise DimensionTooLarge("boundary curves are only defined for planar regions")
        u = np.mod(np.asarray(u, dtype=float), 1.0)
        if self.kind == "ball":
            a = 2 * np.pi * u
            return np.array(self.center) + self.radius * np.stack([np.cos(a), np.sin(a)], axis=-1)
        (x0, y0), (x1, y1) = self.lo, self.hi
        w, h = x1 - x0, y1 - y0
        s = u * 2 * (w + h)
        out = np.empty(u.shape + (2,))
        for cond, px, py in (
            (s < w, x0 + s, np.full_like(s, y0)),
            ((s >= w) & (s < w + h), np.full_like(s, x1), y0 + (s - w)),
            ((s >= w + h) & (s < 2 * w + h), x1 - (s - w - h), np.full_like(s, y1)),
            (s >= 2 * w + h, np.full_like(s, x0), y1 - (s - 2 * w - h)),
        ):
            out[cond, 0] = px[cond]
            out[cond, 1] = py[cond]
        return out

    def boundary_samples(self, count=None):
        """Points on the boundary: the planar polygon, or LCG points for n != 2."""
        n = self.n
        if n == 2:
            return self.boundary_point(np.arange(count or WINDING_POINTS) / (count or WINDING_POINTS))
        count = count or 256 * n
        u = lcg.uniform(count * n).reshape(count, n)
        if self.kind == "ball":
            d = u - 0.5
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            return np.array(self.center) + self.radius * d
        lo, hi = self.bounds()
        pts = lo + u * (hi - lo)
        face = np.arange(count) % (2 * n)
        axis, upper = face // 2, face % 2
        pts[np.arange(count), axis] = np.where(upper, hi[axis], lo[axis])
        return pts


@dataclass(frozen=True)
class Contact:
    phase: float
    entering: bool
    theta_exit: float | None  # None when the exit set is empty


@dataclass(frozen=True)
class CycleContactReport:
    contacts: tuple[Contact, ...]

    @property
    def entering(self):
        return tuple(c for c in self.contacts if c.entering)


@dataclass(frozen=True)
class Contribution:
    phase: float
    beta: int
    theta_exit: float | None
    interval_degree: int
    f_start: float
    f_end: float | None


@dataclass(frozen=True)
class DegreeReport:
    n: int
    d_psi: int
    contributions: tuple[Contribution, ...]
    total: int
    notes: tuple[str, ...] = field(default=())


def degree_total(n, d_psi, contributions) -> int:
    """(-1)^n d_psi minus the signed interval degrees of nonempty exit sets."""
    s = sum((-1) ** c.beta * c.interval_degree for c in contributions if c.theta_exit is not None)
    return (-1) ** n * d_psi - s


# ---------------------------------------------------------------------------
# contacts of the cycle with the boundary


def cycle_contacts(cycle, region: Region, graze_tol=1e-6) -> CycleContactReport:
    """Phases where the cycle meets the boundary, with first exit phases."""
    n = cycle.spec.n
    traj = cycle.trajectory
    Tl = cycle.least_period
    scale = region.scale
    xs = slice(0, n)

    def g_at(s):
        return float(region.g(cycle.state(s)))

    times = scan_times(traj, 0.0, Tl)
    vals = region.g(cycle.state(times))
    if np.max(np.abs(vals)) < graze_tol * scale:
        raise GrazingContact(0.0, "cycle lies on the region boundary")
    times, vals = times[:-1], vals[:-1]  # last point repeats phase 0
    m = len(times)
    sg = np.sign(vals)
    contacts = []
    for i in range(m):
        j = (i + 1) % m
        if sg[i] * sg[j] >= 0:
            continue
        lo = times[i]
        hi = times[j] if j else Tl
        glo = vals[i]
        while hi - lo > 1e-13 * Tl:
            mid = 0.5 * (lo + hi)
            gm = g_at(mid)
            if np.sign(gm) == np.sign(glo):
                lo, glo = mid, gm
            else:
                hi = mid
        s = float(np.mod(0.5 * (lo + hi), Tl))
        h = 1e-6 * Tl
        slope = (g_at(s + h) - g_at(s - h)) / (2 * h)
        if abs(slope) < graze_tol * scale / Tl:
            raise GrazingContact(s)
        entering = sg[i] > 0
        exit_ = None
        if entering:
            ev = EventSpec(region.g, direction=1, transversality_tol=graze_tol * scale)
            te = locate_event(traj, ev, (s, s + cycle.T), state_slice=xs)
            if te is None:
                raise GrazingContact(s, "entering cycle never leaves the region")
            exit_ = te - s
        contacts.append(Contact(s, bool(entering), exit_))
    # touching minima of |g| without a sign change
    a = np.abs(vals)
    for i in range(m):
        if a[i] < graze_tol * scale and a[i] <= a[i - 1] and a[i] <= a[(i + 1) % m]:
            if sg[i - 1] * sg[i] > 0 and sg[i] * sg[(i + 1) % m] > 0:
                raise GrazingContact(float(times[i]))
    contacts.sort(key=lambda c: c.phase)
    return CycleContactReport(tuple(contacts))


# ---------------------------------------------------------------------------
# Brouwer degree of psi


def _check_psi_on_boundary(spec, region):
    pts = region.boundary_samples()
    vals = spec.field_batch(pts.T)
    norms = np.linalg.norm(vals, axis=0)
    i = int(np.argmin(norms))
    if norms[i] <= 1e-8:
        raise BoundaryZeroOfPsi(f"|psi| = {norms[i]:.3e} at boundary point {pts[i]}")


def find_equilibria(spec, region: Region, per_axis=MULTISTART_PER_AXIS, iters=60):
    """Zeros of psi inside ``region`` by multistart Newton on a jittered grid."""
    n = spec.n
    lo, hi = region.bounds()
    cells = np.stack(np.meshgrid(*[np.arange(per_axis)] * n, indexing="ij"), -1).reshape(-1, n)
    jitter = lcg.uniform(cells.size).reshape(cells.shape)
    X = (lo + (cells + 0.1 + 0.8 * jitter) * (hi - lo) / per_axis).T  # (n, m)
    span = float(np.linalg.norm(hi - lo))
    alive = np.ones(X.shape[1], dtype=bool)
    for _ in range(iters):
        F = spec.field_batch(X[:, alive])
        J = np.moveaxis(spec.jacobian_batch(X[:, alive]), -1, 0)
        det = np.linalg.det(J)
        ok = np.abs(det) > 1e-300
        step = np.zeros_like(F)
        if np.any(ok):
            step[:, ok] = np.linalg.solve(J[ok], -F[:, ok].T[..., None])[..., 0].T
        big = np.linalg.norm(step, axis=0) > span
        step[:, big] *= span / np.linalg.norm(step[:, big], axis=0)
        Xa = X[:, alive] + step
        idx = np.flatnonzero(alive)
        X[:, idx] = Xa
        far = region.g(Xa.T) > 2 * span
        alive[idx[far | ~ok]] = False
        if not np.any(alive):
            break
    F = spec.field_batch(X)
    good = np.all(np.isfinite(X), axis=0) & (np.linalg.norm(F, axis=0) < 1e-10)
    roots = []
    for x in X[:, good].T:
        if all(np.linalg.norm(x - r) > 1e-6 for r in roots):
            roots.append(x)
    out = []
    for r in roots:
        gr = float(region.g(r))
        if abs(gr) <= 1e-9 * region.scale:
            raise BoundaryZeroOfPsi(f"equilibrium {r} lies on the region boundary")
        if gr < 0:
            out.append(r)
    return out


def brouwer_degree_psi(spec, region: Region) -> int:
    """deg(psi, U) as the sum of Jacobian determinant signs at equilibria."""
    if spec.n > MAX_MULTISTART_DIM:
        raise DimensionTooLarge(f"multistart equilibrium search is limited to n <= {MAX_MULTISTART_DIM}")
    if region.n != spec.n:
        raise ConfigError("region dimension differs from system dimension")
    _check_psi_on_boundary(spec, region)
    total = 0
    for r in find_equilibria(spec, region):
        d = float(np.linalg.det(spec.jacobian(r)))
        if abs(d) <= 1e-10:
            raise DegenerateEquilibrium(f"equilibrium {r} has det psi' = {d:.3e}")
        total += int(np.sign(d))
    return total


# ---------------------------------------------------------------------------
# planar winding number


def _wrap(a):
    """Map angle differences into (-pi, pi]."""
    return np.pi - np.mod(np.pi - a, 2 * np.pi)


def winding_degree(field_fn, region: Region, points=WINDING_POINTS, max_refine=2) -> int:
    """Winding number of a planar field along the positively oriented boundary.

    ``field_fn`` maps an ``(N, 2)`` array of points to an ``(N, 2)`` array.
    Boundary segments whose angle increment exceeds pi/2 are subdivided four
    ways, at most ``max_refine`` times.
    """
    if region.n != 2:
        raise DimensionTooLarge("winding numbers need a planar region")
    u = np.arange(points) / points
    vals = np.asarray(field_fn(region.boundary_point(u)), dtype=float)
    for round_ in range(max_refine + 1):
        norms = np.linalg.norm(vals, axis=1)
        if not np.all(norms > 0) or not np.all(np.isfinite(norms)):
            i = int(np.argmin(np.where(np.isfinite(norms), norms, -1)))
            raise ZeroOnBoundary(f"field vanishes at boundary parameter u={u[i]!r}")
        ang = np.arctan2(vals[:, 1], vals[:, 0])
        inc = _wrap(np.diff(np.append(ang, ang[0])))
        bad = np.flatnonzero(np.abs(inc) > np.pi / 2)
        if len(bad) == 0:
            return int(np.rint(np.sum(inc) / (2 * np.pi)))
        if round_ == max_refine:
            break
        nxt = np.append(u[1:], 1.0)
        new_u = (u[bad, None] + (nxt[bad] - u[bad])[:, None] * np.array([0.25, 0.5, 0.75])).ravel()
        new_vals = np.asarray(field_fn(region.boundary_point(new_u)), dtype=float)
        u = np.concatenate([u, new_u])
        vals = np.concatenate([vals, new_vals])
        order = np.argsort(u, kind="stable")
        u, vals = u[order], vals[order]
    raise UnderResolved(
        f"{len(bad)} boundary segments still turn by more than pi/2 after {max_refine} refinements"
    )


def poincare_degree(spec, region: Region, eps, tol=1e-9, points=WINDING_POINTS, max_refine=2) -> int:
    """Winding number of ``xi - x_eps(T, xi)`` on the boundary of a planar region."""
    if spec.n != 2:
        raise DimensionTooLarge("the period-map winding number needs n = 2")
    if eps < 0:
        raise ValueError("eps must be non-negative")

    def displacement(P):
        end = flow(spec, P.T, spec.T, tol, eps=eps).x[-1]
        return P - end.T

    return winding_degree(displacement, region, points, max_refine)


# ---------------------------------------------------------------------------
# the degree formula


def theorem2_degree(spec, cycle, adj, bf, region: Region, contacts=None, d_psi=None) -> DegreeReport:
    """Assemble the predicted degree of ``I - Omega_eps`` on ``region``."""
    if d_psi is None:
        d_psi = brouwer_degree_psi(spec, region)
    if contacts is None:
        contacts = cycle_contacts(cycle, region)
    thresh = 1e-9 * bf.max_abs
    contributions = []
    for c in contacts.contacts:
        fs = shift_f(bf, c.phase)
        f0 = fs(0.0)
        if not abs(f0) > thresh:
            raise HypothesisViolation(c.phase, "start", f0)
        if c.theta_exit is None:
            contributions.append(Contribution(c.phase, cycle.beta, None, 0, f0, None))
            continue
        fe = fs(c.theta_exit)
        if not abs(fe) > thresh:
            raise HypothesisViolation(c.phase, "exit", fe)
        try:
            deg = degree_on_interval(fs, 0.0, c.theta_exit)
        except BoundaryZero as exc:
            raise HypothesisViolation(c.phase, "interval", float("nan")) from exc
        contributions.append(Contribution(c.phase, cycle.beta, c.theta_exit, deg, f0, fe))
    contributions = tuple(contributions)
    return DegreeReport(spec.n, d_psi, contributions, degree_total(spec.n, d_psi, contributions))
