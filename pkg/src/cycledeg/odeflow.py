"""Adaptive Dormand-Prince 5(4) integration with cubic Hermite dense output.

Also provides the variational (first-variation) flow, the adjoint equation
along a stored cycle, and sign-scan/bisection event location.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import GrazingContact, NonFiniteState, NonFiniteValue, StepSizeUnderflow

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between the 5th and embedded 4th order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

MAX_STEPS = 200_000


class Trajectory:
    """Accepted integration nodes with cubic Hermite interpolation.

    ``x`` has shape ``(m+1,) + state_shape``.  When ``period`` is set, times
    outside the stored span are reduced modulo the period (periodic orbits).
    """

    interpolation = "cubic_hermite"

    def __init__(self, t, x, dx, period=None):
        self.t = np.asarray(t, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.dx = np.asarray(dx, dtype=float)
        self.period = period
        for a in (self.t, self.x, self.dx):
            a.setflags(write=False)

    @property
    def t0(self):
        return self.t[0]

    @property
    def t1(self):
        return self.t[-1]

    @property
    def state_shape(self):
        return self.x.shape[1:]

    def with_period(self, period):
        return Trajectory(self.t, self.x, self.dx, period)

    def scaled(self, k):
        return Trajectory(self.t, k * self.x, k * self.dx, self.period)

    def _reduce(self, t):
        t = np.asarray(t, dtype=float)
        if self.period:
            t = self.t0 + np.mod(t - self.t0, self.period)
        return t

    def __call__(self, t):
        """States at time(s) ``t``; result shape ``np.shape(t) + state_shape``."""
        t = self._reduce(t)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        i = np.clip(np.searchsorted(self.t, tt, side="right") - 1, 0, len(self.t) - 2)
        if len(self.t) == 1:
            out = np.broadcast_to(self.x[0], tt.shape + self.state_shape).copy()
            return out[0] if scalar else out
        t0, t1 = self.t[i], self.t[i + 1]
        h = t1 - t0
        s = (tt - t0) / h
        extra = (slice(None),) + (None,) * len(self.state_shape)
        s = s[extra]
        h = h[extra]
        s2, s3 = s * s, s * s * s
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        # h00 = 1 - h01; this form keeps constant segments exactly constant
        x0 = self.x[i]
        out = x0 + h01 * (self.x[i + 1] - x0) + h * (h10 * self.dx[i] + h11 * self.dx[i + 1])
        # exact reproduction of nodes
        hit = tt == self.t[i + 1]
        if np.any(hit):
            out[hit] = self.x[i + 1][hit]
        return out[0] if scalar else out


@dataclass(frozen=True)
class FlowResult:
    state: np.ndarray
    variational: np.ndarray
    trajectory: Trajectory


@dataclass(frozen=True)
class EventSpec:
    """Scalar event ``g(x)``; ``direction`` +1 upward, -1 downward, 0 any."""

    g: Callable
    direction: int = 0
    transversality_tol: float = 1e-9


def _initial_step(rhs, t, y, f0, tol, span):
    scale = tol * (1 + np.abs(y))
    d0 = np.max(np.abs(y) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = rhs(t + h0, y + h0 * f0)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def integrate(rhs, x0, t_span, tol=1e-10, max_step=None) -> Trajectory:
    """Integrate ``x' = rhs(t, x)`` over ``t_span`` with Dormand-Prince 5(4).

    The local error of every accepted step satisfies
    ``|err_i| <= tol * (1 + |x_i|)`` componentwise.  ``x0`` may have any
    shape (batched states are integrated with a common step size).
    """
    ta, tb = map(float, t_span)
    if not ta < tb:
        raise ValueError("t_span must be increasing")
    if not 1e-13 <= tol <= 1e-3:
        raise ValueError("tol must lie in [1e-13, 1e-3]")
    span = tb - ta
    hmin = 1e-14 * span
    max_step = span if max_step is None else max_step

    y = np.array(x0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NonFiniteState("initial state is not finite")
    f = np.asarray(rhs(ta, y), dtype=float)
    if not np.all(np.isfinite(f)):
        raise NonFiniteState(f"vector field is not finite at t={ta!r}")
    ts, xs, fs = [ta], [y], [f]
    t = ta
    h = min(_initial_step(rhs, t, y, f, tol, span), max_step)
    k = [None] * 7
    last_error = None

    for _ in range(MAX_STEPS):
        if t >= tb:
            break
        if h < hmin:
            if last_error is not None:
                raise NonFiniteState(f"state left the finite range near t={t!r}") from last_error
            raise StepSizeUnderflow(f"step size {h!r} below {hmin!r} at t={t!r}")
        final = t + h >= tb or (tb - (t + h)) < hmin
        if final:
            h = tb - t
        k[0] = f
        try:
            for s in range(1, 7):
                ys = y + h * sum(a * k[j] for j, a in enumerate(_A[s]) if a != 0.0)
                k[s] = np.asarray(rhs(t + _C[s] * h, ys), dtype=float)
            ynew = y + h * sum(b * k[j] for j, b in enumerate(_B) if b != 0.0)
            ok = np.all(np.isfinite(ynew)) and np.all(np.isfinite(k[6]))
        except NonFiniteValue as exc:
            ok, last_error = False, exc
        if not ok:
            h *= 0.25
            if last_error is None:
                last_error = NonFiniteState(f"non-finite stage near t={t!r}")
            continue
        err_vec = h * sum(e * k[j] for j, e in enumerate(_E) if e != 0.0)
        sc = tol * (1.0 + np.maximum(np.abs(y), np.abs(ynew)))
        err = float(np.max(np.abs(err_vec) / sc)) if err_vec.size else 0.0
        if err <= 1.0:
            t = tb if final else t + h
            y = ynew
            f = k[6]
            ts.append(t)
            xs.append(y)
            fs.append(f)
            last_error = None
            fac = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
            h = min(h * fac, max_step)
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
    else:
        raise StepSizeUnderflow(f"exceeded {MAX_STEPS} steps before reaching t={tb!r}")
    return Trajectory(ts, xs, fs)


def _constant_trajectory(t, x, dx):
    return Trajectory([t], [x], [dx])


def flow_with_variational(spec, x0, t_end, tol=1e-10, eps=0.0) -> FlowResult:
    """Flow of ``x' = psi(x) + eps*phi(t,x,eps)`` with its derivative in ``x0``.

    Integrates the augmented system ``(x, Y)`` with ``Y' = J(t,x) Y``,
    ``Y(0) = I``; returns ``x(t_end)`` and ``Y(t_end)``.
    """
    n = spec.n
    x0 = np.asarray(x0, dtype=float)
    rhs = augmented_rhs(spec, eps)
    z0 = np.concatenate([x0, np.eye(n).ravel()])
    if t_end == 0:
        traj = _constant_trajectory(0.0, z0, rhs(0.0, z0))
    else:
        traj = integrate(rhs, z0, (0.0, t_end), tol)
    end = traj.x[-1]
    return FlowResult(end[:n].copy(), end[n:].reshape(n, n).copy(), traj)


def augmented_rhs(spec, eps=0.0):
    n = spec.n

    def rhs(t, z):
        x = z[:n]
        Y = z[n:].reshape(n, n)
        fx = spec.field(x)
        J = spec.jacobian(x)
        if eps:
            fx = fx + eps * spec.perturbation(t, x, eps)
            J = J + eps * spec.perturbation_jacobian(t, x, eps)
        return np.concatenate([fx, (J @ Y).ravel()])

    return rhs


def flow(spec, x0, t_end, tol=1e-10, eps=0.0) -> Trajectory:
    """Plain (non-variational) flow; ``x0`` may be a batch of shape ``(n, m)``."""
    x0 = np.asarray(x0, dtype=float)
    batched = x0.ndim == 2

    def rhs(t, x):
        if batched:
            fx = spec.field_batch(x)
            if eps:
                fx = fx + eps * spec.perturbation_batch(t, x, eps)
            return fx
        fx = spec.field(x)
        if eps:
            fx = fx + eps * spec.perturbation(t, x, eps)
        return fx

    if t_end == 0:
        return _constant_trajectory(0.0, x0, rhs(0.0, x0))
    return integrate(rhs, x0, (0.0, t_end), tol)


def integrate_adjoint(spec, cycle_traj, z_start, t_span, tol=1e-10, backward=False) -> Trajectory:
    """Solve ``z' = -J(x0(t))^T z`` along the stored trajectory ``cycle_traj``.

    With ``backward=False`` the value ``z_start`` is imposed at ``t_span[0]``;
    with ``backward=True`` it is imposed at ``t_span[1]`` and the equation is
    integrated in reversed time, which is the numerically stable direction
    for the adjoint of a contracting cycle.
    """
    ta, tb = map(float, t_span)
    z_start = np.asarray(z_start, dtype=float)
    n = spec.n
    xdim = slice(0, n)
    if not backward:

        def rhs(t, z):
            return -spec.jacobian(cycle_traj(t)[xdim]).T @ z

        return integrate(rhs, z_start, (ta, tb), tol)

    def rhs_rev(s, z):
        return spec.jacobian(cycle_traj(tb - s)[xdim]).T @ z

    rev = integrate(rhs_rev, z_start, (0.0, tb - ta), tol)
    return Trajectory(tb - rev.t[::-1], rev.x[::-1], -rev.dx[::-1])


def scan_times(traj, a, b, density=4):
    """Trajectory node times inside [a, b], each interval split ``density`` ways."""
    if traj.period:
        P = traj.period
        k0 = np.floor((a - traj.t0) / P)
        k1 = np.ceil((b - traj.t0) / P)
        nodes = np.concatenate([traj.t[:-1] + k * P for k in np.arange(k0, k1 + 1)])
    else:
        nodes = traj.t
    nodes = nodes[(nodes > a) & (nodes < b)]
    nodes = np.concatenate([[a], nodes, [b]])
    frac = np.arange(density) / density
    fine = (nodes[:-1, None] + np.diff(nodes)[:, None] * frac[None, :]).ravel()
    return np.append(fine, b)


def _g_values(traj, g, times, state_slice=None):
    states = traj(times)
    if state_slice is not None:
        states = states[:, state_slice]
    return np.array([g(s) for s in states])


def _refine_min(traj, g, times, absvals, state_slice=None):
    """Local minimum of |g| around the smallest scanned value."""
    j = int(np.argmin(absvals))
    lo, hi = times[max(j - 1, 0)], times[min(j + 1, len(times) - 1)]
    if hi <= lo:
        return float(times[j]), float(absvals[j])

    def absg(t):
        x = traj(t)
        return abs(float(g(x if state_slice is None else x[state_slice])))

    res = minimize_scalar(absg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * (hi - lo + 1)})
    if res.fun < absvals[j]:
        return float(res.x), float(res.fun)
    return float(times[j]), float(absvals[j])


def locate_event(traj, ev: EventSpec, search, state_slice=None):
    """Earliest crossing of ``ev.g`` along ``traj`` inside ``search``.

    Returns the crossing time, or ``None`` when there is none.  Raises
    :class:`GrazingContact` when ``|g|`` gets below the transversality
    tolerance without a sign change, or when the located root has slope
    below the square root of that tolerance.
    """
    a, b = map(float, search)
    times = scan_times(traj, a, b)
    vals = _g_values(traj, ev.g, times, state_slice)
    s = np.sign(vals)
    up = (s[:-1] < 0) & (s[1:] >= 0)
    down = (s[:-1] > 0) & (s[1:] <= 0)
    if ev.direction > 0:
        cross = up
    elif ev.direction < 0:
        cross = down
    else:
        cross = up | down
    idx = np.flatnonzero(cross)
    if len(idx) == 0:
        any_change = np.flatnonzero(up | down)
        quiet = np.abs(vals)
        if len(any_change) == 0:
            t_min, g_min = _refine_min(traj, ev.g, times, quiet, state_slice)
            if g_min < ev.transversality_tol:
                raise GrazingContact(t_min)
        return None
    i = idx[0]
    lo, hi = times[i], times[i + 1]
    glo = vals[i]
    tol_t = 1e-12 * (b - a)

    def gat(t):
        x = traj(t)
        return ev.g(x if state_slice is None else x[state_slice])

    while hi - lo > tol_t:
        mid = 0.5 * (lo + hi)
        gm = gat(mid)
        if gm == 0.0:
            lo = hi = mid
            break
        if np.sign(gm) == np.sign(glo):
            lo, glo = mid, gm
        else:
            hi = mid
    root = float(0.5 * (lo + hi))
    # a root with (near) zero slope is a touch perturbed by roundoff, not a crossing
    d = 1e-6 * (b - a)
    slope = abs(gat(root + d) - gat(root - d)) / (2 * d)
    if slope < math.sqrt(ev.transversality_tol):
        raise GrazingContact(root)
    return root
