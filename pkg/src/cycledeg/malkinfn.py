"""The Malkin bifurcation function of a cycle under a periodic perturbation.

    f(theta) = sign<x0'(0), z0(0)> * int_0^T <z0(tau), phi(tau - theta, x0(tau), 0)> dtau

evaluated by composite Gauss-Legendre quadrature, plus an independent route
through the integrated inverse variational matrix, zero finding on a
uniform grid, interval degrees and phase shifts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import BoundaryZero, SingularVariationalMatrix
from .odeflow import flow, integrate

GAUSS_NODES = 4
NOISE_FLOOR = 1e-9  # relative level below which sampled signs are not trusted
DEFAULT_PANELS = 64
DEFAULT_SAMPLES = 256


@lru_cache(maxsize=None)
def _gauss_legendre(k):
    return np.polynomial.legendre.leggauss(k)


def quadrature_nodes(T, panels=DEFAULT_PANELS, k=GAUSS_NODES):
    """Nodes and weights of composite k-point Gauss-Legendre on [0, T]."""
    x, w = _gauss_legendre(k)
    h = T / panels
    left = np.arange(panels) * h
    nodes = (left[:, None] + 0.5 * h * (x[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * h * w, panels)
    return nodes, weights


def _f_values(cycle, adj, spec, thetas, panels=DEFAULT_PANELS):
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    T = cycle.T
    tau, w = quadrature_nodes(T, panels)
    x0 = cycle.state(tau)  # (Q, n)
    z0 = adj.z(tau)  # (Q, n)
    out = np.empty(len(thetas))
    # chunks keep the (n, m, Q) temporaries small
    for lo in range(0, len(thetas), 64):
        th = thetas[lo : lo + 64]
        t = np.mod(tau[None, :] - th[:, None], T)
        xb = np.broadcast_to(x0.T[:, None, :], (spec.n, len(th), len(tau)))
        ph = spec.perturbation_batch(t, xb, 0.0)  # (n, m, Q)
        integrand = np.einsum("imq,qi->mq", ph, z0)
        out[lo : lo + 64] = integrand @ w
    return adj.sign_factor * out


def eval_f(cycle, adj, spec, theta, panels=DEFAULT_PANELS) -> float:
    """Bifurcation function at phase ``theta`` (quadrature of the definition)."""
    return float(_f_values(cycle, adj, spec, [theta], panels)[0])


def eval_f_alt(cycle, adj, spec, theta, tol=1e-12, cond_max=1e12) -> float:
    """Bifurcation function through the integrated inverse variational matrix.

    Accumulates ``F(xi) = int_0^T Y(tau, xi)^{-1} phi(tau, x(tau, xi), 0) dtau``
    from ``xi = x0(theta)`` and returns ``sign * <F(xi), z0(theta)>``.
    """
    n = spec.n
    T = cycle.T
    xi = flow(cycle.spec, cycle.xi0, theta, tol).x[-1] if theta > 0 else cycle.xi0

    def rhs(t, u):
        x = u[:n]
        Y = u[n : n + n * n].reshape(n, n)
        dY = spec.jacobian(x) @ Y
        dq = np.linalg.solve(Y, spec.perturbation(t, x, 0.0))
        return np.concatenate([spec.field(x), dY.ravel(), dq])

    u0 = np.concatenate([xi, np.eye(n).ravel(), np.zeros(n)])
    traj = integrate(rhs, u0, (0.0, T), tol)
    Ys = traj.x[:, n : n + n * n].reshape(-1, n, n)
    cond = float(np.max(np.linalg.cond(Ys)))
    if not cond <= cond_max:
        raise SingularVariationalMatrix(f"variational matrix condition {cond:.3e} exceeds {cond_max:.0e}")
    F = traj.x[-1, n + n * n :]
    return float(adj.sign_factor * (F @ adj.z(theta)))


@dataclass(frozen=True)
class ZeroRecord:
    theta_star: float
    kind: str  # "sign_change" or "tangential_suspect"
    bracket: tuple[float, float]
    residual: float
    slope_sign: int = 0


@dataclass(frozen=True)
class BifurcationFunction:
    theta: np.ndarray
    values: np.ndarray
    zeros: tuple[ZeroRecord, ...]
    T: float
    rule: str = "gauss-legendre-4"
    panels: int = DEFAULT_PANELS
    evaluator: object = field(default=None, repr=False, compare=False)
    shift: float = 0.0

    def __call__(self, theta):
        """Exact (quadrature) values of f at arbitrary phases."""
        scalar = np.ndim(theta) == 0
        v = self.evaluator(np.atleast_1d(theta) + self.shift)
        return float(v[0]) if scalar else v

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.values)))

    @property
    def identically_zero(self):
        return self.max_abs == 0.0

    def sign_changes(self):
        return [z for z in self.zeros if z.kind == "sign_change"]


def _bisect(fun, lo, hi, flo, tol):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_zeros(theta, values, fun, T, noise=NOISE_FLOOR):
    """Zero records of a T-periodic function sampled on a uniform grid.

    ``theta``/``values`` cover [0, T] with the last point repeating the first
    phase; ``fun`` evaluates f at a scalar phase for refinement.  Samples with
    ``|f| <= noise * max|f|`` carry no reliable sign; a run of them is a sign
    change when the samples on either side disagree and a tangential suspect
    otherwise.
    """
    m = len(theta) - 1
    v = values[:m]
    scale = float(np.max(np.abs(v))) if m else 0.0
    if scale == 0.0:
        return ()
    h = T / m
    quiet = np.abs(v) <= noise * scale
    s = np.where(quiet, 0.0, np.sign(v))
    loud = np.flatnonzero(~quiet)
    zeros = []
    for a, b in zip(loud, np.roll(loud, -1)):
        gap = (b - a) % m or m
        lo, hi = float(theta[a]), float(theta[a] + gap * h)
        if s[a] != s[b]:
            ts = _bisect(fun, lo, hi, v[a], 1e-10 * T)
            zeros.append(ZeroRecord(float(np.mod(ts, T)), "sign_change", (lo, hi), abs(fun(ts)), int(s[b])))
        elif gap > 1:
            run = (a + 1 + np.arange(gap - 1)) % m
            k = run[np.argmin(np.abs(v[run]))]
            zeros.append(ZeroRecord(float(theta[k]), "tangential_suspect", (lo, hi), float(abs(v[k]))))
    # local minima of |f| well above the noise floor, without a sign change
    absv = np.abs(v)
    for i in loud:
        prev, nxt = (i - 1) % m, (i + 1) % m
        if not (absv[i] <= absv[prev] and absv[i] <= absv[nxt]):
            continue
        if s[prev] != s[i] or s[nxt] != s[i]:
            continue
        lo, hi = theta[i] - h, theta[i] + h
        res = minimize_scalar(lambda th: abs(fun(th)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10 * T})
        if res.fun < 1e-6 * scale:
            zeros.append(
                ZeroRecord(float(np.mod(res.x, T)), "tangential_suspect", (float(lo), float(hi)), float(res.fun))
            )
    zeros.sort(key=lambda z: z.theta_star)
    return tuple(zeros)


def sample_f(cycle, adj, spec, m=DEFAULT_SAMPLES, panels=DEFAULT_PANELS) -> BifurcationFunction:
    """Sample f on ``m+1`` uniform phases of [0, T] and classify its zeros."""
    if m < 16:
        raise ValueError("at least 16 samples are required")
    T = cycle.T

    def evaluator(th):
        return _f_values(cycle, adj, spec, np.mod(th, T), panels)

    return _sampled(evaluator, T, m, panels)


def _sampled(evaluator, T, m, panels, shift=0.0):
    theta = np.arange(m + 1) * (T / m)
    values = evaluator(theta + shift)

    def fun(th):
        return float(evaluator(np.array([th + shift]))[0])

    zeros = find_zeros(theta, values, fun, T)
    return BifurcationFunction(theta, values, zeros, T, panels=panels, evaluator=evaluator, shift=shift)


def degree_on_interval(bf: BifurcationFunction, a, b) -> int:
    """Brouwer degree of f on (a, b): (sign f(b) - sign f(a)) / 2."""
    fa, fb = bf(a), bf(b)
    thresh = 1e-9 * bf.max_abs
    for where, val in (("a", fa), ("b", fb)):
        if not abs(val) > thresh:
            raise BoundaryZero(f"f({where}) = {val!r} is below the nondegeneracy threshold {thresh:.3e}")
    return int((np.sign(fb) - np.sign(fa)) // 2)


def shift_f(bf: BifurcationFunction, s) -> BifurcationFunction:
    """Bifurcation function of the shifted cycle: theta -> f(theta + s)."""
    s = float(np.mod(s, bf.T))
    if s == 0.0:
        return bf
    m = len(bf.theta) - 1
    step = bf.T / m
    k = s / step
    if abs(k - round(k)) <= 1e-12 * m:
        # on-grid shift: reindex the stored samples
        k = int(round(k)) % m
        values = np.append(np.roll(bf.values[:m], -k), bf.values[k])
        zeros = tuple(
            sorted(
                (replace(z, theta_star=float(np.mod(z.theta_star - s, bf.T)),
                         bracket=(z.bracket[0] - s, z.bracket[1] - s)) for z in bf.zeros),
                key=lambda z: z.theta_star,
            )
        )
        return BifurcationFunction(bf.theta, values, zeros, bf.T, bf.rule, bf.panels, bf.evaluator, bf.shift + s)
    return _sampled(bf.evaluator, bf.T, m, bf.panels, shift=bf.shift + s)
