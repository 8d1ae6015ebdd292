"""Periodic solution of the adjoint variational equation along a cycle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCycle
from .odeflow import Trajectory, integrate_adjoint


@dataclass(frozen=True)
class AdjointCycle:
    z_traj: Trajectory
    perron_constant: float
    sign_factor: int

    def z(self, t):
        return self.z_traj(t)

    def scaled(self, k):
        """The same adjoint solution multiplied by a nonzero constant ``k``."""
        c = self.perron_constant * k
        return AdjointCycle(self.z_traj.scaled(k), c, int(np.sign(c)))


def _deterministic_sign(v):
    big = np.flatnonzero(np.abs(v) > 1e-8 * np.max(np.abs(v)))
    return -v if v[big[0]] < 0 else v


def periodic_adjoint(spec, cycle, tol=1e-11, gap_tol=1e-6) -> AdjointCycle:
    """Unit-norm T-periodic solution z0 of ``z' = -J(x0(t))^T z``.

    ``z0(0)`` spans the left eigenspace of the monodromy for multiplier 1,
    taken as the smallest right singular vector of ``M^T - I``.
    """
    n = spec.n
    M = cycle.monodromy
    _, sv, Vt = np.linalg.svd(M.T - np.eye(n))
    if n > 1 and sv[-2] <= gap_tol * max(1.0, sv[0]):
        raise DegenerateCycle(
            f"multiplier-1 left eigenspace is not one-dimensional (singular values {sv})"
        )
    v = _deterministic_sign(Vt[-1])
    # backward in time: the adjoint flow expands where the cycle contracts
    traj = integrate_adjoint(spec, cycle.trajectory, v, (0.0, cycle.T), tol, backward=True)
    norm0 = np.linalg.norm(traj.x[0])
    traj = traj.scaled(1.0 / norm0).with_period(cycle.T)
    c = float(spec.field(cycle.xi0) @ traj.x[0])
    if c == 0.0:
        raise DegenerateCycle("Perron constant vanishes")
    return AdjointCycle(traj, c, int(np.sign(c)))


def perron_residual(cycle, adj: AdjointCycle, samples=256) -> float:
    """max_t |<x0'(t), z0(t)> - c| / |c| over uniform sample times."""
    t = np.arange(samples) * (cycle.T / samples)
    dots = np.einsum("ij,ij->i", cycle.velocity(t), adj.z(t))
    # c taken from the same samples keeps the metric scale invariant
    c = adj.perron_constant
    return float(np.max(np.abs(dots - c)) / abs(c))
