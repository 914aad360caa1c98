"""Discrete space-time norms of trajectories and the reflection extension in time."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import Grid
from ..linearized.solver import Trajectory


@dataclass
class NormSet:
    v: float
    sigma: float
    theta: np.ndarray
    total: float


def _time_lp(level_values, dt, p):
    """L_p norm in time of nonnegative level values via the trapezoid rule."""
    a = np.asarray(level_values, dtype=float) ** p
    if a.shape[0] < 2:
        return 0.0
    return float((dt * (0.5 * a[0] + a[1:-1].sum(axis=0) + 0.5 * a[-1])) ** (1.0 / p))


def _step_lp(step_values, dt, p):
    """L_p norm in time of per-step values (piecewise constant in time)."""
    a = np.asarray(step_values, dtype=float) ** p
    return float((dt * a.sum(axis=0)) ** (1.0 / p))


def sobolev_norm(f, grid: Grid, order: int, q: float = 2.0):
    """W^{order,q} norm in space for each leading index of f (space on the last axis)."""
    parts = [np.abs(f)]
    if order >= 1:
        parts.append(np.abs(grid.d1(f)))
    if order >= 2:
        parts.append(np.abs(grid.d2(f)))
    total = sum(grid.integrate(a ** q) for a in parts)
    return total ** (1.0 / q)


def parabolic_norm(f, dt, grid: Grid, p=2.0, q=2.0):
    """||f||_{L_p(W^{2,q})} + ||d_t f||_{L_p(L_q)} for f of shape (L, M)."""
    space = _time_lp(sobolev_norm(f, grid, 2, q), dt, p)
    if f.shape[0] < 2:
        return space
    df = np.diff(f, axis=0) / dt
    return space + _step_lp(grid.lq_norm(df, q), dt, p)


def density_norm(f, dt, grid: Grid, p=2.0, q=2.0):
    """(||f||^p + ||d_t f||^p)^(1/p) with both parts in L_p(W^{1,q})."""
    a = _time_lp(sobolev_norm(f, grid, 1, q), dt, p)
    if f.shape[0] < 2:
        return a
    df = np.diff(f, axis=0) / dt
    b = _step_lp(sobolev_norm(df, grid, 1, q), dt, p)
    return float((a ** p + b ** p) ** (1.0 / p))


def discrete_norms(traj: Trajectory, grid: Grid, p: float = 2.0, q: float = 2.0) -> NormSet:
    dt = traj.dt
    nv = parabolic_norm(traj.v, dt, grid, p, q)
    ns = density_norm(traj.sigma, dt, grid, p, q)
    nt = np.array([parabolic_norm(traj.theta[:, :, k], dt, grid, p, q) for k in range(traj.theta.shape[-1])])
    return NormSet(v=nv, sigma=ns, theta=nt, total=float(nv + ns + nt.sum()))


def extend_in_time(f, T: float):
    """Extension of a function of time on [0, T] to the real line.

    Returns a callable equal to f on [0, T], to the mirror image f(2T - t)
    on (T, 2T] and to zero elsewhere.  Unless f(0) = 0 the result jumps at
    t = 0 and t = 2T.
    """
    def extended(t):
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        t_arr = np.atleast_1d(t_arr)
        out = None
        for i, ti in enumerate(t_arr):
            if 0.0 <= ti <= T:
                val = np.asarray(f(ti), dtype=float)
            elif T < ti <= 2 * T:
                val = np.asarray(f(2 * T - ti), dtype=float)
            else:
                val = None
            if out is None:
                probe = np.asarray(f(0.0), dtype=float)
                out = np.zeros((t_arr.size,) + probe.shape)
            if val is not None:
                out[i] = val
        return out[0] if scalar else out

    return extended
