"""Flow-map bookkeeping and Lagrangian forms of the differential operators.

In one space dimension the displacement gradient k = int_0^t d_y v ds is a
scalar per node, the correction V = (1 + k)^-1 - 1 converts y-derivatives to
x-derivatives via d_x = (1 + V) d_y, and d_y V = V'(k) K2 with
K2 = int_0^t d_yy v ds.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import FluxModel, build_bundle
from .errors import DeltaBudgetExceeded
from .grid import Grid
from .mixture import NormalState, SpeciesParams, psi_inverse, pressure_coefficients

DEFAULT_DELTA = 0.1


def correction_matrix(k):
    """(I + k)^-1 - I for a stack of d x d displacement gradients."""
    k = np.asarray(k, dtype=float)
    eye = np.eye(k.shape[-1])
    return np.linalg.inv(eye + k) - eye


def correction_derivative(k):
    """Derivative of (I + k)^-1 - I with respect to k_ab, indexed [..., i, j, a, b]."""
    inv = np.linalg.inv(np.eye(np.shape(k)[-1]) + np.asarray(k, dtype=float))
    return -np.einsum("...ia,...bj->...ijab", inv, inv)


@dataclass
class FlowLevel:
    """Flow-map data at one time level."""

    kv: np.ndarray
    k2: np.ndarray

    @property
    def V0(self):
        return -self.kv / (1.0 + self.kv)

    @property
    def dV0(self):
        return -1.0 / (1.0 + self.kv) ** 2


@dataclass
class FlowMapState:
    t: np.ndarray
    kv: np.ndarray
    k2: np.ndarray
    displacement: np.ndarray
    delta_budget: np.ndarray
    delta: float = DEFAULT_DELTA

    @property
    def V0(self):
        return -self.kv / (1.0 + self.kv)

    @property
    def dV0(self):
        return -1.0 / (1.0 + self.kv) ** 2

    @property
    def jacobian(self):
        """det of the deformation gradient, 1 + k in one dimension."""
        return 1.0 + self.kv

    def level(self, j: int) -> FlowLevel:
        return FlowLevel(self.kv[j], self.k2[j])


def accumulate_flowmap(v_history, dt: float, grid: Grid, theta: float = 0.5,
                       delta: float = DEFAULT_DELTA, derivative=None) -> FlowMapState:
    """Integrate velocity snapshots into displacement, k and K2.

    ``theta`` = 0.5 is the trapezoid rule; other values weight the new level
    by theta, matching a theta time-stepping scheme.  ``derivative`` is the
    first-derivative operator used for d_y v (default: second-order
    differences at every node).
    """
    v = np.asarray(v_history, dtype=float)
    derivative = derivative or grid.d1
    dv = derivative(v, axis=-1)
    d2v = grid.d2(v, axis=-1)
    L = v.shape[0]

    def integrate(f):
        incr = dt * (theta * f[1:] + (1.0 - theta) * f[:-1])
        out = np.zeros_like(f)
        out[1:] = np.cumsum(incr, axis=0)
        return out

    kv = integrate(dv)
    k2 = integrate(d2v)
    disp = integrate(v)
    budget = integrate(np.max(np.abs(dv), axis=-1))
    t = dt * np.arange(L)
    over = np.nonzero(budget > delta)[0]
    if over.size:
        j = int(over[0])
        raise DeltaBudgetExceeded(float(t[j]), float(budget[j]), delta)
    return FlowMapState(t=t, kv=kv, k2=k2, displacement=disp, delta_budget=budget, delta=delta)


def laplacian_remainder(f, level: FlowLevel, grid: Grid, axis=-1):
    """Second- and first-order correction terms of the Lagrangian Laplacian."""
    V, dV = level.V0, level.dV0
    shape = [1] * np.ndim(f)
    shape[axis] = -1
    V, dV, K2 = (np.reshape(a, shape) for a in (V, dV, level.k2))
    second = (2 * V + V * V) * grid.d2(f, axis=axis)
    first = (dV * K2 + V * dV * K2) * grid.d1(f, axis=axis)
    return second, first


def divgrad_remainder(v, level: FlowLevel, grid: Grid, axis=-1):
    """Correction terms of grad(div v); equal to the Laplacian ones in one dimension."""
    V, dV, K2 = level.V0, level.dV0, level.k2
    d2 = grid.d2(v, axis=axis)
    second = V * d2 + V * d2 + V * V * d2
    first = dV * K2 * grid.d1(v, axis=axis) + V * dV * K2 * grid.d1(v, axis=axis)
    return second, first


def transformed_laplacian(f, level: FlowLevel, grid: Grid, axis=-1):
    second, first = laplacian_remainder(f, level, grid, axis)
    return grid.d2(f, axis=axis) + second + first


def transformed_divgrad(v, level: FlowLevel, grid: Grid):
    second, first = divgrad_remainder(v, level, grid)
    return grid.d2(v) + second + first


@dataclass
class RemainderSet:
    R1: np.ndarray
    R2: np.ndarray
    R3: np.ndarray
    R4: np.ndarray
    terms: dict = field(default_factory=dict, repr=False)


def assemble_remainders(eta, v, theta, level: FlowLevel, params: SpeciesParams, grid: Grid,
                        flux_model: FluxModel | None = None, rho_k=None, B=None) -> RemainderSet:
    """Nonlinear remainders of the Lagrangian system at one time level.

    ``eta`` is the total density, ``theta`` the (M, n-1) log-ratio fields.
    Species densities and the diffusion matrix are computed when not given.
    R4 has shape (2, n-1): rows are the boundaries y=0 and y=1, in the
    reduced form (normal derivative of the log-ratio variables).
    """
    eta = np.asarray(eta, dtype=float)
    v = np.asarray(v, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if rho_k is None:
        rho_k = psi_inverse(NormalState(eta, theta), params).rho_k
    if B is None:
        B = build_bundle(rho_k, params, flux_model).B
    V, dV, K2 = level.V0, level.dV0, level.k2
    sigma_w = (params.m * rho_k).sum(axis=-1)
    _, A = pressure_coefficients(rho_k, params)
    div_v = grid.div(v)

    R1 = -eta * V * div_v

    lap2, lap1 = laplacian_remainder(v, level, grid)
    dg2, dg1 = divgrad_remainder(v, level, grid)
    visc = params.mu * (lap2 + lap1) + (params.mu + params.nu) * (dg2 + dg1)
    d_eta = grid.d1(eta)
    d_theta = grid.d1(theta, axis=0)
    press_eta = -(eta / sigma_w) * V * d_eta
    press_theta = -V * np.einsum("jl,jl->j", A, d_theta)
    R2 = visc + press_eta + press_theta

    stretch = (2 * V + V * V)[:, None]
    bend = ((1 + V) * dV * K2)[:, None]
    d2_theta = grid.d2(theta, axis=0)
    dB = grid.d1(B, axis=0)
    diff_terms = np.einsum("jkl,jl->jk", B, stretch * d2_theta + bend * d_theta)
    diff_terms += stretch * np.einsum("jkl,jl->jk", dB, d_theta)
    div_term = -A * (V * div_v)[:, None]
    R3 = diff_terms + div_term

    V_b = V[[0, -1]]
    R4 = -V_b[:, None] * grid.boundary_slope(theta, axis=0)

    terms = {
        "R2_viscous": visc,
        "R2_pressure_eta": press_eta,
        "R2_pressure_theta": press_theta,
        "R3_diffusion": diff_terms,
        "R3_divergence": div_term,
    }
    return RemainderSet(R1=R1, R2=R2, R3=R3, R4=R4, terms=terms)
