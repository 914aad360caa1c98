"""Nonlinear right-hand sides of the linear system, evaluated at a Picard iterate.

Every term is kept separately in ``RHSBundle.terms`` so that the vanishing
structure (perturbation, gradient or flow-map factors) can be checked term
by term.
"""
from __future__ import annotations

import numpy as np

from ..algebra import FluxModel, build_bundle, ExemplaryFlux
from ..grid import Grid
from ..lagrangian import FlowLevel, FlowMapState, assemble_remainders
from ..mixture import NormalState, SpeciesParams, pressure_coefficients, psi_inverse
from .coefficients import FrozenCoefficients
from .solver import RHSBundle, Trajectory


def inverse_sigma_difference(sigma_w, sigma_w0):
    """1/Sigma - 1/Sigma0 written as (Sigma0 - Sigma) / (Sigma Sigma0)."""
    return (sigma_w0 - sigma_w) / (sigma_w * sigma_w0)


def divergence_coefficient_shift(sigma, rho_k, frozen_rho0_k, params: SpeciesParams):
    """A_k(rho) - gamma2_k, expanded so that every term carries a perturbation factor.

    Pointwise; ``sigma`` is the total-density perturbation and the density
    arrays have the species on the last axis.  Returns shape (..., n-1).
    """
    m = params.m
    rho0_k = np.asarray(frozen_rho0_k, dtype=float)
    rho_k = np.asarray(rho_k, dtype=float)
    rho0 = rho0_k.sum(axis=-1)
    sw = (m * rho_k).sum(axis=-1)
    sw0 = (m * rho0_k).sum(axis=-1)
    ds = rho_k[..., 1:] - rho0_k[..., 1:]
    inv = inverse_sigma_difference(sw, sw0)
    return (ds
            - m[1:] * rho0_k[..., 1:] * (rho0 * inv)[..., None]
            - (m[1:] / sw[..., None]) * (rho_k[..., 1:] * np.asarray(sigma)[..., None] + rho0[..., None] * ds))


def relaxation_shift(rho_k, frozen_rho0_k, params: SpeciesParams):
    """R(rho) - R(rho0), expanded so that every term carries a perturbation factor."""
    m = params.m
    rho0_k = np.asarray(frozen_rho0_k, dtype=float)
    rho_k = np.asarray(rho_k, dtype=float)
    sw = (m * rho_k).sum(axis=-1)
    sw0 = (m * rho0_k).sum(axis=-1)
    ds = rho_k[..., 1:] - rho0_k[..., 1:]
    inv = inverse_sigma_difference(sw, sw0)
    mm = m[1:, None] * m[None, 1:]
    r0 = rho0_k[..., 1:]
    r = rho_k[..., 1:]
    shift = -mm * (
        (r0[..., :, None] * r0[..., None, :]) * inv[..., None, None]
        + (r0[..., :, None] * ds[..., None, :] + r[..., None, :] * ds[..., :, None]) / sw[..., None, None]
    )
    idx = np.arange(params.n - 1)
    shift[..., idx, idx] += m[1:] * ds
    return shift


class LevelEvaluator:
    """Nonlinear quantities of an iterate at individual time levels."""

    def __init__(self, frozen: FrozenCoefficients, params: SpeciesParams, grid: Grid,
                 flux_model: FluxModel | None = None):
        self.frozen = frozen
        self.params = params
        self.grid = grid
        self.flux_model = flux_model or ExemplaryFlux()
        self.grad_rho0 = grid.d1(frozen.rho0)

    def __call__(self, sigma, v, theta, level: FlowLevel) -> dict:
        fr, params, g = self.frozen, self.params, self.grid
        m = params.m
        eta = fr.rho0 + sigma
        rho_k = psi_inverse(NormalState(eta, theta), params).rho_k
        bundle = build_bundle(rho_k, params, self.flux_model)
        rem = assemble_remainders(eta, v, theta, level, params, g, rho_k=rho_k, B=bundle.B)
        sw = (m * rho_k).sum(axis=-1)
        inv = inverse_sigma_difference(sw, fr.sigma0)
        ds = rho_k[:, 1:] - fr.rho0_k[:, 1:]
        d_sigma = g.d1(sigma)
        d_theta = g.d1(theta, axis=0)
        div_v = g.div(v)

        f2 = {
            "R2": rem.R2,
            "sigma_inverse_shift": -fr.rho0 * d_sigma * inv,
            "rho0_gradient": -(eta / sw) * self.grad_rho0,
            "sigma_gradient": -(sigma / sw) * d_sigma,
            "theta_species_shift": -np.einsum("jl,jl->j", ds, d_theta),
            "theta_inverse_shift": np.einsum("jl,jl->j", m[1:] * fr.rho0_k[:, 1:] * (fr.rho0 * inv)[:, None], d_theta),
            "theta_product_shift": np.einsum(
                "jl,jl->j", (m[1:] / sw[:, None]) * (rho_k[:, 1:] * sigma[:, None] + fr.rho0[:, None] * ds), d_theta),
        }

        # normal derivative imposed by the boundary remainder, turned into d_y theta
        slope_b = rem.R4 * g.normals[:, None]
        dB = bundle.B - fr.B0
        faces = np.einsum("jkl,jl->jk", g.face_average(dB, axis=0), g.face_diff(theta, axis=0))
        bflux = np.einsum("bkl,bl->bk", dB[[0, -1]], slope_b)
        shift = divergence_coefficient_shift(sigma, rho_k, fr.rho0_k, params)
        f3 = {
            "R3": rem.R3,
            "divergence_shift": -shift * div_v[:, None],
            "diffusion_shift": g.fv_div(faces, bflux, axis=0),
        }
        return {
            "eta": eta,
            "rho_k": rho_k,
            "R1_factor": -eta * level.V0,
            "relaxation_shift": relaxation_shift(rho_k, fr.rho0_k, params),
            "f2": f2,
            "f3": f3,
            "R4": rem.R4,
            "B": bundle.B,
        }


def assemble_rhs(U: Trajectory, fm: FlowMapState, frozen: FrozenCoefficients, params: SpeciesParams,
                 grid: Grid, theta: float = 1.0, flux_model: FluxModel | None = None,
                 evaluator: LevelEvaluator | None = None) -> RHSBundle:
    """Right-hand sides for every time step of the iterate ``U``.

    Level terms are theta-averaged between the two ends of a step; terms
    carrying a time derivative use the theta-averaged coefficient times the
    difference quotient.  The continuity right-hand side uses the densities
    at the start of the step and the flow map at its end, which makes
    eta * (1 + k) exactly conserved by the discrete scheme.
    """
    ev = evaluator or LevelEvaluator(frozen, params, grid, flux_model)
    L = U.t.size
    dt = U.dt
    need = range(L) if theta < 1.0 else range(1, L)
    levels = {j: ev(U.sigma[j], U.v[j], U.theta[j], fm.level(j)) for j in need}

    steps = L - 1
    M, n = grid.M, params.n
    out = RHSBundle.zeros(steps, M, n, f4_form="reduced")
    term_arrays: dict = {}

    def put(name, s, value):
        arr = term_arrays.get(name)
        if arr is None:
            arr = term_arrays[name] = np.zeros((steps,) + np.shape(value))
        arr[s] = value

    div_v = grid.div(U.v, axis=-1)
    for s in range(steps):
        new = levels[s + 1]
        old = levels.get(s, new)

        def avg(key, sub=None):
            a = new[key] if sub is None else new[key][sub]
            b = old[key] if sub is None else old[key][sub]
            return theta * a + (1.0 - theta) * b

        div_theta = theta * div_v[s + 1] + (1.0 - theta) * div_v[s]
        r1 = -(frozen.rho0 + U.sigma[s]) * fm.level(s + 1).V0 * div_theta
        sd = -U.sigma[s] * div_theta
        put("f1.R1", s, r1)
        put("f1.sigma_divergence", s, sd)
        out.f1[s] = r1 + sd

        f2 = np.zeros(M)
        for name in new["f2"]:
            val = avg("f2", name)
            put(f"f2.{name}", s, val)
            f2 += val
        sigma_avg = theta * U.sigma[s + 1] + (1.0 - theta) * U.sigma[s]
        dv = (U.v[s + 1] - U.v[s]) / dt
        val = -sigma_avg * dv
        put("f2.sigma_time_derivative", s, val)
        out.f2[s] = f2 + val

        f3 = np.zeros((M, n - 1))
        for name in new["f3"]:
            val = avg("f3", name)
            put(f"f3.{name}", s, val)
            f3 += val
        shift = avg("relaxation_shift")
        dth = (U.theta[s + 1] - U.theta[s]) / dt
        val = -np.einsum("jkl,jl->jk", shift, dth)
        put("f3.relaxation_time_derivative", s, val)
        out.f3[s] = f3 + val

        out.f4[s] = avg("R4")
        put("f4.R4", s, out.f4[s])
    out.terms = term_arrays
    return out
